"""First-order jets of tensor fields at a point.

A JetTensor packs the value of a field and its partial derivatives there:
``grad`` has one extra trailing lower slot (the derivative index).  No second
derivatives are carried anywhere in the package; every formula that looks
like it needs them has been arranged not to.
"""

from __future__ import annotations

from . import tensor_core as tc
from .tensor_core import ShapeError, Tensor


class JetTensor:
    __slots__ = ("value", "grad")

    def __init__(self, value: Tensor, grad: Tensor):
        if grad.dim != value.dim or grad.valence != (value.p, value.q + 1):
            raise ShapeError(
                f"jet grad valence {grad.valence} does not extend value valence "
                f"{value.valence}"
            )
        self.value = value
        self.grad = grad

    @property
    def dim(self) -> int:
        return self.value.dim

    @property
    def valence(self) -> tuple[int, int]:
        return self.value.valence

    def __repr__(self) -> str:
        return f"JetTensor(dim={self.dim}, valence={self.valence})"


def constant_jet(value: Tensor) -> JetTensor:
    """Jet of a field that is constant near the point (vanishing gradient)."""
    return JetTensor(value, tc.zeros(value.dim, (value.p, value.q + 1)))


def zero_jet(dim: int, valence: tuple[int, int]) -> JetTensor:
    return constant_jet(tc.zeros(dim, valence))


def jet_add(a: JetTensor, b: JetTensor) -> JetTensor:
    return JetTensor(tc.add(a.value, b.value), tc.add(a.grad, b.grad))


def jet_sub(a: JetTensor, b: JetTensor) -> JetTensor:
    return JetTensor(tc.sub(a.value, b.value), tc.sub(a.grad, b.grad))


def jet_scale(a: JetTensor, c) -> JetTensor:
    return JetTensor(tc.scale(a.value, c), tc.scale(a.grad, c))


def jet_mul(a: JetTensor, b: JetTensor) -> JetTensor:
    """Outer product of jets; the gradient follows the Leibniz rule."""
    pa, qa = a.valence
    pb, qb = b.valence
    la = tc._letters(pa + qa, 0)
    lb = tc._letters(pb + qb, pa + qa)
    k = tc._letters(1, pa + qa + pb + qb)
    out = la[:pa] + lb[:pb] + la[pa:] + lb[pb:]
    valence = (pa + pb, qa + qb)
    value = tc.ein(f"{la},{lb}->{out}", valence, a.value, b.value)
    gvalence = (valence[0], valence[1] + 1)
    g = tc.add(
        tc.ein(f"{la}{k},{lb}->{out}{k}", gvalence, a.grad, b.value),
        tc.ein(f"{la},{lb}{k}->{out}{k}", gvalence, a.value, b.grad),
    )
    return JetTensor(value, g)


def jet_contract(t: JetTensor, upper: int, lower: int) -> JetTensor:
    # the trailing derivative slot sits after the value's lowers, so the
    # same (upper, lower) addresses work on both components
    return JetTensor(
        tc.contract(t.value, upper, lower), tc.contract(t.grad, upper, lower)
    )


def jet_transpose_pair(t: JetTensor, a: int, b: int) -> JetTensor:
    return JetTensor(
        tc.transpose_pair(t.value, a, b), tc.transpose_pair(t.grad, a, b)
    )


def jet_alternate(t: JetTensor, a: int, b: int) -> JetTensor:
    return JetTensor(tc.alternate(t.value, a, b), tc.alternate(t.grad, a, b))


def jet_sym_pair(t: JetTensor, a: int, b: int, factor_free: bool = False) -> JetTensor:
    return JetTensor(
        tc.sym_pair(t.value, a, b, factor_free),
        tc.sym_pair(t.grad, a, b, factor_free),
    )


def covariant_derivative(t: JetTensor, gamma) -> Tensor:
    """Covariant derivative of a jet against a symmetric connection.

    One +Gamma term per upper slot, one -Gamma term per lower slot, on top of
    the stored partials; returns a plain tensor of valence (p, q+1) — the
    result carries no jet because second derivatives are not available.
    ``gamma`` may be the connection's jet or just its value tensor.
    """
    g = gamma.value if isinstance(gamma, JetTensor) else gamma
    if g.valence != (1, 2):
        raise ShapeError(f"connection must be (1,2), got {g.valence}")
    p, q = t.valence
    r = p + q
    letters = tc._letters(r, 0)
    kk = tc._LETTER_POOL[r]
    zz = tc._LETTER_POOL[r + 1]
    out = letters + kk
    out_val = (p, q + 1)
    res = t.grad
    for s in range(r):
        src = letters[:s] + zz + letters[s + 1 :]
        if s < p:
            term = tc.ein(f"{letters[s]}{zz}{kk},{src}->{out}", out_val, g, t.value)
            res = tc.add(res, term)
        else:
            term = tc.ein(f"{zz}{letters[s]}{kk},{src}->{out}", out_val, g, t.value)
            res = tc.sub(res, term)
    return res
