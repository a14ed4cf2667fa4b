"""Dense multi-index tensors over a fixed dimension N.

Entries are exact rationals (fractions.Fraction) or Python floats; every
operation is closed over whichever scalar type the operands carry (integer
entries, e.g. from Kronecker deltas, combine freely with both).

Layout: a tensor of valence (p, q) stores its N**(p+q) entries in one flat
list, row-major over the written index order with the upper indices first.

Bracket conventions used throughout the package:

* an alternated index pair ``[a...b]`` is the plain difference
  ``t[..a..b..] - t[..b..a..]`` with *no* 1/2 factor; indices written between
  the pair are inert,
* the symmetrized pair is the half-sum (``factor_free=True`` gives the plain
  sum, which one family of formulas needs).
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence


class GeoinvError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(GeoinvError):
    """Operands have incompatible dimension, valence or data length."""


class IndexKindError(GeoinvError):
    """An index slot was addressed with the wrong kind or out of range."""


class Tensor:
    """A dense tensor: dimension, valence (p, q), flat row-major data."""

    __slots__ = ("dim", "p", "q", "data")

    def __init__(self, dim: int, valence: tuple[int, int], data: list):
        p, q = valence
        if dim < 1 or p < 0 or q < 0:
            raise ShapeError(f"bad tensor shape: dim={dim}, valence={valence}")
        if len(data) != dim ** (p + q):
            raise ShapeError(
                f"data length {len(data)} != {dim}**{p + q} for valence {valence}"
            )
        self.dim = dim
        self.p = p
        self.q = q
        self.data = data

    @property
    def valence(self) -> tuple[int, int]:
        return (self.p, self.q)

    @property
    def rank(self) -> int:
        return self.p + self.q

    def offset(self, idx: Sequence[int]) -> int:
        off = 0
        for i in idx:
            off = off * self.dim + i
        return off

    def __getitem__(self, idx) -> object:
        if isinstance(idx, int):
            idx = (idx,)
        return self.data[self.offset(idx)]

    def indices(self) -> Iterable[tuple[int, ...]]:
        return product(range(self.dim), repeat=self.rank)

    def copy(self) -> "Tensor":
        return Tensor(self.dim, self.valence, list(self.data))

    def max_abs(self):
        return max((abs(x) for x in self.data), default=0)

    def is_zero(self, tol=0) -> bool:
        return all(abs(x) <= tol for x in self.data)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.dim == other.dim
            and self.valence == other.valence
            and all(a == b for a, b in zip(self.data, other.data))
        )

    def __repr__(self) -> str:
        return f"Tensor(dim={self.dim}, valence={self.valence})"


def zeros(dim: int, valence: tuple[int, int]) -> Tensor:
    return Tensor(dim, valence, [0] * dim ** sum(valence))


def delta(dim: int) -> Tensor:
    """Kronecker delta as a (1,1) tensor with integer entries."""
    d = zeros(dim, (1, 1))
    for i in range(dim):
        d.data[i * dim + i] = 1
    return d


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.dim != b.dim or a.valence != b.valence:
        raise ShapeError(f"shape mismatch: {a!r} vs {b!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    return Tensor(a.dim, a.valence, [x + y for x, y in zip(a.data, b.data)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    return Tensor(a.dim, a.valence, [x - y for x, y in zip(a.data, b.data)])


def scale(a: Tensor, c) -> Tensor:
    return Tensor(a.dim, a.valence, [c * x for x in a.data])


def add_scaled(a: Tensor, c, b: Tensor) -> Tensor:
    """a + c*b in one pass (the pipeline's inner loops live on this)."""
    _check_same_shape(a, b)
    return Tensor(a.dim, a.valence, [x + c * y for x, y in zip(a.data, b.data)])


def outer(a: Tensor, b: Tensor) -> Tensor:
    """Tensor product; the result's uppers are a's then b's, same for lowers."""
    if a.dim != b.dim:
        raise ShapeError("outer: dimension mismatch")
    la = _letters(a.rank, 0)
    lb = _letters(b.rank, a.rank)
    ua, qa = la[: a.p], la[a.p :]
    ub, qb = lb[: b.p], lb[b.p :]
    return ein(
        f"{la},{lb}->{ua + ub + qa + qb}", (a.p + b.p, a.q + b.q), a, b
    )


def contract(t: Tensor, upper: int, lower: int) -> Tensor:
    """Contract one upper slot against one lower slot (positions within kind)."""
    if not (0 <= upper < t.p and 0 <= lower < t.q):
        raise IndexKindError(
            f"contract: upper {upper} / lower {lower} out of range for valence {t.valence}"
        )
    letters = list(_letters(t.rank, 0))
    letters[t.p + lower] = letters[upper]
    out = [c for k, c in enumerate(letters) if k != upper and k != t.p + lower]
    return ein(f"{''.join(letters)}->{''.join(out)}", (t.p - 1, t.q - 1), t)


def _check_pair(t: Tensor, a: int, b: int) -> None:
    r = t.rank
    if not (0 <= a < r and 0 <= b < r) or a == b:
        raise IndexKindError(f"bad slot pair ({a}, {b}) for rank {r}")
    ka = a < t.p
    kb = b < t.p
    if ka != kb:
        raise IndexKindError(
            f"slots {a} and {b} are of different kinds (valence {t.valence})"
        )


def transpose_pair(t: Tensor, a: int, b: int) -> Tensor:
    _check_pair(t, a, b)
    src = _letters(t.rank, 0)
    out = list(src)
    out[a], out[b] = out[b], out[a]
    return ein(f"{src}->{''.join(out)}", t.valence, t)


def alternate(t: Tensor, a: int, b: int) -> Tensor:
    """t[..a..b..] - t[..b..a..]; no 1/2."""
    return sub(t, transpose_pair(t, a, b))


def sym_pair(t: Tensor, a: int, b: int, factor_free: bool = False) -> Tensor:
    """Half-sum over a slot pair; plain sum when factor_free is set."""
    s = add(t, transpose_pair(t, a, b))
    if factor_free:
        return s
    return scale(s, Fraction(1, 2) if _exactish(s) else 0.5)


def _exactish(t: Tensor) -> bool:
    # ints count as exact; one float entry makes the whole tensor float-mode
    return not any(isinstance(x, float) for x in t.data)


_LETTER_POOL = "abcdefghijklmnopqrstuvwxyz"


def _letters(n: int, start: int) -> str:
    return _LETTER_POOL[start : start + n]


# ---------------------------------------------------------------------------
# Minimal einsum over flat lists.
#
# Works for exact rationals, which numpy cannot do; offset plans are cached
# per (subscripts, dim, ranks) so repeated formula evaluation costs one flat
# multiply-add loop.

_PLAN_CACHE: dict = {}


def _build_plan(expr: str, dim: int, ranks: tuple[int, ...]):
    try:
        ins_s, out_s = expr.split("->")
        ins = ins_s.split(",")
    except ValueError:  # pragma: no cover - programming error, not user input
        raise IndexKindError(f"bad einsum subscripts: {expr!r}")
    if len(ins) != len(ranks):
        raise IndexKindError(f"{expr!r}: expected {len(ranks)} operands")
    for s, r in zip(ins, ranks):
        if len(s) != r:
            raise IndexKindError(f"{expr!r}: operand rank mismatch ({s!r} vs rank {r})")
    seen: list[str] = []
    for s in ins:
        for c in s:
            if c not in seen:
                seen.append(c)
    for c in out_s:
        if c not in seen:
            raise IndexKindError(f"{expr!r}: output index {c!r} not in inputs")
        if out_s.count(c) > 1:
            raise IndexKindError(f"{expr!r}: repeated output index {c!r}")
    letters = list(out_s) + [c for c in seen if c not in out_s]
    n_out = dim ** len(out_s)
    plan = []
    for assign in product(range(dim), repeat=len(letters)):
        env = dict(zip(letters, assign))
        o = 0
        for c in out_s:
            o = o * dim + env[c]
        offs = []
        for s in ins:
            k = 0
            for c in s:
                k = k * dim + env[c]
            offs.append(k)
        plan.append((o, offs))
    return n_out, plan


def ein(expr: str, out_valence: tuple[int, int], *tensors: Tensor) -> Tensor:
    """Einstein sum over flat data; caller states the output valence."""
    if not tensors:
        raise IndexKindError("ein: needs at least one operand")
    dim = tensors[0].dim
    for t in tensors:
        if t.dim != dim:
            raise ShapeError("ein: dimension mismatch")
    key = (expr, dim, tuple(t.rank for t in tensors))
    cached = _PLAN_CACHE.get(key)
    if cached is None:
        cached = _PLAN_CACHE[key] = _build_plan(expr, dim, key[2])
    n_out, plan = cached
    out = [0] * n_out
    if len(tensors) == 1:
        d0 = tensors[0].data
        for o, offs in plan:
            out[o] += d0[offs[0]]
    elif len(tensors) == 2:
        d0 = tensors[0].data
        d1 = tensors[1].data
        for o, offs in plan:
            out[o] += d0[offs[0]] * d1[offs[1]]
    else:
        datas = [t.data for t in tensors]
        for o, offs in plan:
            term = datas[0][offs[0]]
            for d, k in zip(datas[1:], offs[1:]):
                term = term * d[k]
            out[o] += term
    if dim ** sum(out_valence) != n_out:
        raise ShapeError(f"ein: output valence {out_valence} disagrees with {expr!r}")
    return Tensor(dim, out_valence, out)


def max_abs_diff(a: Tensor, b: Tensor):
    _check_same_shape(a, b)
    return max((abs(x - y) for x, y in zip(a.data, b.data)), default=0)
