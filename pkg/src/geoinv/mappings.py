"""Mappings between connection spaces and their random instances.

A mapping instance holds one source connection jet plus the field data of the
transformation rule; the target connection is always *derived* from those by
``build_target_connection``, so source and target are consistent by
construction.  Three families are supported:

* ``general``  — the full three-flag rule (trace shift, endomorphism pair,
  symmetric object), plus an antisymmetric torsion deformation,
* ``geodesic`` — the trace-shift rule alone (flags (1,0,0), no torsion change),
* ``agm3``     — the third-type almost-geodesic family: the symmetric object
  is built from a symmetric bilinear form and a vector field whose derivative
  is constrained by two scalar parameters.

Generators draw every entry from the lattice {k/16 : |k| <= 16}, so rational
instances are exact and float instances are dyadic (bit-stable).  Two curl
constraints are enforced exactly — the trace-shift covector and the
deformation-trace difference both have symmetric gradients' worth of freedom
removed — because the skew parts of the Ricci tensor and of the rho tensor
are only mapping-invariant under those conditions; fully free jets would
break invariances the rest of the package certifies.
"""

from __future__ import annotations

import random
from fractions import Fraction

from . import tensor_core as tc
from .connection import ConnectionSpace
from .jet import (
    JetTensor,
    constant_jet,
    jet_add,
    jet_contract,
    jet_mul,
    jet_scale,
    jet_sub,
    jet_sym_pair,
    zero_jet,
)
from .tensor_core import GeoinvError, Tensor


class InstanceError(GeoinvError):
    """A mapping instance is malformed or internally inconsistent."""


class DegenerateError(GeoinvError):
    """Generated or supplied data is too degenerate for the operation."""


class NotApplicableError(GeoinvError):
    """The requested quantity is undefined for this instance's flags."""


MAPPINGS = ("general", "geodesic", "agm3")
MODES = ("rational", "float")


def coeff(mode: str):
    """Scalar constructor for formula coefficients in the given mode."""
    if mode == "rational":
        return lambda num, den=1: Fraction(num, den)
    return lambda num, den=1: num / den


def curl(w: JetTensor) -> Tensor:
    """w_m,n - w_n,m for a covector jet."""
    return tc.alternate(w.grad, 0, 1)


def _pair_sym(t: JetTensor) -> JetTensor:
    """t^i_jk + t^i_kj (factor-free) — the shape every rule term takes."""
    return jet_sym_pair(t, 1, 2, factor_free=True)


class AGMData:
    """Per-space data of a third-type almost-geodesic mapping."""

    __slots__ = ("sigma", "phi", "nu", "mu", "p")

    def __init__(self, sigma: JetTensor, phi: JetTensor, nu: Tensor, mu, p: int):
        self.sigma = sigma  # (0,2) symmetric jet
        self.phi = phi      # (1,0) jet
        self.nu = nu        # (0,1) value
        self.mu = mu        # scalar
        self.p = p


class SpaceFields:
    """One side of a mapping: its connection space plus the rule's fields.

    The deformation source B, its trace b, the reduced trace and the omega
    tensor are computed once on first use and shared by every invariant.
    """

    def __init__(self, space: ConnectionSpace, flags, mode: str,
                 sigma: JetTensor | None = None, f: JetTensor | None = None,
                 phi_obj: JetTensor | None = None, agm: AGMData | None = None):
        self.space = space
        self.flags = tuple(flags)
        self.mode = mode
        N = space.dim
        self.sigma = sigma if sigma is not None else zero_jet(N, (0, 1))
        self.f = f if f is not None else zero_jet(N, (1, 1))
        self.phi_obj = phi_obj if phi_obj is not None else zero_jet(N, (1, 2))
        self.agm = agm
        self._cache: dict = {}

    @property
    def dim(self) -> int:
        return self.space.dim

    def _cached(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def B(self) -> JetTensor:
        """Deformation source: the flag-gated symmetric rule terms of this side."""
        def make():
            s1, s2, s3 = self.flags
            out = zero_jet(self.dim, (1, 2))
            if s2:
                out = jet_add(out, _pair_sym(jet_mul(self.f, self.sigma)))
            if s3:
                out = jet_add(out, self.phi_obj)
            return out
        return self._cached("B", make)

    @property
    def b(self) -> JetTensor:
        return self._cached("b", lambda: jet_contract(self.B, 0, 0))

    @property
    def theta_tilde(self) -> JetTensor:
        return self._cached(
            "theta_tilde", lambda: jet_sub(self.space.theta, self.b)
        )

    @property
    def omega(self) -> JetTensor:
        def make():
            C = coeff(self.mode)
            dt = _pair_sym(jet_mul(constant_jet(tc.delta(self.dim)), self.theta_tilde))
            return jet_add(self.B, jet_scale(dt, C(1, self.dim + 1)))
        return self._cached("omega", make)


def omega(fields: SpaceFields) -> JetTensor:
    """The reducing tensor of this side: B plus the delta/trace completion."""
    return fields.omega


class MappingInstance:
    def __init__(self, dim: int, mode: str, flags, mapping: str,
                 fields: dict[str, JetTensor], p: int | None = None,
                 seed: int | None = None):
        self.dim = dim
        self.mode = mode
        self.flags = tuple(flags)
        self.mapping = mapping
        self.fields = fields
        self.p = p
        self.seed = seed
        self._source: SpaceFields | None = None
        self._target: SpaceFields | None = None
        self._target_L: JetTensor | None = None
        self._agm_fit = None

    # -- field access -----------------------------------------------------

    def field(self, name: str, valence: tuple[int, int]) -> JetTensor:
        t = self.fields.get(name)
        return t if t is not None else zero_jet(self.dim, valence)

    def validate(self) -> None:
        if self.dim < 2:
            raise InstanceError(f"dimension must be >= 2, got {self.dim}")
        if self.mode not in MODES:
            raise InstanceError(f"unknown mode {self.mode!r}")
        if self.mapping not in MAPPINGS:
            raise InstanceError(f"unknown mapping {self.mapping!r}")
        if any(s not in (0, 1) for s in self.flags) or len(self.flags) != 3:
            raise InstanceError(f"flags must be three 0/1 values, got {self.flags}")
        if "L" not in self.fields:
            raise InstanceError("instance has no connection field 'L'")
        expected: dict[str, tuple[int, int]] = {
            "L": (1, 2), "u": (0, 1), "u_bar": (0, 1),
            "phi_obj": (1, 2), "phi_obj_bar": (1, 2),
        }
        if self.mapping == "agm3":
            if self.flags != (1, 0, 1):
                raise InstanceError("agm3 instances fix flags (1,0,1)")
            if self.p not in (1, 2):
                raise InstanceError(f"agm3 requires p in {{1,2}}, got {self.p}")
            expected.update({"sigma": (0, 2), "phi": (1, 0),
                             "nu": (0, 1), "mu": (0, 0)})
        else:
            expected.update({"sigma": (0, 1), "sigma_bar": (0, 1),
                             "f": (1, 1), "f_bar": (1, 1), "xi": (1, 2)})
            if self.mapping == "geodesic" and self.flags[1:] != (0, 0):
                raise InstanceError("geodesic instances have s2 = s3 = 0")
        for name, t in self.fields.items():
            if name not in expected:
                raise InstanceError(f"unexpected field {name!r} for {self.mapping}")
            if t.dim != self.dim:
                raise InstanceError(f"field {name!r} has dimension {t.dim}")
            if t.valence != expected[name]:
                raise InstanceError(
                    f"field {name!r} has valence {t.valence}, expected {expected[name]}"
                )
        for name in ("phi_obj", "phi_obj_bar", "xi", "sigma"):
            t = self.fields.get(name)
            if t is None or t.valence == (0, 1):
                continue  # the general-rule sigma is a covector, nothing to check
            a, b = (1, 2) if t.valence == (1, 2) else (0, 1)
            flip = tc.transpose_pair(t.value, a, b)
            if name == "xi":
                bad = not tc.add(t.value, flip).is_zero()
            else:
                bad = not tc.sub(t.value, flip).is_zero()
            if bad:
                kind = "antisymmetric" if name == "xi" else "symmetric"
                raise InstanceError(f"field {name!r} must be {kind} in its lower pair")

    # -- derived objects ---------------------------------------------------

    def source_fields(self) -> SpaceFields:
        if self._source is None:
            space = ConnectionSpace(self.fields["L"])
            self._source = SpaceFields(
                space, self.flags, self.mode,
                sigma=self.fields.get("sigma") if self.mapping != "agm3" else None,
                f=self.fields.get("f"),
                phi_obj=self.fields.get("phi_obj"),
                agm=self._agm_block(space, source=True),
            )
        return self._source

    def target_fields(self) -> SpaceFields:
        if self._target is None:
            space = ConnectionSpace(self.target_connection())
            self._target = SpaceFields(
                space, self.flags, self.mode,
                sigma=self.fields.get("sigma_bar") if self.mapping != "agm3" else None,
                f=self.fields.get("f_bar"),
                phi_obj=self.fields.get("phi_obj_bar"),
                agm=self._agm_block(space, source=False),
            )
        return self._target

    def target_connection(self) -> JetTensor:
        if self._target_L is None:
            self._target_L = build_target_connection(self)
        return self._target_L

    def _agm_block(self, space: ConnectionSpace, source: bool) -> AGMData | None:
        if self.mapping != "agm3":
            return None
        sigma = self.fields["sigma"]
        phi = self.fields["phi"]
        if source:
            nu = self.fields["nu"].value
            mu = self.fields["mu"].value.data[0]
        else:
            # seen from the target side the bilinear form flips sign and the
            # scalar parameters are whatever its own connection induces
            sigma = jet_scale(sigma, -1)
            nu, mu, _res = fit_agm_parameters(phi, space.L, self.p, self.mode)
        return AGMData(sigma, phi, nu, mu, self.p)


def build_target_connection(inst: MappingInstance) -> JetTensor:
    """Apply the transformation rule to the source connection jet."""
    s1, s2, s3 = inst.flags
    N = inst.dim
    out = inst.fields["L"]
    if s1:
        psi = jet_sub(inst.field("u_bar", (0, 1)), inst.field("u", (0, 1)))
        out = jet_add(out, _pair_sym(jet_mul(constant_jet(tc.delta(N)), psi)))
    if s2:
        bar = _pair_sym(jet_mul(inst.field("f_bar", (1, 1)),
                                inst.field("sigma_bar", (0, 1))))
        unb = _pair_sym(jet_mul(inst.field("f", (1, 1)),
                                inst.field("sigma", (0, 1))))
        out = jet_add(out, jet_sub(bar, unb))
    if s3:
        out = jet_add(out, jet_sub(inst.field("phi_obj_bar", (1, 2)),
                                   inst.field("phi_obj", (1, 2))))
    if "xi" in inst.fields:
        out = jet_add(out, inst.fields["xi"])
    return out


def psi_residual(inst: MappingInstance) -> Tensor:
    """How far the trace-extracted covector is from the stored one.

    Zero (exactly, in rational mode) on every consistent instance; only
    defined when the trace-shift flag is on.
    """
    if inst.flags[0] != 1:
        raise NotApplicableError("psi is only defined when the first flag is set")
    C = coeff(inst.mode)
    src, tgt = inst.source_fields(), inst.target_fields()
    psi = tc.sub(inst.field("u_bar", (0, 1)).value, inst.field("u", (0, 1)).value)
    rhs = tc.sub(
        tc.sub(tgt.space.theta.value, src.space.theta.value),
        tc.sub(tgt.b.value, src.b.value),
    )
    return tc.sub(psi, tc.scale(rhs, C(1, inst.dim + 1)))


# ---------------------------------------------------------------------------
# generators


def _lattice(r: random.Random) -> int:
    return r.randrange(-16, 17)


def _conv(mode: str):
    if mode == "rational":
        return lambda k: Fraction(k, 16)
    return lambda k: k / 16.0


def _draw(r, cv, dim, valence) -> Tensor:
    n = dim ** sum(valence)
    return Tensor(dim, valence, [cv(_lattice(r)) for _ in range(n)])


def _draw_jet(r, cv, dim, valence) -> JetTensor:
    v = _draw(r, cv, dim, valence)
    g = _draw(r, cv, dim, (valence[0], valence[1] + 1))
    return JetTensor(v, g)


def _solve(A: list[list], B: list[list]):
    """Gaussian elimination for both scalar modes; None when singular."""
    n = len(A)
    m = [row_a + row_b for row_a, row_b in zip(A, B)]
    w = len(m[0])
    for col in range(n):
        piv = None
        if isinstance(m[col][col], float) or any(
            isinstance(m[k][col], float) for k in range(col, n)
        ):
            best = -1.0
            for k in range(col, n):
                if abs(m[k][col]) > best:
                    best, piv = abs(m[k][col]), k
            if best == 0:
                return None
        else:
            for k in range(col, n):
                if m[k][col] != 0:
                    piv = k
                    break
            if piv is None:
                return None
        m[col], m[piv] = m[piv], m[col]
        inv = m[col][col]
        m[col] = [x / inv for x in m[col]]
        for k in range(n):
            if k != col and m[k][col] != 0:
                c = m[k][col]
                m[k] = [x - c * y for x, y in zip(m[k], m[col])]
    return [row[n:w] for row in m]


def generate(dim: int, seed: int, flags=(1, 1, 1), mapping: str = "general",
             mode: str = "rational") -> MappingInstance:
    """Draw a consistent random instance of the general or geodesic rule.

    Field data is free lattice noise except for two exact constraints: the
    trace-shift covector gets a symmetric gradient (its curl would otherwise
    move the skew Ricci tensor), and the barred deformation gradient is
    corrected so the deformation-trace difference is curl-free (which the
    skew rho tensor needs).  Fixed (dim, seed, flags) reproduce the instance
    bit for bit.
    """
    if mapping == "geodesic":
        flags = (1, 0, 0)
    flags = tuple(int(s) for s in flags)
    if mapping not in ("general", "geodesic"):
        raise InstanceError(f"generate() handles general/geodesic, not {mapping!r}")
    s1, s2, s3 = flags
    r = random.Random(f"geoinv:{mapping}:{dim}:{seed}:{s1}{s2}{s3}")
    cv = _conv(mode)
    C = coeff(mode)

    L = _draw_jet(r, cv, dim, (1, 2))
    u = _draw_jet(r, cv, dim, (0, 1))
    u_bar_v = _draw(r, cv, dim, (0, 1))
    sym_shift = tc.sym_pair(_draw(r, cv, dim, (0, 2)), 0, 1, factor_free=True)
    u_bar = JetTensor(u_bar_v, tc.add(u.grad, sym_shift))

    sigma = _draw_jet(r, cv, dim, (0, 1))
    sigma_bar = _draw_jet(r, cv, dim, (0, 1))
    f = _draw_jet(r, cv, dim, (1, 1))
    f_bar = _draw_jet(r, cv, dim, (1, 1))
    if s2 and not s3:
        # the curl fix below solves against f_bar + trace(f_bar)*delta; nudge
        # the trace until that matrix is invertible (deterministic)
        for bump in range(1, 64):
            M = _rule_matrix(f_bar.value)
            if _solve(M, [[C(0)] * dim for _ in range(dim)]) is not None:
                break
            f_bar = JetTensor(
                tc.add_scaled(f_bar.value, C(1, 16), tc.delta(dim)), f_bar.grad
            )
        else:  # pragma: no cover
            raise DegenerateError("could not make the trace-fix system regular")

    phi_obj = jet_sym_pair(_draw_jet(r, cv, dim, (1, 2)), 1, 2)
    phi_obj_bar = jet_sym_pair(_draw_jet(r, cv, dim, (1, 2)), 1, 2)
    xi_raw = _draw_jet(r, cv, dim, (1, 2))
    xi = jet_scale(
        JetTensor(tc.alternate(xi_raw.value, 1, 2), tc.alternate(xi_raw.grad, 1, 2)),
        C(1, 2),
    )
    if mapping == "geodesic":
        fields = {"L": L, "u": u, "u_bar": u_bar}
        return MappingInstance(dim, mode, flags, mapping, fields, seed=seed)

    # -- exact curl fix for the deformation-trace difference ---------------
    def b_of(fj, sj, pj) -> JetTensor:
        out = zero_jet(dim, (1, 2))
        if s2:
            out = jet_add(out, _pair_sym(jet_mul(fj, sj)))
        if s3:
            out = jet_add(out, pj)
        return jet_contract(out, 0, 0)

    eps = tc.sub(curl(b_of(f_bar, sigma_bar, phi_obj_bar)),
                 curl(b_of(f, sigma, phi_obj)))
    if not eps.is_zero():
        V = tc.scale(eps, C(-1, 2))
        if s3:
            # shift the barred object's gradient by a delta-shaped correction
            # whose trace is exactly V
            dlt = tc.delta(dim)
            G = tc.add(tc.ein("ij,kn->ijkn", (1, 3), dlt, V),
                       tc.ein("ik,jn->ijkn", (1, 3), dlt, V))
            phi_obj_bar = JetTensor(
                phi_obj_bar.value,
                tc.add_scaled(phi_obj_bar.grad, C(1, dim + 1), G),
            )
        elif s2:
            H = [[V[(k, n)] for n in range(dim)] for k in range(dim)]
            G = _solve(_rule_matrix(f_bar.value), H)
            if G is None:  # pragma: no cover - excluded by the bump loop
                raise DegenerateError("curl-fix system became singular")
            shift = Tensor(dim, (0, 2),
                           [G[a][n] for a in range(dim) for n in range(dim)])
            sigma_bar = JetTensor(sigma_bar.value, tc.add(sigma_bar.grad, shift))
        else:  # pragma: no cover - b vanishes identically when s2 = s3 = 0
            raise DegenerateError("unexpected trace curl with no deformation source")

    fields = {"L": L, "u": u, "u_bar": u_bar, "sigma": sigma,
              "sigma_bar": sigma_bar, "f": f, "f_bar": f_bar,
              "phi_obj": phi_obj, "phi_obj_bar": phi_obj_bar, "xi": xi}
    return MappingInstance(dim, mode, flags, "general", fields, seed=seed)


def _rule_matrix(fv: Tensor) -> list[list]:
    """Rows k, columns a of f^a_k + tr(f) d^a_k (the curl-fix system)."""
    dim = fv.dim
    tr = sum(fv[(a, a)] for a in range(dim))
    return [
        [fv[(a, k)] + (tr if a == k else 0) for a in range(dim)]
        for k in range(dim)
    ]


def _sym_with_product(r, cv, dim, phi_v: Tensor, target: list, v_cov: list):
    """Draw a symmetric matrix S with S.phi exactly equal to ``target``.

    Rank-two correction of a free symmetric draw: with v a covector dual to
    phi (v.phi = 1), S = S0 + a (x) v + v (x) a lands on the target while
    staying symmetric.  Used for both the value and each gradient slice of
    the agm3 bilinear form.
    """
    half = 0.5 if any(isinstance(x, float) for x in target) else Fraction(1, 2)
    S0 = tc.sym_pair(_draw(r, cv, dim, (0, 2)), 0, 1)
    res = [target[j] - sum(S0[(j, a)] * phi_v[(a,)] for a in range(dim))
           for j in range(dim)]
    rphi = sum(res[a] * phi_v[(a,)] for a in range(dim))
    a_vec = [res[j] - rphi * half * v_cov[j] for j in range(dim)]
    data = [
        S0[(j, k)] + a_vec[j] * v_cov[k] + v_cov[j] * a_vec[k]
        for j in range(dim) for k in range(dim)
    ]
    return Tensor(dim, (0, 2), data)


def generate_agm3(dim: int, seed: int, p: int = 1,
                  mode: str = "rational") -> MappingInstance:
    """Draw a consistent third-type almost-geodesic instance.

    The vector field's gradient is set from its defining derivative relation
    (so the parameter fit is exact), the trace-shift covector is curl-free,
    and the bilinear form is built so its contraction with the vector field
    has a symmetric gradient — the structural condition that makes the skew
    rho tensor vanish identically on both sides of this family.
    """
    if p not in (1, 2):
        raise InstanceError(f"p must be 1 or 2, got {p}")
    r = random.Random(f"geoinv:agm3:{dim}:{seed}:{p}")
    cv = _conv(mode)

    L = _draw_jet(r, cv, dim, (1, 2))
    u = _draw_jet(r, cv, dim, (0, 1))
    u_bar_v = _draw(r, cv, dim, (0, 1))
    sym_shift = tc.sym_pair(_draw(r, cv, dim, (0, 2)), 0, 1, factor_free=True)
    u_bar = JetTensor(u_bar_v, tc.add(u.grad, sym_shift))

    phi_v = _draw(r, cv, dim, (1, 0))
    if phi_v.is_zero():
        phi_v.data[0] = cv(16)  # keep the family non-degenerate
    nu = _draw(r, cv, dim, (0, 1))
    mu = cv(_lattice(r))

    # gradient fixed by the defining relation (full connection, order per p)
    Lv = L.value
    lterm = tc.ein("iaj,a->ij" if p == 1 else "ija,a->ij", (1, 1), Lv, phi_v)
    phi_g = tc.sub(
        tc.add(tc.ein("i,j->ij", (1, 1), phi_v, nu),
               tc.scale(tc.delta(dim), mu)),
        lterm,
    )
    phi = JetTensor(phi_v, phi_g)

    # dual covector for the rank-two corrections
    k_star = max(range(dim), key=lambda k: (abs(phi_v[(k,)]), -k))
    v_cov = [0] * dim
    v_cov[k_star] = 1 / phi_v[(k_star,)]

    # sigma: symmetric, with sigma.phi following a prescribed curl-free jet
    w_val = _draw(r, cv, dim, (0, 1))
    w_grad = tc.sym_pair(_draw(r, cv, dim, (0, 2)), 0, 1, factor_free=True)
    sigma_v = _sym_with_product(r, cv, dim, phi_v,
                                [w_val[(j,)] for j in range(dim)], v_cov=v_cov)
    grad_slices = []
    for n in range(dim):
        tgt = [
            w_grad[(j, n)]
            - sum(sigma_v[(j, a)] * phi_g[(a, n)] for a in range(dim))
            for j in range(dim)
        ]
        grad_slices.append(
            _sym_with_product(r, cv, dim, phi_v, tgt, v_cov=v_cov)
        )
    sigma_g = Tensor(
        dim, (0, 3),
        [grad_slices[n][(j, k)]
         for j in range(dim) for k in range(dim) for n in range(dim)],
    )
    sigma = JetTensor(sigma_v, sigma_g)

    C = coeff(mode)
    sig_phi = jet_mul(phi, sigma)  # (1,2): phi^i sigma_jk
    phi_obj = jet_scale(sig_phi, C(-1, 2))
    phi_obj_bar = jet_scale(sig_phi, C(1, 2))

    fields = {
        "L": L, "u": u, "u_bar": u_bar, "sigma": sigma, "phi": phi,
        "nu": constant_jet(nu), "mu": constant_jet(Tensor(dim, (0, 0), [mu])),
        "phi_obj": phi_obj, "phi_obj_bar": phi_obj_bar,
    }
    return MappingInstance(dim, mode, (1, 0, 1), "agm3", fields, p=p, seed=seed)


def vector_connection_derivative(phi: JetTensor, L, p: int,
                                 literal: bool = False) -> Tensor:
    """The kind-p connection derivative of a vector field.

    Kind 1 contracts the connection's middle lower slot with the vector,
    kind 2 the last one.  ``literal=True`` reproduces, for kind 2 only, the
    uncontracted diagnostic variant in which the connection term is summed
    over its last slot with no vector factor.
    """
    if p not in (1, 2):
        raise InstanceError(f"p must be 1 or 2, got {p}")
    Lv = L.value if isinstance(L, JetTensor) else L
    if literal:
        if p != 2:
            raise NotApplicableError("the literal variant only exists for p=2")
        return tc.add(phi.grad, tc.ein("ija->ij", (1, 1), Lv))
    lterm = tc.ein("iaj,a->ij" if p == 1 else "ija,a->ij", (1, 1), Lv,
                   phi.value)
    return tc.add(phi.grad, lterm)


def fit_agm_parameters(phi: JetTensor, L: JetTensor, p: int, mode: str):
    """Recover (nu, mu) from the defining derivative relation of the family.

    Solves phi^i_,j + L-term = nu_j phi^i + mu d^i_j for the pair — by exact
    elimination in rational mode, by least squares in float mode — and
    returns (nu, mu, max-abs residual of the reconstruction).
    """
    dim = phi.dim
    if p not in (1, 2):
        raise InstanceError(f"p must be 1 or 2, got {p}")
    M = vector_connection_derivative(phi, L, p)
    phi_v = phi.value
    if phi_v.is_zero():
        raise DegenerateError("cannot fit parameters for a vanishing vector field")

    if mode == "rational":
        k = max(range(dim), key=lambda i: (abs(phi_v[(i,)]), -i))
        pk = phi_v[(k,)]
        nu_vals = [M[(k, j)] / pk for j in range(dim)]  # valid for j != k
        i0 = 0 if k != 0 else 1
        mu = M[(i0, i0)] - nu_vals[i0] * phi_v[(i0,)]
        nu_vals[k] = (M[(k, k)] - mu) / pk
        nu = Tensor(dim, (0, 1), nu_vals)
    else:
        import numpy as np

        A = np.zeros((dim * dim, dim + 1))
        rhs = np.zeros(dim * dim)
        for i in range(dim):
            for j in range(dim):
                row = i * dim + j
                A[row, j] = phi_v[(i,)]
                if i == j:
                    A[row, dim] = 1.0
                rhs[row] = M[(i, j)]
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        nu = Tensor(dim, (0, 1), [float(x) for x in sol[:dim]])
        mu = float(sol[dim])

    recon = tc.add(tc.ein("i,j->ij", (1, 1), phi_v, nu),
                   tc.scale(tc.delta(dim), mu))
    residual = tc.max_abs_diff(M, recon)
    return nu, mu, residual
