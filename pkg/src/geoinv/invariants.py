"""Thomas-type and Weyl-type invariants of the transformation rule.

Every function here evaluates one side of a mapping from its SpaceFields
bundle; comparing the source and target evaluations is what certifies (or
refutes) invariance.  All Weyl-type outputs are antisymmetric in their last
index pair by construction.

Two deliberately redundant routes exist in several places (e.g. the basic
reduced connection versus its expanded form, and the closed derived forms
versus their generic compositions); tests assert the routes agree instead of
collapsing them into one implementation.
"""

from __future__ import annotations

from . import tensor_core as tc
from .connection import ConnectionSpace
from .jet import covariant_derivative
from .mappings import SpaceFields, coeff
from .tensor_core import GeoinvError, Tensor


class DecompositionError(GeoinvError):
    """A decomposition input violates its shape or symmetry contract."""


def _delta_mix(Y: Tensor) -> Tensor:
    """d^i_[m Y_jn] = d^i_m Y_jn - d^i_n Y_jm (the middle index rides along)."""
    d = tc.delta(Y.dim)
    return tc.sub(
        tc.ein("im,jn->ijmn", (1, 3), d, Y),
        tc.ein("in,jm->ijmn", (1, 3), d, Y),
    )


def _delta_out(Y: Tensor) -> Tensor:
    """d^i_j Y_[mn] as a (1,3) tensor."""
    d = tc.delta(Y.dim)
    return tc.ein("ij,mn->ijmn", (1, 3), d, tc.alternate(Y, 0, 1))


def _alt_last(T: Tensor) -> Tensor:
    return tc.alternate(T, 2, 3)


# ---------------------------------------------------------------------------
# Thomas-type invariants


def thomas_basic(fields: SpaceFields) -> Tensor:
    """The reduced connection: symmetric part minus this side's omega."""
    return tc.sub(fields.space.Lsym.value, fields.omega.value)


def thomas_third(src: ConnectionSpace, tgt: ConnectionSpace, mode: str) -> Tensor:
    """Arithmetic mean of the two symmetric parts (manifestly pair-symmetric)."""
    return tc.scale(tc.add(src.Lsym.value, tgt.Lsym.value), coeff(mode)(1, 2))


def thomas_factored(fields: SpaceFields) -> Tensor:
    """Expanded form of the reduced connection (independent route).

    Symmetric part, minus the deformation source, minus the delta-completion
    of the reduced trace.
    """
    C = coeff(fields.mode)
    N = fields.dim
    tt = fields.theta_tilde.value
    d = tc.delta(N)
    completion = tc.add(
        tc.ein("ij,k->ijk", (1, 2), d, tt),
        tc.ein("ik,j->ijk", (1, 2), d, tt),
    )
    return tc.sub(
        tc.sub(fields.space.Lsym.value, fields.B.value),
        tc.scale(completion, C(1, N + 1)),
    )


def theta_tilde(fields: SpaceFields) -> Tensor:
    """Reduced trace: connection trace minus the deformation-source trace."""
    return fields.theta_tilde.value


def thomas_star(fields: SpaceFields) -> Tensor:
    """Trace-shift-free reduced connection: symmetric part minus the source."""
    return tc.sub(fields.space.Lsym.value, fields.B.value)


# ---------------------------------------------------------------------------
# Weyl-type invariants, basic and factored


def weyl_basic(fields: SpaceFields) -> Tensor:
    """Curvature of the reduced connection, assembled from omega's jet."""
    om = fields.omega
    cd = covariant_derivative(om, fields.space.Lsym)
    quad = tc.ein("ajm,ian->ijmn", (1, 3), om.value, om.value)
    return tc.add(fields.space.R, tc.sub(_alt_last(quad), _alt_last(cd)))


def rho(fields: SpaceFields) -> Tensor:
    """Covariant derivative of the deformation-source trace."""
    out = fields._cache.get("rho")
    if out is None:
        out = covariant_derivative(fields.b, fields.space.Lsym)
        fields._cache["rho"] = out
    return out


def rho_skew(fields: SpaceFields) -> Tensor:
    return tc.alternate(rho(fields), 0, 1)


def S_tilde(fields: SpaceFields) -> Tensor:
    """Quadratic trace completion; symmetric by construction."""
    out = fields._cache.get("s_tilde")
    if out is None:
        N = fields.dim
        tt = fields.theta_tilde.value
        first = tc.ein("a,aij->ij", (0, 2), tt, fields.B.value)
        out = tc.add(tc.scale(first, N + 1),
                     tc.ein("i,j->ij", (0, 2), tt, tt))
        fields._cache["s_tilde"] = out
    return out


def A_tensor(fields: SpaceFields) -> Tensor:
    """Deformation curvature: minus the alternated derivative plus the square."""
    out = fields._cache.get("a_tensor")
    if out is None:
        B = fields.B
        cd = covariant_derivative(B, fields.space.Lsym)
        quad = tc.ein("ajm,ian->ijmn", (1, 3), B.value, B.value)
        out = tc.sub(_alt_last(quad), _alt_last(cd))
        fields._cache["a_tensor"] = out
    return out


def weyl_factored(fields: SpaceFields) -> Tensor:
    """The factored Weyl-type invariant of the full rule."""
    out = fields._cache.get("weyl_factored")
    if out is None:
        C = coeff(fields.mode)
        N = fields.dim
        out = tc.add(fields.space.R, A_tensor(fields))
        bracket = tc.sub(
            _delta_mix(fields.space.trace_cov_derivative()),
            _delta_mix(rho(fields)),
        )
        out = tc.add_scaled(out, C(-1, N + 1), bracket)
        out = tc.add_scaled(out, C(-1, (N + 1) ** 2),
                            _delta_mix(S_tilde(fields)))
        fields._cache["weyl_factored"] = out
    return out


# ---------------------------------------------------------------------------
# derived invariants of a three-part decomposition


class XYZDecomposition:
    """Input shape of the derived-invariant constructions.

    X and Y are (0,2); Z is (1,3) and must be antisymmetric in its last two
    slots — the constructions are only stated for that shape.
    """

    __slots__ = ("X", "Y", "Z")

    def __init__(self, X: Tensor, Y: Tensor, Z: Tensor):
        if X.valence != (0, 2) or Y.valence != (0, 2) or Z.valence != (1, 3):
            raise DecompositionError(
                f"XYZ valences must be (0,2),(0,2),(1,3); got "
                f"{X.valence}, {Y.valence}, {Z.valence}"
            )
        if not tc.add(Z, tc.transpose_pair(Z, 2, 3)).is_zero():
            raise DecompositionError("Z must be antisymmetric in its last two slots")
        self.X = X
        self.Y = Y
        self.Z = Z


def derived_invariants(dec: XYZDecomposition, space: ConnectionSpace,
                       mode: str) -> dict[str, Tensor]:
    """The first, second and fourth derived forms of R + delta-completed X/Y/Z."""
    C = coeff(mode)
    N = space.dim
    R = space.R
    X, Y, Z = dec.X, dec.Y, dec.Z
    z_tr_first = tc.ein("aamn->mn", (0, 2), Z)           # Z^a_amn
    z_tr_last = tc.ein("ajna->jn", (0, 2), Z)            # Z^a_jna
    common = tc.add(_delta_mix(Y), Z)

    w1 = tc.add(R, common)
    w1 = tc.add_scaled(
        w1, C(-1, N),
        tc.ein("ij,mn->ijmn", (1, 3), tc.delta(N),
               tc.add(tc.alternate(Y, 0, 1), z_tr_first)),
    )

    w2 = tc.add(R, common)
    w2 = tc.add_scaled(
        w2, C(-1, 2),
        tc.ein("ij,mn->ijmn", (1, 3), tc.delta(N),
               tc.sub(tc.scale(tc.alternate(Y, 0, 1), N - 1),
                      tc.alternate(z_tr_last, 0, 1))),
    )

    w4 = tc.add(R, Z)
    w4 = tc.add_scaled(w4, C(1, N - 1), _delta_mix(tc.sym_pair(space.ricci, 0, 1)))
    w4 = tc.add(w4, _delta_out(X))
    x_terms = tc.sub(_delta_mix(X), _delta_mix(tc.transpose_pair(X, 0, 1)))
    w4 = tc.add_scaled(w4, C(-1, N - 1), x_terms)
    w4 = tc.add_scaled(w4, C(1, N - 1), _delta_mix(tc.sym_pair(z_tr_last, 0, 1)))

    return {"first": w1, "second": w2, "fourth": w4}


def xyz_weyl_factored(fields: SpaceFields) -> XYZDecomposition:
    """The factored Weyl form, written as an XYZ decomposition."""
    C = coeff(fields.mode)
    N = fields.dim
    Y = tc.add_scaled(
        tc.scale(tc.sub(rho(fields), fields.space.trace_cov_derivative()),
                 C(1, N + 1)),
        C(-1, (N + 1) ** 2), S_tilde(fields),
    )
    return XYZDecomposition(tc.zeros(N, (0, 2)), Y, A_tensor(fields))


def xyz_weyl_fourth(fields: SpaceFields) -> XYZDecomposition:
    C = coeff(fields.mode)
    N = fields.dim
    A = A_tensor(fields)
    a_tr = tc.sym_pair(tc.ein("ajna->jn", (0, 2), A), 0, 1)
    Y = tc.scale(tc.add(tc.sym_pair(fields.space.ricci, 0, 1), a_tr), C(1, N - 1))
    return XYZDecomposition(tc.zeros(N, (0, 2)), Y, A)


def xyz_weyl_first_display(fields: SpaceFields) -> XYZDecomposition:
    C = coeff(fields.mode)
    N = fields.dim
    A = A_tensor(fields)
    a_tr = tc.sym_pair(tc.ein("ajna->jn", (0, 2), A), 0, 1)
    Y = tc.add_scaled(
        tc.scale(tc.sub(rho(fields), fields.space.trace_cov_derivative()),
                 C(1, N + 1)),
        C(-1, (N + 1) ** 2), a_tr,
    )
    return XYZDecomposition(tc.zeros(N, (0, 2)), Y, A)


# ---------------------------------------------------------------------------
# closed derived forms


def weyl_fourth(fields: SpaceFields) -> Tensor:
    """Fourth derived form: trace-completed with the symmetrized Ricci data."""
    C = coeff(fields.mode)
    N = fields.dim
    A = A_tensor(fields)
    a_tr = tc.sym_pair(tc.ein("ajna->jn", (0, 2), A), 0, 1)
    out = tc.add(fields.space.R, A)
    out = tc.add_scaled(out, C(1, N - 1),
                        _delta_mix(tc.sym_pair(fields.space.ricci, 0, 1)))
    return tc.add_scaled(out, C(1, N - 1), _delta_mix(a_tr))


def weyl_first_display(fields: SpaceFields) -> Tensor:
    """First derived form exactly as displayed (kept for diagnostics).

    Not invariant in general: it differs from the factored form by a
    delta-bracket of (S-completion minus the A-trace), which moves under the
    rule; see `weyl_first_over` for the invariant closure.
    """
    C = coeff(fields.mode)
    N = fields.dim
    A = A_tensor(fields)
    a_tr = tc.sym_pair(tc.ein("ajna->jn", (0, 2), A), 0, 1)
    inner = tc.add_scaled(
        tc.scale(
            tc.sub(_delta_mix(fields.space.trace_cov_derivative()),
                   _delta_mix(rho(fields))),
            N + 1,
        ),
        1, _delta_mix(a_tr),
    )
    return tc.add(tc.add_scaled(fields.space.R, C(-1, (N + 1) ** 2), inner), A)


def weyl_first_over(fields: SpaceFields) -> Tensor:
    """First derived form, closed over the factored invariant.

    Equals the first derived construction applied to the factored form's
    decomposition; written directly as the factored invariant plus a pure
    trace correction.
    """
    C = coeff(fields.mode)
    N = fields.dim
    corr = tc.add_scaled(
        tc.scale(rho_skew(fields), C(1, N + 1)),
        C(-1, N * (N + 1)), fields.space.skew_ricci,
    )
    d = tc.delta(N)
    return tc.add(weyl_factored(fields),
                  tc.ein("ij,mn->ijmn", (1, 3), d, corr))


# ---------------------------------------------------------------------------
# trace-shift-only (geodesic) forms


def geodesic_thomas(space: ConnectionSpace, mode: str) -> Tensor:
    """Reduced connection of the trace-shift rule."""
    C = coeff(mode)
    N = space.dim
    th = space.theta.value
    d = tc.delta(N)
    completion = tc.add(
        tc.ein("ij,k->ijk", (1, 2), d, th),
        tc.ein("ik,j->ijk", (1, 2), d, th),
    )
    return tc.add_scaled(space.Lsym.value, C(-1, N + 1), completion)


def geodesic_weyl(space: ConnectionSpace, mode: str) -> Tensor:
    """Weyl-type form of the trace-shift rule.

    The delta-diagonal block alternates the special trace derivative (its
    symmetric excess over the covector rule cancels under alternation); the
    mixed block keeps the covector rule, which is what makes the form move
    with the basic Weyl form and stay invariant.
    """
    C = coeff(mode)
    N = space.dim
    th = space.theta.value
    sp = space.special_trace_derivative()
    d = tc.delta(N)
    out = tc.add_scaled(
        space.R, C(1, N + 1),
        tc.ein("ij,mn->ijmn", (1, 3), d, tc.alternate(sp, 0, 1)),
    )
    inner = tc.add(tc.scale(space.trace_cov_derivative(), N + 1),
                   tc.ein("j,n->jn", (0, 2), th, th))
    return tc.add_scaled(out, C(-1, (N + 1) ** 2), _delta_mix(inner))


def weyl_projective(space: ConnectionSpace, mode: str) -> Tensor:
    """The classical projective-type tensor of the symmetric part."""
    C = coeff(mode)
    N = space.dim
    d = tc.delta(N)
    out = tc.add_scaled(
        space.R, C(1, N + 1),
        tc.ein("ij,mn->ijmn", (1, 3), d, space.skew_ricci),
    )
    out = tc.add_scaled(out, C(N, N * N - 1), _delta_mix(space.ricci))
    return tc.add_scaled(
        out, C(1, N * N - 1), _delta_mix(tc.transpose_pair(space.ricci, 0, 1))
    )
