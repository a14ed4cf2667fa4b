"""Closed-form invariants of the third-type almost-geodesic rule.

The generic pipeline (``invariants``) is the ground truth here: every closed
form below is also assembled group-by-group so it can be diffed against its
pipeline counterpart.  Each form exists in two variants:

* ``printed=False`` (default): the corrected expansion, equal to the pipeline
  value exactly; this is what the invariance machinery uses.
* ``printed=True``: the form with its published coefficients, kept only so
  ``agm_diagnostics`` can report where the two disagree.  Several published
  coefficients are provably inconsistent with the forms' own derivation (they
  break invariance), so the printed variants are never certified — only
  measured.
"""

from __future__ import annotations

from . import tensor_core as tc
from .invariants import (
    A_tensor,
    DecompositionError,
    S_tilde,
    _delta_mix,
    rho,
    weyl_factored,
    weyl_first_display,
    weyl_fourth,
)
from .jet import covariant_derivative
from .mappings import NotApplicableError, SpaceFields, coeff
from .tensor_core import Tensor


class AGMDecomposition:
    """Deformation curvature split into trace-diagonal, trace-mixed and rest."""

    __slots__ = ("P", "Q", "N")

    def __init__(self, P: Tensor, Q: Tensor, N: Tensor):
        if P.valence != (0, 2) or Q.valence != (0, 2) or N.valence != (1, 3):
            raise DecompositionError(
                f"PQN valences must be (0,2),(0,2),(1,3); got "
                f"{P.valence}, {Q.valence}, {N.valence}"
            )
        self.P = P
        self.Q = Q
        self.N = N


class _Blocks:
    """Shared sub-tensors of the closed forms, computed once per bundle."""

    def __init__(self, fields: SpaceFields):
        agm = fields.agm
        if agm is None:
            raise NotApplicableError(
                "closed almost-geodesic forms need the vector-field block")
        space = fields.space
        N = space.dim
        C = coeff(fields.mode)
        self.N = N
        self.C = C
        self.eps = -1 if agm.p % 2 else 1
        self.R = space.R
        sv = agm.sigma.value
        pv = agm.phi.value
        self.sv, self.pv, self.nu, self.mu = sv, pv, agm.nu, agm.mu
        self.sigma_cd = covariant_derivative(agm.sigma, space.Lsym)
        ltor = space.Ltor.value
        self.w = tc.ein("ja,a->j", (0, 1), sv, pv)
        self.theta_t = tc.add_scaled(space.theta.value, C(1, 2), self.w)
        self.torphi = tc.ein("ian,a->in", (1, 1), ltor, pv)
        tl = tc.ein("bab->a", (0, 1), ltor)
        self.nuphi = tc.ein("a,a->", (0, 0), agm.nu, pv)
        self.tlphi = tc.ein("a,a->", (0, 0), tl, pv)
        self.sphiphi = tc.ein("ab,a,b->", (0, 0), sv, pv, pv)
        self.ttphi = tc.ein("a,a->", (0, 0), self.theta_t, pv)

        self.theta_prime = space.trace_cov_derivative()
        # deformation-curvature group structures (coefficient-free)
        self.a_mu = _delta_mix(tc.scale(sv, agm.mu))
        self.a_cd = tc.alternate(
            tc.ein("jmn,i->ijmn", (1, 3), self.sigma_cd, pv), 2, 3)
        self.a_quad = tc.alternate(
            tc.ein("jm,an,a,i->ijmn", (1, 3), sv, sv, pv, pv), 2, 3)
        self.a_nutor = tc.alternate(
            tc.add_scaled(tc.ein("jm,n,i->ijmn", (1, 3), sv, agm.nu, pv),
                          self.eps,
                          tc.ein("jm,in->ijmn", (1, 3), sv, self.torphi)),
            2, 3)
        # trace-group cores
        self.y_cd_j = tc.ein("jan,a->jn", (0, 2), self.sigma_cd, pv)
        self.y_cd_n = tc.ein("jna,a->jn", (0, 2), self.sigma_cd, pv)
        self.y_wnu = tc.ein("j,n->jn", (0, 2), self.w, agm.nu)
        self.y_tor = tc.ein("ja,abn,b->jn", (0, 2), sv, ltor, pv)
        self.y_ww = tc.ein("j,n->jn", (0, 2), self.w, self.w)
        self.y_tt = tc.ein("j,n->jn", (0, 2), self.theta_t, self.theta_t)

    def scalar_sigma(self, scalar) -> Tensor:
        return tc.scale(self.sv, scalar.data[0])


def _blocks(fields: SpaceFields) -> _Blocks:
    got = fields._cache.get("agm_blocks")
    if got is None:
        got = fields._cache["agm_blocks"] = _Blocks(fields)
    return got


def _deform_groups(b: _Blocks, printed: bool) -> dict[str, Tensor]:
    """The deformation-curvature expansion, grouped like its display."""
    C, eps = b.C, b.eps
    q = C(1, 4) if printed else C(1, 2)
    return {
        "mu": tc.scale(b.a_mu, C(-1, 4) if printed else C(-1, 2)),
        "cd": tc.scale(b.a_cd, q),
        "quad": tc.scale(b.a_quad, C(1, 4)),
        "nutor": tc.scale(b.a_nutor, q),
    }


def _groups_basic(fields: SpaceFields, printed: bool) -> dict[str, Tensor]:
    b = _blocks(fields)
    N, C, eps = b.N, b.C, b.eps
    g = _deform_groups(b, printed)
    mu_c = C(-(N + 3), 4 * (N + 1)) if printed else C(-(N + 2), 2 * (N + 1))
    return {
        "curvature": b.R,
        "deform-mu": tc.scale(b.a_mu, mu_c),
        "deform-cd": g["cd"],
        "deform-quad": g["quad"],
        "deform-nutor": g["nutor"],
        "trace-theta": tc.scale(_delta_mix(b.theta_prime), C(-1, N + 1)),
        "trace-cd": tc.scale(_delta_mix(b.y_cd_j), C(-1, 2 * (N + 1))),
        "trace-nu": tc.scale(_delta_mix(b.y_wnu), C(-1, 2 * (N + 1))),
        "trace-tor": tc.scale(_delta_mix(b.y_tor), C(-eps, 2 * (N + 1))),
        "trace-scalar": tc.scale(_delta_mix(b.scalar_sigma(b.ttphi)),
                                 C(1, 2 * (N + 1))),
        "trace-outer": tc.scale(_delta_mix(b.y_tt), C(-1, (N + 1) ** 2)),
    }


def _groups_fourth(fields: SpaceFields, printed: bool) -> dict[str, Tensor]:
    b = _blocks(fields)
    N, C, eps = b.N, b.C, b.eps
    g = _deform_groups(b, printed)
    ric = fields.space.ricci
    ric_y = ric if printed else tc.sym_pair(ric, 0, 1)
    if printed:
        tr_cd = tc.scale(tc.sub(_delta_mix(b.y_cd_n), _delta_mix(b.y_cd_j)),
                         C(1, 4 * (N - 1)))
        half = C(1, 4 * (N - 1))
        wnu, tor = b.y_wnu, b.y_tor
    else:
        tr_cd = tc.scale(
            tc.sub(_delta_mix(b.y_cd_n),
                   _delta_mix(tc.sym_pair(b.y_cd_j, 0, 1))),
            C(1, 2 * (N - 1)))
        half = C(1, 2 * (N - 1))
        wnu = tc.sym_pair(b.y_wnu, 0, 1)
        tor = tc.sym_pair(b.y_tor, 0, 1)
    return {
        "curvature": b.R,
        "ricci": tc.scale(_delta_mix(ric_y), C(1, N - 1)),
        "deform-mu": tc.zeros(N, (1, 3)),
        "deform-cd": g["cd"],
        "deform-quad": g["quad"],
        "deform-nutor": g["nutor"],
        "trace-cd": tr_cd,
        "trace-scalar-quad": tc.scale(_delta_mix(b.scalar_sigma(b.sphiphi)),
                                      C(1, 4 * (N - 1))),
        "trace-scalar-nu": tc.scale(_delta_mix(b.scalar_sigma(b.nuphi)), half),
        "trace-scalar-tor": tc.scale(_delta_mix(b.scalar_sigma(b.tlphi)),
                                     eps * half),
        "trace-outer-quad": tc.scale(_delta_mix(b.y_ww), C(-1, 4 * (N - 1))),
        "trace-outer-nu": tc.scale(_delta_mix(wnu), -half),
        "trace-outer-tor": tc.scale(_delta_mix(tor), -eps * half),
    }


def _groups_first(fields: SpaceFields, printed: bool) -> dict[str, Tensor]:
    b = _blocks(fields)
    N, C, eps = b.N, b.C, b.eps
    g = _deform_groups(b, printed)
    if printed:
        mu_c = C(-(N + 2) ** 2, 4 * (N + 1) ** 2)
        over = C(1, 4 * (N + 1) ** 2 * (N - 1))
        over_cd = tc.scale(tc.sub(_delta_mix(b.y_cd_n), _delta_mix(b.y_cd_j)),
                           -over)
        over_quad = tc.scale(
            tc.sub(_delta_mix(b.scalar_sigma(b.sphiphi)), _delta_mix(b.y_ww)),
            -over)
        nutor_in = tc.add_scaled(
            tc.sub(_delta_mix(b.scalar_sigma(b.nuphi)), _delta_mix(b.y_wnu)),
            eps,
            tc.sub(_delta_mix(b.scalar_sigma(b.tlphi)), _delta_mix(b.y_tor)))
        over_nutor = tc.scale(nutor_in, -over)
    else:
        mu_c = C(-(N * N + 4 * N + 1), 2 * (N + 1) ** 2)
        over_cd = tc.scale(
            tc.sub(_delta_mix(b.y_cd_n),
                   _delta_mix(tc.sym_pair(b.y_cd_j, 0, 1))),
            C(-1, 2 * (N + 1) ** 2))
        over_quad = tc.scale(
            tc.sub(_delta_mix(b.scalar_sigma(b.sphiphi)), _delta_mix(b.y_ww)),
            C(-1, 4 * (N + 1) ** 2))
        nutor_in = tc.add_scaled(
            tc.sub(_delta_mix(b.scalar_sigma(b.nuphi)),
                   _delta_mix(tc.sym_pair(b.y_wnu, 0, 1))),
            eps,
            tc.sub(_delta_mix(b.scalar_sigma(b.tlphi)),
                   _delta_mix(tc.sym_pair(b.y_tor, 0, 1))))
        over_nutor = tc.scale(nutor_in, C(-1, 2 * (N + 1) ** 2))
    return {
        "curvature": b.R,
        "trace-theta": tc.scale(_delta_mix(b.theta_prime), C(-1, N + 1)),
        "trace-cd": tc.scale(_delta_mix(b.y_cd_j), C(-1, 2 * (N + 1))),
        "trace-nu": tc.scale(_delta_mix(b.y_wnu), C(-1, 2 * (N + 1))),
        "trace-tor": tc.scale(_delta_mix(b.y_tor), C(-eps, 2 * (N + 1))),
        "deform-mu": tc.scale(b.a_mu, mu_c),
        "deform-cd": g["cd"],
        "deform-quad": g["quad"],
        "deform-nutor": g["nutor"],
        "over-cd": over_cd,
        "over-quad": over_quad,
        "over-nutor": over_nutor,
    }


def _total(groups: dict[str, Tensor]) -> Tensor:
    out = None
    for t in groups.values():
        out = t.copy() if out is None else tc.add(out, t)
    return out


def agm_basic(fields: SpaceFields, *, printed: bool = False) -> Tensor:
    """Basic Weyl-type closed form of the vector-field rule."""
    return _total(_groups_basic(fields, printed))


def agm_fourth(fields: SpaceFields, *, printed: bool = False) -> Tensor:
    """Fourth derived closed form of the vector-field rule."""
    return _total(_groups_fourth(fields, printed))


def agm_first(fields: SpaceFields, *, printed: bool = False) -> Tensor:
    """First derived closed form of the vector-field rule.

    The corrected variant equals the pipeline's display-form composition,
    which is itself invariant only up to a skew-Ricci trace term; see the
    first-derived pipeline functions for the closed invariant.
    """
    return _total(_groups_first(fields, printed))


def agm_invariants(fields: SpaceFields) -> tuple[Tensor, Tensor, Tensor]:
    """The three corrected closed forms (basic, fourth, first)."""
    return agm_basic(fields), agm_fourth(fields), agm_first(fields)


def rho_closed(fields: SpaceFields) -> Tensor:
    """Closed form of the deformation-trace derivative for this rule."""
    b = _blocks(fields)
    C, eps = b.C, b.eps
    out = tc.add(b.y_cd_j, b.y_wnu)
    out = tc.add(out, tc.scale(b.sv, b.mu))
    out = tc.add_scaled(out, eps, b.y_tor)
    return tc.scale(out, C(-1, 2))


def s_tilde_closed(fields: SpaceFields) -> Tensor:
    """Closed form of the quadratic trace completion for this rule."""
    b = _blocks(fields)
    N, C = b.N, b.C
    return tc.add_scaled(b.y_tt, C(-(N + 1), 2), b.scalar_sigma(b.ttphi))


def agm_decompose(fields: SpaceFields) -> AGMDecomposition:
    """Split the deformation curvature into its trace-mixed part and rest.

    Validates the reconstruction against the pipeline's deformation
    curvature; a residual means the input bundle is inconsistent.
    """
    b = _blocks(fields)
    N, C = b.N, b.C
    P = tc.zeros(N, (0, 2))
    Q = tc.scale(b.sv, -(b.mu * C(1, 2)))
    g = _deform_groups(b, printed=False)
    Nres = tc.add(g["cd"], tc.add(g["quad"], g["nutor"]))
    recon = tc.add(tc.ein("ij,mn->ijmn", (1, 3), tc.delta(N),
                          tc.alternate(P, 0, 1)),
                   tc.add(_delta_mix(Q), Nres))
    resid = tc.max_abs_diff(recon, A_tensor(fields))
    ref = max(1.0, float(A_tensor(fields).max_abs()))
    if (resid != 0) if fields.mode == "rational" else (float(resid) > 1e-9 * ref):
        raise DecompositionError(
            f"deformation-curvature reconstruction residual {resid}")
    return AGMDecomposition(P, Q, Nres)


def weyl_forms_from_decomposition(dec: AGMDecomposition, fields: SpaceFields
                                  ) -> tuple[Tensor, Tensor, Tensor]:
    """The factored, fourth and first-display forms re-expressed through a
    decomposition of the deformation curvature (exact substitutions)."""
    C = coeff(fields.mode)
    N = fields.dim
    space = fields.space
    th = space.trace_cov_derivative()
    rr = rho(fields)
    core = tc.add(
        tc.ein("ij,mn->ijmn", (1, 3), tc.delta(N), tc.alternate(dec.P, 0, 1)),
        tc.add(_delta_mix(dec.Q), dec.N))
    q_u = tc.sym_pair(dec.Q, 0, 1)
    ntr_u = tc.sym_pair(tc.ein("ajna->jn", (0, 2), dec.N), 0, 1)

    first = tc.add_scaled(tc.add(space.R, core), C(-1, N + 1),
                          tc.sub(_delta_mix(th), _delta_mix(rr)))
    first = tc.add_scaled(first, C(-1, (N + 1) ** 2),
                          _delta_mix(S_tilde(fields)))

    fourth = tc.add_scaled(tc.add(space.R, core), C(1, N - 1),
                           _delta_mix(tc.sym_pair(space.ricci, 0, 1)))
    fourth = tc.sub(fourth, _delta_mix(q_u))
    fourth = tc.add_scaled(fourth, C(1, N - 1), _delta_mix(ntr_u))

    first_disp = tc.add_scaled(tc.add(space.R, core), C(-1, N + 1),
                               tc.sub(_delta_mix(th), _delta_mix(rr)))
    first_disp = tc.add_scaled(first_disp, C(N - 1, (N + 1) ** 2),
                               _delta_mix(q_u))
    first_disp = tc.add_scaled(first_disp, C(-1, (N + 1) ** 2),
                               _delta_mix(ntr_u))
    return first, fourth, first_disp


def _row(section: str, group: str, resid, tol=0) -> dict:
    return {
        "section": section,
        "group": group,
        "status": "match" if resid <= tol else "mismatch",
        "max_abs": float(resid),
    }


def agm_diagnostics(fields: SpaceFields) -> list[dict]:
    """Group-by-group diff of the published closed forms against the
    corrected expansions, plus corrected-total-versus-pipeline rows."""
    b = _blocks(fields)
    N, C = b.N, b.C
    tol = 0 if fields.mode == "rational" else 1e-7
    rows: list[dict] = []

    dp = _deform_groups(b, printed=True)
    dd = _deform_groups(b, printed=False)
    for key in dd:
        rows.append(_row("deform", key, tc.max_abs_diff(dp[key], dd[key]), tol))
    rows.append(_row("deform", "total-vs-pipeline",
                     tc.max_abs_diff(_total(dd), A_tensor(fields)), tol))

    rows.append(_row("trace-derivative", "full",
                     tc.max_abs_diff(rho_closed(fields), rho(fields)), tol))
    rows.append(_row("trace-completion", "full",
                     tc.max_abs_diff(s_tilde_closed(fields), S_tilde(fields)),
                     tol))

    for section, maker, pipeline in (
            ("basic", _groups_basic, weyl_factored),
            ("fourth", _groups_fourth, weyl_fourth),
            ("first", _groups_first, weyl_first_display)):
        gp = maker(fields, True)
        gd = maker(fields, False)
        for key in gd:
            rows.append(_row(section, key,
                             tc.max_abs_diff(gp[key], gd[key]), tol))
        rows.append(_row(section, "total-vs-pipeline",
                         tc.max_abs_diff(_total(gd), pipeline(fields)), tol))

    dec = agm_decompose(fields)
    first, fourth, first_disp = weyl_forms_from_decomposition(dec, fields)
    rows.append(_row("split", "first-vs-pipeline",
                     tc.max_abs_diff(first, weyl_factored(fields)), tol))
    rows.append(_row("split", "fourth-vs-pipeline",
                     tc.max_abs_diff(fourth, weyl_fourth(fields)), tol))
    rows.append(_row("split", "first-display-vs-pipeline",
                     tc.max_abs_diff(first_disp, weyl_first_display(fields)),
                     tol))
    # trace identity of the split, and the published variants' gaps
    a_tr_u = tc.sym_pair(tc.ein("ajna->jn", (0, 2), A_tensor(fields)), 0, 1)
    q_u = tc.sym_pair(dec.Q, 0, 1)
    ntr_u = tc.sym_pair(tc.ein("ajna->jn", (0, 2), dec.N), 0, 1)
    ident = tc.add_scaled(ntr_u, -(N - 1), q_u)
    rows.append(_row("split", "trace-identity",
                     tc.max_abs_diff(a_tr_u, ident), tol))
    # the published fourth drops the trace-mixed pair (no-op when symmetric)
    pr_fourth = tc.sub(fourth, tc.sub(_delta_mix(dec.Q), _delta_mix(q_u)))
    rows.append(_row("split", "fourth-published",
                     tc.max_abs_diff(pr_fourth, fourth), tol))
    # the published first-display scales both trace corrections down by N-1
    pr_first_disp = tc.add_scaled(first_disp, C(-(N - 2), (N + 1) ** 2),
                                  _delta_mix(q_u))
    pr_first_disp = tc.add_scaled(pr_first_disp,
                                  C(N - 2, (N + 1) ** 2 * (N - 1)),
                                  _delta_mix(ntr_u))
    rows.append(_row("split", "first-display-published",
                     tc.max_abs_diff(pr_first_disp, first_disp), tol))
    return rows
