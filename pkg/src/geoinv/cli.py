"""Command-line front end.

Subcommands:

* ``gen``        — deterministically generate a mapping instance as JSON.
* ``check``      — certify every applicable invariant on an instance file.
* ``identities`` — run the single-space identity suite on random draws.
* ``eval``       — evaluate an index-notation expression against an instance.

Exit codes: 0 success, 1 invariant/identity failure, 2 usage or input error.
The environment variable ``GEOINV_MODE`` sets the default arithmetic mode.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import invariants as inv
from . import tensor_core as tc
from .agm import agm_basic, agm_decompose, agm_fourth
from .connection import ConnectionSpace
from .index_expr import evaluate as expr_evaluate
from .index_expr import parse as expr_parse
from .jet import JetTensor
from .mappings import (MAPPINGS, MODES, InstanceError, MappingInstance, curl,
                       generate, generate_agm3, vector_connection_derivative)
from .tensor_core import GeoinvError, Tensor

REL_TOL = 1e-9
ABS_TOL = 1e-12


class UsageError(GeoinvError):
    pass


# ---------------------------------------------------------------------------
# number / instance (de)serialization


def _num_out(x, mode: str):
    if mode == "rational":
        f = Fraction(x)
        return f"{f.numerator}/{f.denominator}"
    return float(x)


def _num_in(v, mode: str):
    if mode == "rational":
        if isinstance(v, str):
            try:
                f = Fraction(v)
            except (ValueError, ZeroDivisionError) as e:
                raise UsageError(f"bad rational literal {v!r}: {e}") from None
            return f
        if isinstance(v, int) and not isinstance(v, bool):
            return Fraction(v)
        raise UsageError(f"rational-mode entries must be 'num/den' strings, got {v!r}")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise UsageError(f"float-mode entries must be numbers, got {v!r}")


def instance_to_obj(ins: MappingInstance) -> dict:
    fields = {}
    for name, t in sorted(ins.fields.items()):
        fields[name] = {
            "valence": list(t.valence),
            "value": [_num_out(x, ins.mode) for x in t.value.data],
            "grad": [_num_out(x, ins.mode) for x in t.grad.data],
        }
    obj = {
        "dimension": ins.dim,
        "mode": ins.mode,
        "flags": {"s1": ins.flags[0], "s2": ins.flags[1], "s3": ins.flags[2]},
        "mapping": ins.mapping,
        "seed": ins.seed,
        "fields": fields,
    }
    if ins.mapping == "agm3":
        obj["p"] = ins.p
    return obj


def _expect(obj: dict, key: str, types) -> object:
    if key not in obj:
        raise UsageError(f"instance file is missing {key!r}")
    v = obj[key]
    if not isinstance(v, types) or isinstance(v, bool):
        raise UsageError(f"instance entry {key!r} has the wrong type")
    return v


def instance_from_obj(obj) -> MappingInstance:
    if not isinstance(obj, dict):
        raise UsageError("instance file must contain a JSON object")
    dim = _expect(obj, "dimension", int)
    mode = _expect(obj, "mode", str)
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}")
    mapping = _expect(obj, "mapping", str)
    if mapping not in MAPPINGS:
        raise UsageError(f"unknown mapping {mapping!r}")
    flags_obj = _expect(obj, "flags", dict)
    flags = []
    for key in ("s1", "s2", "s3"):
        v = flags_obj.get(key)
        if v not in (0, 1) or isinstance(v, bool):
            raise UsageError(f"flag {key!r} must be 0 or 1")
        flags.append(v)
    seed = obj.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise UsageError("seed must be an integer or null")
    p = obj.get("p")
    if p is not None and p not in (1, 2):
        raise UsageError("p must be 1 or 2")
    raw = _expect(obj, "fields", dict)
    fields: dict[str, JetTensor] = {}
    for name, entry in raw.items():
        if not isinstance(entry, dict):
            raise UsageError(f"field {name!r} must be an object")
        val = entry.get("valence")
        if (not isinstance(val, list) or len(val) != 2
                or any(not isinstance(k, int) or isinstance(k, bool) or k < 0
                       for k in val)):
            raise UsageError(f"field {name!r} has a bad valence")
        valence = (val[0], val[1])
        data = entry.get("value")
        gdata = entry.get("grad")
        if not isinstance(data, list) or not isinstance(gdata, list):
            raise UsageError(f"field {name!r} needs 'value' and 'grad' arrays")
        want = dim ** (valence[0] + valence[1])
        if len(data) != want or len(gdata) != want * dim:
            raise UsageError(
                f"field {name!r}: array lengths do not match valence "
                f"{valence} at dimension {dim}")
        value = Tensor(dim, valence, [_num_in(x, mode) for x in data])
        grad = Tensor(dim, (valence[0], valence[1] + 1),
                      [_num_in(x, mode) for x in gdata])
        fields[name] = JetTensor(value, grad)
    ins = MappingInstance(dim, mode, tuple(flags), mapping, fields,
                          p=p, seed=seed)
    try:
        ins.validate()
    except InstanceError as e:
        raise UsageError(str(e)) from None
    return ins


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_instance(path: str) -> MappingInstance:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from None
    return instance_from_obj(obj)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# residual records


def _record(tag: str, name: str, a: Tensor, b: Tensor, mode: str,
            rel_tol: float, abs_tol: float, seed=None) -> dict:
    d = tc.max_abs_diff(a, b)
    scale = max(a.max_abs(), b.max_abs())
    if mode == "rational":
        ok = d == 0
        rel = Fraction(d) / scale if scale != 0 else Fraction(0)
    else:
        ok = d <= abs_tol or d <= rel_tol * float(scale)
        rel = d / float(scale) if scale != 0 else 0.0
    row = {
        "tag": tag,
        "name": name,
        "max_abs": _num_out(d, mode),
        "max_rel": _num_out(rel, mode),
        "pass": bool(ok),
    }
    if seed is not None:
        row["seed"] = seed
    return row


def _print_table(rows: list[dict], header: str) -> None:
    sys.stderr.write(header + "\n")
    width = max((len(r["tag"]) for r in rows), default=4)
    for r in rows:
        status = "pass" if r["pass"] else "FAIL"
        seed = f"  seed={r['seed']}" if "seed" in r else ""
        sys.stderr.write(
            f"  {r['tag']:<{width}}  {status}  max_abs={r['max_abs']}{seed}\n")
    ok = sum(1 for r in rows if r["pass"])
    sys.stderr.write(f"  {ok}/{len(rows)} passed\n")


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    mode = args.mode
    flags = (args.s1, args.s2, args.s3)
    if args.mapping == "general":
        flags = (1 if args.s1 is None else args.s1,
                 1 if args.s2 is None else args.s2,
                 1 if args.s3 is None else args.s3)
        if args.p is not None:
            raise UsageError("--p applies only to agm3 instances")
        ins = generate(args.n, args.seed, flags, "general", mode)
    elif args.mapping == "geodesic":
        for got, want, name in ((args.s1, 1, "s1"), (args.s2, 0, "s2"),
                                (args.s3, 0, "s3")):
            if got is not None and got != want:
                raise UsageError(f"geodesic instances fix {name}={want}")
        if args.p is not None:
            raise UsageError("--p applies only to agm3 instances")
        ins = generate(args.n, args.seed, (1, 0, 0), "geodesic", mode)
    else:  # agm3
        for got, want, name in ((args.s1, 1, "s1"), (args.s2, 0, "s2"),
                                (args.s3, 1, "s3")):
            if got is not None and got != want:
                raise UsageError(f"agm3 instances fix {name}={want}")
        ins = generate_agm3(args.n, args.seed, 1 if args.p is None else args.p,
                            mode)
    _emit(dumps(instance_to_obj(ins)), args.output)
    return 0


# ---------------------------------------------------------------------------
# check


def pair_invariants(ins: MappingInstance) -> list[tuple[str, str, Tensor, Tensor]]:
    """(tag, name, source value, target value) for every applicable invariant."""
    s = ins.source_fields()
    t = ins.target_fields()
    mode = ins.mode
    rows = [
        ("rho-skew", "skew part of the source-trace derivative",
         inv.rho_skew(s), inv.rho_skew(t)),
        ("skew-ricci", "skew part of the Ricci trace",
         s.space.skew_ricci, t.space.skew_ricci),
        ("thomas-factored", "reduced connection, expanded route",
         inv.thomas_factored(s), inv.thomas_factored(t)),
        ("thomas-second", "reduced connection",
         inv.thomas_basic(s), inv.thomas_basic(t)),
        ("thomas-third", "symmetric-mean connection (pair symmetry)",
         inv.thomas_third(s.space, t.space, mode),
         inv.thomas_third(t.space, s.space, mode)),
        ("weyl-basic", "curvature of the reduced connection",
         inv.weyl_basic(s), inv.weyl_basic(t)),
        ("weyl-factored", "factored curvature form",
         inv.weyl_factored(s), inv.weyl_factored(t)),
        ("weyl-first-closed", "first derived form, closed over the factored one",
         inv.weyl_first_over(s), inv.weyl_first_over(t)),
        ("weyl-fourth", "fourth derived curvature form",
         inv.weyl_fourth(s), inv.weyl_fourth(t)),
    ]
    if ins.flags[0] == 0:
        rows.append(("theta-reduced", "reduced trace (trace-shift-free rules)",
                     inv.theta_tilde(s), inv.theta_tilde(t)))
        rows.append(("thomas-reduced",
                     "source-corrected connection (trace-shift-free rules)",
                     inv.thomas_star(s), inv.thomas_star(t)))
    if ins.mapping == "geodesic":
        rows.append(("geodesic-thomas", "trace-shift reduced connection",
                     inv.geodesic_thomas(s.space, mode),
                     inv.geodesic_thomas(t.space, mode)))
        rows.append(("geodesic-weyl", "trace-shift curvature form",
                     inv.geodesic_weyl(s.space, mode),
                     inv.geodesic_weyl(t.space, mode)))
        rows.append(("weyl-projective", "projective curvature form",
                     inv.weyl_projective(s.space, mode),
                     inv.weyl_projective(t.space, mode)))
    if ins.mapping == "agm3":
        rows.append(("agm-basic", "vector-deformation factored form",
                     agm_basic(s), agm_basic(t)))
        rows.append(("agm-fourth", "vector-deformation fourth form",
                     agm_fourth(s), agm_fourth(t)))
    rows.sort(key=lambda r: r[0])
    return rows


def cmd_check(args) -> int:
    ins = load_instance(args.file)
    rows = [_record(tag, name, a, b, ins.mode, args.tol, args.abs_tol)
            for tag, name, a, b in pair_invariants(ins)]
    ok = all(r["pass"] for r in rows)
    diagnostics = []
    if args.literal_p2:
        if ins.mapping != "agm3" or ins.p != 2:
            raise UsageError(
                "--literal-p2 applies only to agm3 instances with p=2")
        phi, L = ins.fields["phi"], ins.fields["L"]
        gap = tc.max_abs_diff(
            vector_connection_derivative(phi, L, 2),
            vector_connection_derivative(phi, L, 2, literal=True))
        diagnostics.append({
            "tag": "literal-p2-derivative",
            "name": "gap between the contracted kind-2 vector derivative "
                    "and its uncontracted printed variant (informational)",
            "max_abs": _num_out(gap, ins.mode),
        })
    report = {
        "file": args.file,
        "dimension": ins.dim,
        "mode": ins.mode,
        "mapping": ins.mapping,
        "flags": {"s1": ins.flags[0], "s2": ins.flags[1], "s3": ins.flags[2]},
        "seed": ins.seed,
        "tolerance": ({"exact": True} if ins.mode == "rational"
                      else {"relative": args.tol, "absolute": args.abs_tol}),
        "invariants": rows,
        "pass": ok,
    }
    if ins.mapping == "agm3":
        report["p"] = ins.p
    if diagnostics:
        report["diagnostics"] = diagnostics
    _print_table(rows, f"invariance check: {args.file}")
    _emit(dumps(report), args.report)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# identities


def _identity_rows(n: int, seed: int, mode: str, rel_tol: float,
                   abs_tol: float) -> list[dict]:
    flags = ((seed >> 2) & 1, (seed >> 1) & 1, seed & 1)
    f = generate(n, seed, flags, "general", mode).source_fields()
    sp = f.space
    zero2 = tc.zeros(n, (0, 2))
    zero4 = tc.zeros(n, (1, 3))

    def rec(tag, name, a, b):
        return _record(tag, name, a, b, mode, rel_tol, abs_tol, seed=seed)

    rows = [
        rec("curvature-antisymmetry",
            "curvature flips sign in its last index pair",
            tc.add(sp.R, tc.transpose_pair(sp.R, 2, 3)), zero4),
        rec("curvature-trace-curl",
            "first-slot curvature trace equals the trace curl",
            tc.ein("aamn->mn", (0, 2), sp.R), curl(sp.theta)),
        rec("curvature-trace-skew",
            "first-slot curvature trace equals minus the skew Ricci",
            tc.ein("aamn->mn", (0, 2), sp.R),
            tc.scale(sp.skew_ricci, -1)),
        rec("completion-symmetry", "quadratic trace completion is symmetric",
            tc.alternate(inv.S_tilde(f), 0, 1), zero2),
        rec("deformation-trace-diagonal",
            "diagonal trace of the deformation curvature is minus the "
            "skew source-trace derivative",
            tc.ein("aamn->mn", (0, 2), inv.A_tensor(f)),
            tc.scale(inv.rho_skew(f), -1)),
        rec("deformation-trace-last",
            "alternated last-slot trace of the deformation curvature is "
            "the skew source-trace derivative",
            tc.alternate(tc.ein("amna->mn", (0, 2), inv.A_tensor(f)), 0, 1),
            inv.rho_skew(f)),
    ]

    g = generate_agm3(n, seed, 1 + (seed % 2), mode).source_fields()
    N = n
    dec = agm_decompose(g)
    a_full = inv.A_tensor(g)
    recon = tc.add(
        tc.ein("ij,mn->ijmn", (1, 3), tc.delta(N), tc.alternate(dec.P, 0, 1)),
        tc.add(inv._delta_mix(dec.Q), dec.N))
    rows.append(rec(
        "reconstruction",
        "deformation curvature rebuilt from its trace decomposition",
        recon, a_full))
    a_tr = tc.sym_pair(tc.ein("ajna->jn", (0, 2), a_full), 0, 1)
    q_u = tc.sym_pair(dec.Q, 0, 1)
    ntr_u = tc.sym_pair(tc.ein("ajna->jn", (0, 2), dec.N), 0, 1)
    rows.append(rec(
        "reconstruction-trace",
        "symmetrized deformation-curvature trace from the decomposition",
        a_tr, tc.add_scaled(ntr_u, -(N - 1), q_u)))
    return rows


def cmd_identities(args) -> int:
    rows = []
    for k in range(args.count):
        rows.extend(_identity_rows(args.n, args.seed + k, args.mode,
                                   args.tol, args.abs_tol))
    rows.sort(key=lambda r: (r["tag"], r["seed"]))
    ok = all(r["pass"] for r in rows)
    report = {
        "dimension": args.n,
        "mode": args.mode,
        "count": args.count,
        "seed": args.seed,
        "tolerance": ({"exact": True} if args.mode == "rational"
                      else {"relative": args.tol, "absolute": args.abs_tol}),
        "identities": rows,
        "pass": ok,
    }
    shown = {}
    for r in rows:  # one table line per identity: the worst seed
        cur = shown.get(r["tag"])
        if cur is None or (cur["pass"] and not r["pass"]):
            shown[r["tag"]] = r
    _print_table(list(shown.values()),
                 f"identity suite: n={args.n}, {args.count} draws")
    _emit(dumps(report), args.report)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# eval


def _nest(t: Tensor, mode: str):
    n, r = t.dim, t.p + t.q
    def build(level: int, offset: int):
        if level == r:
            return _num_out(t.data[offset], mode)
        stride = n ** (r - level - 1)
        return [build(level + 1, offset + i * stride) for i in range(n)]
    return build(0, 0)


def eval_bindings(ins: MappingInstance, side: str) -> dict:
    fields = ins.source_fields() if side == "source" else ins.target_fields()
    sp = fields.space
    bind = dict(ins.fields)
    if side == "target":
        # expose the target space's own connection under the plain name
        bind["L"] = sp.L
    bind.update({
        "Ls": sp.Lsym,
        "R": sp.R,
        "Ric": sp.ricci,
        "Ricci": sp.ricci,
        "RS": sp.skew_ricci,
        "theta": sp.theta,
        "tt": fields.theta_tilde,
        "B": fields.B,
        "b": fields.b,
        "w": fields.omega,
        "rho": inv.rho(fields),
        "S": inv.S_tilde(fields),
        "A": inv.A_tensor(fields),
    })
    return bind


def cmd_eval(args) -> int:
    ins = load_instance(args.file)
    try:
        node = expr_parse(args.expr)
        out = expr_evaluate(node, eval_bindings(ins, args.space),
                            (ins.source_fields() if args.space == "source"
                             else ins.target_fields()).space)
    except GeoinvError as e:
        raise UsageError(str(e)) from None
    sys.stdout.write(dumps(_nest(out, ins.mode)))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _mode_default() -> str:
    mode = os.environ.get("GEOINV_MODE", "rational")
    return mode if mode in MODES else "rational"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geoinv",
        description="Generate, certify and inspect connection-mapping "
                    "invariance instances.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--n", type=int, required=True, help="dimension")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mapping", choices=MAPPINGS, default="general")
    g.add_argument("--s1", type=int, choices=(0, 1), default=None)
    g.add_argument("--s2", type=int, choices=(0, 1), default=None)
    g.add_argument("--s3", type=int, choices=(0, 1), default=None)
    g.add_argument("--p", type=int, choices=(1, 2), default=None,
                   help="vector-derivative kind (agm3 only)")
    g.add_argument("--mode", choices=MODES, default=_mode_default())
    g.add_argument("-o", "--output", default=None, help="output file")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("check", help="certify invariance on an instance file")
    c.add_argument("file")
    c.add_argument("--tol", type=float, default=REL_TOL,
                   help="relative tolerance (float mode)")
    c.add_argument("--abs-tol", type=float, default=ABS_TOL,
                   help="absolute tolerance (float mode)")
    c.add_argument("--report", default=None, help="write the JSON report here")
    c.add_argument("--literal-p2", action="store_true",
                   help="add the uncontracted kind-2 derivative diagnostic "
                        "(agm3, p=2 instances)")
    c.set_defaults(func=cmd_check)

    i = sub.add_parser("identities", help="run the single-space identity suite")
    i.add_argument("--n", type=int, default=4)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--count", type=int, default=20)
    i.add_argument("--mode", choices=MODES, default=_mode_default())
    i.add_argument("--tol", type=float, default=REL_TOL)
    i.add_argument("--abs-tol", type=float, default=ABS_TOL)
    i.add_argument("--report", default=None)
    i.set_defaults(func=cmd_identities)

    e = sub.add_parser("eval", help="evaluate an index expression")
    e.add_argument("file")
    e.add_argument("expr")
    e.add_argument("--space", choices=("source", "target"), default="source")
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except GeoinvError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
