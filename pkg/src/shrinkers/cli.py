"""Command line: ``shrinkers {verify,entropy,flow,classify,gap,bounds}``.

Exit status: 0 all requested checks pass, 1 a check failed (named on stderr),
2 bad input (config or profile, with line and column), 3 unwritable output.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import flow as fl
from .functionals import EntropySearch, F, entropy, gaussian_tail, rescaling_inequality_check
from .operators import (
    effective_gradient_bound,
    observed_order,
    shrinker_identities,
    simons_identity_check,
    tau_gradient_certificate,
)
from .report import Report, ReportError, emit_report
from .rigidity import classify_cylinder, iteration_experiment
from .surface import (
    GeneralizedCylinderSpec,
    ProfileParseError,
    RotationSignature,
    SurfaceError,
    abresch_langer_profile,
    analytic_shrinker,
    build_from_profile,
    format_profile,
    read_profile,
    round_profile,
    shrinker_residual,
)

BUILTINS = ("cylinder", "sphere", "plane", "circle", "abresch-langer")
POSITIVE = ("R", "delta0", "C0", "lambda0", "theta", "ds", "s_max", "resolution", "cadence", "budget", "radius")


class ConfigError(ValueError):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"line {line}, column {column}: {message}")


class CheckFailed(Exception):
    pass


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _pairs(text):
    out = []
    for t in text.split(","):
        a, b = t.split(":")
        out.append((float(a), float(b)))
    return out


# -- argument parsing ------------------------------------------------------------------


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="key=value file; flags override it")
    g.add_argument("--out", default="shrinkers-out", help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    src = common.add_argument_group("surface")
    src.add_argument("--input", help="profile file")
    src.add_argument("--builtin", choices=BUILTINS)
    src.add_argument("--k", type=int)
    src.add_argument("--n", type=int, default=2)
    src.add_argument("--resolution", type=int, default=256)
    src.add_argument("--discretize", action="store_true", help="sample a profile instead of the exact surface")
    src.add_argument("--amplitude", type=float, default=0.0)
    src.add_argument("--wavenumber", type=int, default=1)
    src.add_argument("--radial", action="store_true")
    src.add_argument("--radius", type=float, help="circle radius (builtin circle)")

    p = argparse.ArgumentParser(prog="shrinkers", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="operator identities under refinement")
    v.add_argument("--levels", type=int, default=3)
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--min-order", dest="min_order", type=float, default=1.8)

    e = sub.add_parser("entropy", parents=[common], help="entropy search")
    e.add_argument("--tol", type=float, default=1e-3)

    f = sub.add_parser("flow", parents=[common], help="rescaled mean curvature flow")
    f.add_argument("--ds", type=float)
    f.add_argument("--s-max", dest="s_max", type=float, default=1.0)
    f.add_argument("--cadence", type=float, default=0.1)
    f.add_argument("--tol", type=float, default=1e-6)

    c = sub.add_parser("classify", parents=[common], help="cylinder classifier")
    c.add_argument("--R", type=float, default=12.0)
    c.add_argument("--delta0", type=float, default=0.1)
    c.add_argument("--C0", type=float, default=4.0)
    c.add_argument("--lambda0", type=float)
    c.add_argument("--theta", type=float, default=0.1)
    c.add_argument("--rounds", type=int, default=0, help="iteration rounds (0 = skip)")

    gp = sub.add_parser("gap", parents=[common], help="entropy-gap experiment")
    gp.add_argument("--amplitudes", type=_floats, default=[1e-3, -1e-3])
    gp.add_argument("--budget", type=float, default=6.0)
    gp.add_argument("--gap-min", dest="gap_min", type=float, default=0.05)

    b = sub.add_parser("bounds", parents=[common], help="tail, effective and rescaling bounds")
    b.add_argument("--radii", type=_floats, default=[4.0, 5.0, 8.0])
    b.add_argument("--pairs", type=_pairs, default=[(8.0, 1.0), (10.0, 1.0), (8.0, 2.0)])
    b.add_argument("--lambda0", type=float)
    b.add_argument("--samples", type=int, default=20)
    return p, sub


def _read_config(path, actions):
    """Flat ``key = value`` lines; keys are option names without dashes."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", lineno, len(raw) - len(raw.lstrip()) + 1)
        key, val = (s.strip() for s in line.split("=", 1))
        col = raw.index(key) + 1 if key else 1
        dest = key.replace("-", "_")
        act = actions.get(dest)
        if act is None or dest in ("config", "help"):
            raise ConfigError(f"unknown key {key!r}", lineno, col)
        try:
            if isinstance(act, argparse._StoreTrueAction):
                if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                values[dest] = val.lower() in ("true", "1", "yes")
            else:
                values[dest] = act.type(val) if act.type else val
                if act.choices and values[dest] not in act.choices:
                    raise ValueError
        except (ValueError, TypeError):
            raise ConfigError(f"bad value for {key}: {val!r}", lineno, raw.index(val, col) + 1 if val else col) from None
    return values


def parse_args(argv):
    parser, sub = _parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = sub.choices[args.command]
        actions = {a.dest: a for a in sp._actions}
        sp.set_defaults(**_read_config(args.config, actions))
        args = parser.parse_args(argv)
    for name in POSITIVE:
        val = getattr(args, name, None)
        if val is not None and not val > 0:
            raise ConfigError(f"{name} must be positive, got {val}")
    if args.threads < 1:
        raise ConfigError("threads must be at least 1")
    return args


# -- surfaces --------------------------------------------------------------------------


def _spec(args):
    kind = args.builtin
    n = args.n
    if kind == "sphere":
        return GeneralizedCylinderSpec(n, n)
    if kind == "plane":
        return GeneralizedCylinderSpec(0, n)
    if kind == "circle":
        return GeneralizedCylinderSpec(1, 1)
    if kind == "cylinder":
        return GeneralizedCylinderSpec(1 if args.k is None else args.k, n)
    return None


def build_surface(args, resolution=None):
    res = resolution or args.resolution
    if args.input:
        profile, sig = read_profile(args.input)
        return build_from_profile(profile, sig, "discretized")
    if args.builtin is None:
        raise ConfigError("need --input or --builtin")
    if args.builtin == "abresch-langer":
        return build_from_profile(abresch_langer_profile(resolution=res), RotationSignature(0, 0))
    spec = _spec(args)
    if args.builtin == "circle" and args.radius is not None:
        return fl.circle_surface(args.radius, res)
    if args.amplitude:
        return fl.perturbed_cylinder(spec.k, spec.n, args.amplitude, args.wavenumber, res, args.radial)
    if args.builtin == "circle":
        return fl.circle_surface(spec.radius, res)
    if args.discretize and spec.k == spec.n:
        return build_from_profile(round_profile(spec.radius, res), spec.signature)
    return analytic_shrinker(spec, res)


def _exact(args):
    """The builtin is an unperturbed shrinker with a closed-form entropy."""
    return args.input is None and args.builtin in ("cylinder", "sphere", "plane", "circle") \
        and not args.amplitude and (args.radius is None or args.radius == math.sqrt(2))


def _header(args):
    keys = ("command", "input", "builtin", "k", "n", "resolution", "amplitude", "wavenumber", "seed")
    return {k: getattr(args, k, None) for k in keys}


# -- commands --------------------------------------------------------------------------


def cmd_verify(args, rep):
    t = rep.table("verify", ["check", "norm", "h", "observed_order", "pass"])
    errs, hs = {}, []
    for lvl in range(args.levels):
        s = build_surface(args, args.resolution * 2 ** lvl)
        hs.append(s.spacing)
        vals = {"shrinker-residual": shrinker_residual(s).sup_norm()}
        ids = shrinker_identities(s)
        vals.update({"LH-H": ids["LH-H"], "LA-A": ids["LA-A"], "Lx2": ids["Lx2"]})
        try:
            sim = simons_identity_check(s)
            vals.update({"simons-tau": sim["res1"], "simons-norm": sim["res2"]})
        except SurfaceError:
            pass  # needs H > 0
        for k, v in vals.items():
            errs.setdefault(k, []).append(v)
    for name, e in errs.items():
        orders = [None] + observed_order(e)
        ok = e[-1] <= args.tol or (orders[-1] is not None and orders[-1] >= args.min_order)
        for h, v, o in zip(hs, e, orders):
            t.add(name, v, h, o, ok, rep.seed)
        if not ok:
            rep.failures.append(name)
    rep.text["verify"] = {"run": _header(args), "summary": {name: e[-1] for name, e in errs.items()}}


def cmd_entropy(args, rep):
    s = build_surface(args)
    r = entropy(s, EntropySearch())
    dim = s.signature.ambient_dim
    t = rep.table("entropy", [f"x0_{i}" for i in range(dim)] + ["t0", "F"])
    for w, v in sorted(r.search_trace, key=lambda wv: (-wv[1], wv[0].x0, wv[0].t0)):
        t.add(*w.x0, w.t0, v, rep.seed)
    res = {"lambda": r.value, "argmax_x0": list(r.argmax.x0), "argmax_t0": r.argmax.t0,
           "tolerance": r.tolerance, "converged": r.converged}
    if _exact(args):
        oracle = _spec(args).gaussian_area
        res["closed_form"] = oracle
        res["pass"] = abs(r.value - oracle) <= args.tol
        if not res["pass"]:
            rep.failures.append("entropy-closed-form")
    if not r.converged:
        rep.failures.append("entropy-converged")
    rep.text["entropy"] = {"run": _header(args), "result": res}


def cmd_flow(args, rep):
    s = build_surface(args)
    ref = None
    if args.input is None and args.builtin in ("cylinder", "sphere", "circle"):
        spec = _spec(args)
        ref = fl.perturbed_cylinder(spec.k, spec.n, 0.0, resolution=args.resolution)
    traj = fl.run_rescaled_flow(s, args.s_max, ds=args.ds, cadence=args.cadence, reference=ref)
    t = rep.table("flow", ["s", "F", "minH", "maxA", "dV"])
    for i, sn in enumerate(traj.snapshots):
        t.add(sn.s, sn.F_value, sn.min_H, sn.max_A, sn.dV, rep.seed)
        rep.files[f"snapshots/snap_{i:04d}.profile"] = format_profile(sn.surface.to_profile(), sn.surface.signature)
    audit = fl.monotonicity_audit(traj, args.tol)
    if not audit["pass"]:
        rep.failures.append("F-monotone")
    rep.text["flow"] = {"run": _header(args), "result": {
        "snapshots": len(traj), "min_ds": traj.ds, "remesh_events": len(traj.remesh_events),
        "singular": traj.singular, "reason": traj.reason, "max_F_increase": audit["max_increase"],
        "monotone": audit["pass"]}}


def cmd_classify(args, rep):
    s = build_surface(args)
    cert = classify_cylinder(s, args.R, args.delta0, args.C0, args.lambda0)
    res = {"verdict": cert.verdict, "failed_stage": cert.failed_stage, "k": cert.k,
           "min_H": cert.min_H, "max_A": cert.max_A, "eps_tau": cert.eps_tau,
           "residual": cert.residual, "dV": cert.dV}
    params = {"R": args.R, "delta0": args.delta0, "C0": args.C0, "lambda0": args.lambda0, "theta": args.theta}
    sections = {"run": _header(args), "parameters": params, "certificate": res,
                "checks": dict(cert.checks)}
    sp = cert.spectrum
    if sp is not None:
        t = rep.table("spectrum", ["cell", "H"] + [f"ev_{i}" for i in range(s.n)] + [f"near_zero_{i}" for i in range(s.n)])
        H = s.mean_curvature
        for row, cell in enumerate(sp.cells):
            t.add(int(cell), H[cell], *sp.eigenvalues[row], *sp.near_zero[row], rep.seed)
    if cert.verdict == "inconclusive":
        rep.failures.append(f"classify:{cert.failed_stage}")
    if args.rounds:
        t = rep.table("iteration", ["round", "R", "relaxed_R", "min_H", "max_A", "relaxed", "sharp_R",
                                    "sharp_min_H", "sharp_max_A", "sharp", "failed"])
        try:
            rows = iteration_experiment(s, args.R, args.rounds, args.theta, args.delta0, args.C0)
        except SurfaceError as err:
            rows = []
            sections["iteration"] = {"error": str(err)}
            rep.failures.append("iteration-precondition")
        for r in rows:
            t.add(r["round"], r["R"], r["relaxed_R"], r["min_H"], r["max_A"], r["relaxed"], r["sharp_R"],
                  r["sharp_min_H"], r["sharp_max_A"], r["sharp"], r.get("failed", ""), rep.seed)
            if "failed" in r:
                rep.failures.append(f"iteration:{r['failed']}")
    rep.text["certificate"] = sections


def cmd_gap(args, rep):
    spec = _spec(args) if args.input is None else None
    if spec is None or spec.k == 0:
        raise ConfigError("gap needs --builtin cylinder, sphere or circle")

    def one(a):
        return fl.gap_experiment(spec.k, spec.n, a, args.wavenumber, args.budget, args.radial,
                                 None if args.resolution == 256 else args.resolution)

    with ThreadPoolExecutor(max_workers=args.threads) as ex:
        reports = list(ex.map(one, args.amplitudes))
    t = rep.table("gap", ["amplitude", "outcome", "final_dV", "entropy_drop", "below_lambda"])
    iv = rep.table("intervals", ["amplitude", "s0", "F_drop", "dV_drift"])
    for a, r in zip(args.amplitudes, reports):
        t.add(a, r.outcome, r.final_dV, r.entropy_drop, r.below_lambda, rep.seed)
        for s0, drop, drift in r.intervals:
            iv.add(a, s0, drop, drift, rep.seed)
        if r.outcome != "returned-to-cylinder" and r.below_lambda < args.gap_min:
            rep.failures.append(f"gap:{a}")
    tr = rep.table("trend", ["delta", "max_dV_drift", "intervals"])
    for d, m, c in fl.compactness_trend(reports):
        tr.add(d, m, c, rep.seed)
    rep.text["gap"] = {"run": _header(args), "result": {"lambda": spec.gaussian_area, "gap_min": args.gap_min,
                                                        "runs": len(reports)}}


def cmd_bounds(args, rep):
    s = build_surface(args)
    lam0 = args.lambda0
    if lam0 is None:
        lam0 = _spec(args).gaussian_area if _exact(args) else entropy(s).value
    t = rep.table("bounds", ["check", "R", "s", "lhs", "rhs", "pass"])

    def add(name, R, sv, d):
        lhs = d.get("tail", d.get("lhs", d.get("eps_tau")))
        rhs = d.get("bound", d.get("rhs"))
        t.add(name, R, sv, lhs, rhs, d["pass"], rep.seed)
        if not d["pass"]:
            rep.failures.append(f"{name}:R={R:g}")

    for R in args.radii:
        add("tail", R, None, gaussian_tail(s, R, lam0))
    if np.all(s.mean_curvature[s.active] > 0):
        for R, sv in args.pairs:
            add("effective", R, sv, effective_gradient_bound(s, R, sv))
        R = max(args.radii + [p[0] for p in args.pairs])
        try:
            add("tau-certificate", R, None, tau_gradient_certificate(s, R))
        except SurfaceError as err:
            rep.failures.append(f"tau-certificate: {err}")
    rng = np.random.default_rng(args.seed)
    dim = s.signature.ambient_dim
    for _ in range(args.samples):
        y = rng.uniform(-1, 1, dim)
        sv = float(rng.uniform(1.05, 2.0))
        a = float(rng.uniform(-0.9 / sv ** 2, 1.0))
        d = rescaling_inequality_check(s, y, a, sv)
        add("rescaling", float(np.linalg.norm(y)), sv, d)
    rep.text["bounds"] = {"run": _header(args), "result": {"lambda0": lam0, "F": F(s)}}


COMMANDS = {"verify": cmd_verify, "entropy": cmd_entropy, "flow": cmd_flow,
            "classify": cmd_classify, "gap": cmd_gap, "bounds": cmd_bounds}


def run(args):
    rep = Report(seed=args.seed)
    COMMANDS[args.command](args, rep)
    emit_report(rep, args.out)
    return rep


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        rep = run(args)
    except (ConfigError, ProfileParseError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return 2
    except ReportError as err:
        print(f"output error: {err}", file=sys.stderr)
        return 3
    except SurfaceError as err:
        print(f"rejected: {err}", file=sys.stderr)
        return 1
    if rep.failures:
        print("failed checks: " + ", ".join(rep.failures), file=sys.stderr)
        return 1
    print(f"ok: {args.command} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
