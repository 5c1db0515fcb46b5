"""Command line surface.

    spherekit gen grid --dim 2 --half-width 64 --alpha 0 -o space.json
    spherekit validate space.json
    spherekit sphericalize space.json --q 4 -o sph.json
    spherekit check doubling|dim|perfect|annular|ahlfors|poincare|necessity ...
    spherekit solve --space space.json --p 2 --domain dom.json --boundary bnd.json
    spherekit capacity --space space.json --p 2 --core E.json --omega Om.json
    spherekit classify --space space.json --p 2 --q 4
    spherekit dirichlet solve|probe-infinity|barrier|perturb ...
    spherekit pipeline plan.json
    spherekit plot report.json --series name

Exit codes: 0 pass, 1 a check's verdict failed, 2 usage or I/O error.
Reports are deterministic JSON for a fixed seed (wall clock kept out of
the hashed body).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import dirichlet as diri
from .config import ExperimentConfig, load_config
from .potential import (
    EnergyForm,
    FunctionField,
    capacity_at_infinity_probe,
    classify_parabolicity,
    condenser_capacity,
    p_energy,
    solve_p_harmonic,
)
from .reports import Report, emit_plot_data
from .space import (
    INFINITY,
    Space,
    SpaceValidationError,
    generate_grid,
    load_space,
    serialize_space,
)
from .sphere import sphericalize

FAIL_VERDICTS = {"FAIL", "FAILURE"}


def _load_space_arg(args) -> Space:
    if getattr(args, "grid", None):
        dim, hw, alpha = args.grid.split(",")
        return generate_grid(int(dim), int(hw), float(alpha))
    if getattr(args, "space", None):
        return load_space(args.space)
    raise SpaceValidationError("no space given: pass a space file or --grid dim,R,alpha")


def _write_or_print(args, report: Report) -> None:
    if getattr(args, "out", None):
        report.write(args.out)
    else:
        print(report.to_json())
    if getattr(args, "csv", None) and report.series:
        name = args.series or next(iter(sorted(report.series)))
        Path(args.csv).write_text(emit_plot_data(report, name), encoding="utf8")


def _exit_for(report: Report) -> int:
    return 1 if (report.verdict or "").upper() in FAIL_VERDICTS else 0


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.kind != "grid":
        raise SpaceValidationError(f"unknown generator {args.kind!r}")
    space = generate_grid(args.dim, args.half_width, args.alpha)
    doc = serialize_space(space)
    text = json.dumps(doc)
    if args.out:
        Path(args.out).write_text(text, encoding="utf8")
    else:
        print(text)
    return 0


def cmd_validate(args) -> int:
    space = load_space(args.file)
    print(f"valid space: {space.n_points} points, {len(space.edges)} edges, "
          f"base {space.base_point!r}")
    return 0


def cmd_sphericalize(args) -> int:
    space = _load_space_arg(args)
    sph = sphericalize(space, args.q)
    doc = serialize_space(space)
    doc["q"] = sph.q
    doc["infinity"] = INFINITY
    doc["hat_masses"] = {pid: float(m) for pid, m in zip(space.ids, sph.hat_masses)}
    doc["hat_masses"][INFINITY] = 0.0
    text = json.dumps(doc)
    if args.out:
        Path(args.out).write_text(text, encoding="utf8")
    else:
        print(text)
    return 0


def _check_report(args, name: str) -> Report:
    cfg = {
        "seed": args.seed,
        "samples": args.samples,
        "q": args.q,
        "radius_range": [args.r_min, args.r_max],
        "space": args.space or args.grid,
    }
    return Report(command=f"check {name}", config=cfg)


def cmd_check(args) -> int:
    space = _load_space_arg(args)
    obj = sphericalize(space, args.q) if args.q is not None else space
    t0 = time.perf_counter()
    rep = _check_report(args, args.what)
    if args.what == "doubling":
        est = geo.doubling_constant(obj, (args.r_min, args.r_max), args.samples, args.seed)
        rep.check = "ball-measure-doubling"
        rep.constants = {"C_mu": est.value}
        rep.verdict = "PASS"
        rep.add_evidence(est.rows)
        rep.add_series("doubling", "radius", "measure_ratio",
                       [(r["radius"], r["ratio"]) for r in est.rows])
    elif args.what == "dim":
        fit = geo.dimension_exponents(space, max(1.0, args.r_min), args.r_max)
        rep.check = "central-ball-growth-exponent"
        rep.constants = {"s": fit.s, "C_s": fit.C_s, "q_bar_infinity": fit.q_bar_infinity}
        rep.verdict = "PASS"
        rep.add_evidence([{"r": float(r), "mass": float(m)}
                          for r, m in zip(fit.radii, fit.masses)])
        rep.add_series("mass_growth", "radius", "central_ball_mass",
                       list(zip(fit.radii, fit.masses)))
    elif args.what == "perfect":
        res = geo.uniform_perfectness(space)
        rep.check = "annulus-nonemptiness-at-base"
        rep.constants = {"kappa": res.kappa, "tested_up_to": res.tested_up_to}
        rep.verdict = "PASS" if res.ok else "FAILURE"
        if res.witness_radius is not None:
            rep.add_evidence([{"empty_annulus_at": res.witness_radius}])
    elif args.what == "annular":
        res = geo.annular_connectedness(space)
        rep.check = "annular-connectedness"
        rep.constants = {"A": res.A, "R_A": res.R_A}
        rep.verdict = "PASS" if res.ok else "FAILURE"
        rep.add_evidence(res.levels)
    elif args.what == "ahlfors":
        if args.Q is None:
            raise SpaceValidationError("check ahlfors needs --Q")
        est = geo.ahlfors_regularity(obj, args.Q, (args.r_min, args.r_max),
                                     args.samples, args.seed)
        rep.check = "ball-measure-vs-radius-power"
        rep.constants = {"Q": est.Q, "c_low": est.c_low, "c_high": est.c_high,
                         "spread": est.spread}
        rep.verdict = "PASS"
        rep.add_evidence(est.rows)
        rep.add_series("ahlfors", "radius", "measure_over_r_to_Q",
                       [(r["radius"], r["ratio"]) for r in est.rows])
    elif args.what == "poincare":
        battery = geo.make_test_battery(obj, args.seed)
        est = geo.poincare_probe(obj, args.p, args.dilation, args.samples,
                                 battery, args.seed)
        rep.check = "mean-oscillation-vs-gradient (lower bound)"
        rep.constants = {"C_PI_lower": est.value, "p": est.p, "lambda": est.dilation}
        rep.verdict = "PASS"
        rep.add_evidence(est.rows[:64])
    elif args.what == "necessity":
        if args.q is None:
            raise SpaceValidationError("check necessity needs --q")
        ladder = [float(x) for x in args.ladder.split(",")]
        repn = geo.necessity_experiment(space, args.q, ladder,
                                        samples=args.samples, seed=args.seed)
        rep.check = "doubling-stability-across-truncations"
        rep.constants = {"q": repn.q, "s": repn.s_measured, "growth": repn.growth}
        rep.verdict = repn.verdict
        rep.add_evidence(repn.rungs)
        rep.add_series("necessity", "truncation", "doubling_estimate",
                       [(r["truncation"], r["doubling"]) for r in repn.rungs])
    else:
        raise SpaceValidationError(f"unknown check {args.what!r}")
    rep.wall_clock_s = time.perf_counter() - t0
    _write_or_print(args, rep)
    return _exit_for(rep)


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf8"))


def cmd_solve(args) -> int:
    space = _load_space_arg(args)
    domain = set(_read_json(args.domain))
    boundary = FunctionField(_read_json(args.boundary))
    if args.form == "spherical":
        obj = sphericalize(space, args.q if args.q is not None else 2.0 * args.p)
        form = EnergyForm(args.p, "spherical", obj.q)
    else:
        obj, form = space, EnergyForm(args.p, "base")
    u, info = solve_p_harmonic(form, obj, domain, boundary, tol=args.tol, return_info=True)
    rep = Report(command="solve", config={"p": args.p, "q": args.q, "form": args.form,
                                          "space": args.space or args.grid})
    rep.check = "energy-minimizer"
    rep.constants = {"residual": info.residual, "energy": info.energy,
                     "iterations": info.iterations}
    rep.verdict = "PASS" if info.converged else "FAILURE"
    rep.add_evidence([{"values": dict(u)}])
    rep.wall_clock_s = None
    _write_or_print(args, rep)
    return _exit_for(rep)


def cmd_capacity(args) -> int:
    space = _load_space_arg(args)
    core = set(_read_json(args.core))
    omega = set(_read_json(args.omega))
    if args.form == "spherical":
        obj = sphericalize(space, args.q if args.q is not None else 2.0 * args.p)
        form = EnergyForm(args.p, "spherical", obj.q)
    else:
        obj, form = space, EnergyForm(args.p, "base")
    cap = condenser_capacity(form, obj, core, omega)
    rep = Report(command="capacity", config={"p": args.p, "q": args.q, "form": args.form,
                                             "space": args.space or args.grid})
    rep.check = "condenser-capacity"
    rep.constants = {"capacity": cap}
    rep.verdict = "PASS"
    _write_or_print(args, rep)
    return 0


def cmd_classify(args) -> int:
    space = _load_space_arg(args)
    ladder = [float(x) for x in args.ladder.split(",")] if args.ladder else None
    repc = classify_parabolicity(space, args.p, args.q, truncation_ladder=ladder,
                                 r_max=args.r_max)
    rep = Report(command="classify", config={"p": args.p, "q": args.q,
                                             "space": args.space or args.grid,
                                             "ladder": args.ladder})
    rep.check = "volume-integral-tail-test"
    rep.constants = {
        "verdict": repc.verdict,
        "fitted_exponent": repc.exponent,
        "sigma": repc.sigma,
        "partial_sums": repc.partial_sums,
    }
    rep.verdict = repc.verdict
    rep.add_evidence(repc.rows)
    rep.add_series(
        "parabolicity", "log2_radius", "log2_partial_sum",
        [(float(np.log2(r)), float(np.log2(max(s, 1e-300))))
         for r, s in zip(repc.rows[-1]["radii"],
                         np.cumsum(repc.rows[-1]["increments"]))],
    )
    _write_or_print(args, rep)
    return 0


def cmd_dirichlet(args) -> int:
    space = _load_space_arg(args)
    q = args.q if args.q is not None else 2.0 * args.p
    rep = Report(command=f"dirichlet {args.what}",
                 config={"p": args.p, "q": q, "space": args.space or args.grid,
                         "inner_radius": args.inner_radius, "seed": args.seed})
    t0 = time.perf_counter()
    if args.what == "solve":
        sph = sphericalize(space, q)
        dom, bnd = diri.exterior_domain(space, args.inner_radius)
        data = FunctionField({b: args.boundary_value for b in bnd})
        data[INFINITY] = args.infinity_value
        res = diri.perron_solve(diri.DirichletProblem(sph, dom, data, args.p))
        rep.check = "boundary-value-problem-with-infinity"
        rep.constants = {"outer_ring_mean": res.outer_ring_mean,
                         "outer_ring_osc": res.outer_ring_osc,
                         "residual": res.residual,
                         "connection_radius": res.connection_radius,
                         "connection_sensitivity": res.connection_sensitivity}
        rep.verdict = "PASS"
    elif args.what == "probe-infinity":
        ladder = [float(x) for x in args.ladder.split(",")]

        def make_const(c_bnd, c_inf):
            def make(sub):
                _, bnd = diri.exterior_domain(sub, args.inner_radius)
                d = FunctionField({b: c_bnd for b in bnd})
                d[INFINITY] = c_inf
                return d
            return make

        battery = [("zero-data-one-at-infinity", make_const(0.0, 1.0)),
                   ("zero-data-zero-at-infinity", make_const(0.0, 0.0)),
                   ("mixed-data", make_const(0.25, 0.75))]
        res = diri.regularity_probe(space, args.inner_radius, args.p, q,
                                    battery, ladder)
        rep.check = "boundary-behaviour-at-infinity"
        rep.constants = {"classification": res.classification,
                         "attains_all": res.attains_all,
                         "limit_exists_all": res.limit_exists_all}
        rep.verdict = res.classification
        rep.add_evidence(res.rows)
        rep.add_series("probe", "truncation", "outer_ring_mean",
                       [(r["truncation"], r["ring_mean"]) for r in res.rows])
    elif args.what == "barrier":
        sph = sphericalize(space, q)
        dom, _ = diri.exterior_domain(space, args.inner_radius)
        field_vals = FunctionField(_read_json(args.field))
        res = diri.barrier_check(sph, dom, field_vals, args.p, tol=args.tol)
        rep.check = "barrier-at-infinity"
        rep.constants = {"superharmonic_slack": res.superharmonic_slack,
                         "decay_ratio": res.decay_ratio,
                         "boundary_margin": res.boundary_margin}
        rep.verdict = "PASS" if res.passed else "FAIL"
        rep.add_evidence(res.failures)
    elif args.what == "perturb":
        sph = sphericalize(space, q)
        dom, bnd = diri.exterior_domain(space, args.inner_radius)
        data = FunctionField({b: args.boundary_value for b in bnd})
        data[INFINITY] = args.infinity_value
        bnd_sorted = sorted(bnd)
        sizes = [max(1, len(bnd_sorted) // (2**k)) for k in range(args.steps)]
        sets = [set(bnd_sorted[:s]) for s in sizes]
        res = diri.resolutive_perturbation_test(sph, dom, data, args.p, sets,
                                                args.h_magnitude)
        rep.check = "boundary-perturbation-vs-capacity"
        rep.constants = {"final_ratio": res.final_ratio, "monotone": res.monotone}
        rep.verdict = "PASS" if res.passed else "FAIL"
        rep.add_evidence(res.rows)
        rep.add_series("perturb", "capacity", "solution_sup_diff",
                       [(r["capacity"], r["sup_diff_core"]) for r in res.rows])
    else:
        raise SpaceValidationError(f"unknown dirichlet command {args.what!r}")
    rep.wall_clock_s = time.perf_counter() - t0
    _write_or_print(args, rep)
    return _exit_for(rep)


def cmd_pipeline(args) -> int:
    plan_path = Path(args.plan)
    if not plan_path.exists():
        print(f"pipeline plan not found: {plan_path}", file=sys.stderr)
        return 2
    plan = json.loads(plan_path.read_text(encoding="utf8"))
    cfg = ExperimentConfig(**plan.get("config", {}))
    out_dir = Path(args.out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    commands = plan.get("commands", [])
    index = {"schema": "spherekit/1", "config_seed": cfg.seed, "reports": []}
    code = 0
    for k, argv in enumerate(commands):
        argv = list(argv) if isinstance(argv, list) else str(argv).split()
        if "--seed" not in argv:
            argv += ["--seed", str(cfg.seed + k)]
        name = f"report-{k:02d}-{argv[0]}"
        out = out_dir / f"{name}.json"
        if "--out" not in argv and argv[0] not in ("validate", "plot"):
            argv += ["--out", str(out)]
        rc = main(argv, _from_pipeline=True)
        index["reports"].append({"step": k, "argv": argv, "exit": rc,
                                 "report": str(out) if out.exists() else None})
        if rc == 2:
            code = 2
            break
        code = max(code, rc)
    (out_dir / "bundle.json").write_text(
        json.dumps(index, sort_keys=True, indent=1) + "\n", encoding="utf8"
    )
    return code


def cmd_plot(args) -> int:
    doc = _read_json(args.report)
    rep = Report(command=doc.get("command", "?"), config=doc.get("config", {}))
    rep.series = doc.get("series", {})
    csv = emit_plot_data(rep, args.series)
    if args.out:
        Path(args.out).write_text(csv, encoding="utf8")
    else:
        print(csv, end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_space_args(sp, with_q=True):
    sp.add_argument("--space", help="space document (JSON)")
    sp.add_argument("--grid", help="generate instead: dim,half_width,alpha")
    if with_q:
        sp.add_argument("--q", type=float, default=None,
                        help="sphericalize with this mass exponent first")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spherekit", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="TOML or JSON experiment config")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a space")
    g.add_argument("kind", choices=["grid"])
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--half-width", type=int, required=True)
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("-o", "--out")
    g.set_defaults(fn=cmd_gen)

    v = sub.add_parser("validate", help="validate a space document")
    v.add_argument("file")
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("sphericalize", help="attach ∞ and transformed masses")
    s.add_argument("space", nargs="?")
    s.add_argument("--grid")
    s.add_argument("--q", type=float, required=True)
    s.add_argument("-o", "--out")
    s.set_defaults(fn=cmd_sphericalize)

    c = sub.add_parser("check", help="geometry estimators and verifiers")
    c.add_argument("what", choices=["doubling", "dim", "perfect", "annular",
                                    "ahlfors", "poincare", "necessity"])
    _add_space_args(c)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--samples", type=int, default=200)
    c.add_argument("--r-min", type=float, default=1.0)
    c.add_argument("--r-max", type=float, default=16.0)
    c.add_argument("--Q", type=float, default=None)
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--dilation", type=float, default=2.0)
    c.add_argument("--ladder", default="16,32,64")
    c.add_argument("--out")
    c.add_argument("--csv")
    c.add_argument("--series")
    c.set_defaults(fn=cmd_check)

    so = sub.add_parser("solve", help="p-harmonic Dirichlet solve")
    _add_space_args(so)
    so.add_argument("--p", type=float, required=True)
    so.add_argument("--form", choices=["base", "spherical"], default="base")
    so.add_argument("--domain", required=True, help="JSON list of point ids")
    so.add_argument("--boundary", required=True, help="JSON {id: value}")
    so.add_argument("--tol", type=float, default=1e-10)
    so.add_argument("--out")
    so.set_defaults(fn=cmd_solve)

    ca = sub.add_parser("capacity", help="condenser capacity")
    _add_space_args(ca)
    ca.add_argument("--p", type=float, required=True)
    ca.add_argument("--form", choices=["base", "spherical"], default="base")
    ca.add_argument("--core", required=True, help="JSON list of point ids")
    ca.add_argument("--omega", required=True, help="JSON list of point ids")
    ca.add_argument("--out")
    ca.set_defaults(fn=cmd_capacity)

    cl = sub.add_parser("classify", help="parabolic/hyperbolic tail test")
    _add_space_args(cl)
    cl.add_argument("--p", type=float, required=True)
    cl.add_argument("--ladder", default=None)
    cl.add_argument("--r-max", type=float, default=None)
    cl.add_argument("--out")
    cl.set_defaults(fn=cmd_classify)

    d = sub.add_parser("dirichlet", help="problems with ∞ on the boundary")
    d.add_argument("what", choices=["solve", "probe-infinity", "barrier", "perturb"])
    _add_space_args(d)
    d.add_argument("--p", type=float, default=2.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--inner-radius", type=float, default=2.0)
    d.add_argument("--boundary-value", type=float, default=0.0)
    d.add_argument("--infinity-value", type=float, default=1.0)
    d.add_argument("--ladder", default="16,24,32")
    d.add_argument("--field", help="JSON {id: value} candidate barrier")
    d.add_argument("--tol", type=float, default=0.05)
    d.add_argument("--h-magnitude", type=float, default=1.0)
    d.add_argument("--steps", type=int, default=4)
    d.add_argument("--out")
    d.add_argument("--csv")
    d.add_argument("--series")
    d.set_defaults(fn=cmd_dirichlet)

    pl = sub.add_parser("pipeline", help="run a named sequence of commands")
    pl.add_argument("plan", help="JSON plan: {config: {...}, commands: [[...], ...]}")
    pl.add_argument("--out", help="bundle output directory")
    pl.set_defaults(fn=cmd_pipeline)

    po = sub.add_parser("plot", help="emit a CSV series from a report")
    po.add_argument("report")
    po.add_argument("--series", required=True)
    po.add_argument("-o", "--out")
    po.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None, _from_pipeline: bool = False) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0,) else 0
    try:
        if args.config:
            load_config(args.config)  # validated; commands read seeds from flags
        return args.fn(args)
    except (SpaceValidationError, FileNotFoundError, KeyError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
