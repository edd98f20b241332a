"""Command-line front end.

    srblab <command> [--config PATH] [--seed N] [--out DIR] [--workers N] [--figures]

Exit codes: 0 pass, 1 acceptance failure, 2 usage or configuration error,
3 numerical failure. Every CSV carries a '#' block with the tool version,
command, config digest and seed; wall-clock data only goes to the JSON
manifest so that the CSVs of two runs can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from . import flow as fl
from . import hyperbolicity as hy
from . import measures as ms
from . import perturbation as pt
from .config import ConfigError, default_config, load_config
from .errors import DegenerateSplittingError, InputError, IntegrationError, NumericalFailure
from .io import header_digest, write_csv
from .systems import list_systems

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class Run:
    """Output directory, provenance header and manifest of one command."""

    def __init__(self, command, cfg, out, figures=False, quiet=False):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.figures = figures
        self.quiet = quiet
        self.header = [f"srblab {__version__}", f"command={command}", f"config_digest={cfg.digest}",
                       f"seed={cfg.seed}", f"system={cfg['system']['name']}"]
        self.files = []
        self.summary = {}
        self.checks = {}
        self.extra = {}
        self.started = _dt.datetime.now(_dt.timezone.utc)
        self.t0 = time.perf_counter()

    def say(self, msg):
        if not self.quiet:
            print(msg)

    def csv(self, name, columns, rows, int_cols=0):
        path = write_csv(self.out / name, columns, rows, self.header, int_cols)
        self.files.append(name)
        return path

    def record(self, name, rec):
        return self.csv(name, ["key", "value"], list(rec.items()))

    def table(self, name, tab):
        return self.csv(name, tab["columns"], tab["rows"])

    def figure(self, fn_name, name, *args, **kw):
        if not self.figures:
            return
        from . import plotting
        self.out.mkdir(parents=True, exist_ok=True)
        getattr(plotting, fn_name)(*args, self.out / name, **kw)
        self.files.append(name)

    @property
    def passed(self):
        return all(bool(v) for v in self.checks.values())

    def finish(self):
        manifest = {
            "tool": "srblab",
            "version": __version__,
            "command": self.command,
            "config_digest": self.cfg.digest,
            "seed": self.cfg.seed,
            "config": self.cfg.normalized(),
            "rerun": f"srblab {self.command} --config manifest_{self.command}.json",
            "wall_clock_start": self.started.isoformat(timespec="seconds"),
            "elapsed_seconds": round(time.perf_counter() - self.t0, 3),
            "summary": _jsonable(self.summary),
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "passed": self.passed,
            "outputs": self.files,
        }
        manifest.update(_jsonable(self.extra))
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / f"manifest_{self.command}.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for k, v in self.checks.items():
            self.say(f"{k}: {'pass' if v else 'FAIL'}")
        return EXIT_OK if self.passed else EXIT_FAIL


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _start(cfg, f):
    s = cfg["system"]
    x0 = np.asarray(s["x0"], dtype=float)
    if s["t_transient"] > 0:
        return fl.flow_map(f, x0, s["t_transient"], s["tolerance"])
    return x0


def _seeds(cfg, command, n):
    # command-specific stream, independent of every other command
    key = sum(ord(ch) * 31 ** i for i, ch in enumerate(command)) % (2**32)
    return np.random.SeedSequence([cfg.seed, key]).spawn(n)


def _kernel(cfg, f, eps, seed):
    m = cfg["map"]
    return pt.MarkovKernel.create(f, m["tau"], eps, m["boundary_policy"], seed=seed, tol=m["tolerance"])


def _grid(cfg, f):
    return ms.GridPartition(f.trapping_region, cfg["grid"]["resolution"])


# ---------------------------------------------------------------- commands


def cmd_simulate(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    s = cfg["simulate"]
    traj = fl.simulate(f, cfg["system"]["x0"], s["dt"], s["n"], cfg["system"]["tolerance"])
    traj.to_csv(run.out / "trajectory.csv", run.header)
    run.files.append("trajectory.csv")
    run.summary = {"points": len(traj.points), "final": traj.points[-1].tolist(),
                   "max_step_defect": float(traj.step_defects().max()) if len(traj.points) > 1 else 0.0}
    run.figure("trajectory", "trajectory.png", traj.points)
    run.say(f"wrote {len(traj.points)} points to {run.out / 'trajectory.csv'}")


def cmd_lyapunov(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["lyapunov"]
    rep = hy.lyapunov_spectrum(f, cfg["system"]["x0"], c["t_transient"], c["t_average"], c["qr_interval"],
                               c["tolerance"])
    rec = rep.as_record()
    run.record("lyapunov.csv", rec)
    cols = ["t"] + [f"lambda{i + 1}" for i in range(f.dimension)]
    run.csv("lyapunov_history.csv", cols, rep.convergence_history)
    run.summary = rec
    run.figure("lyapunov_history", "lyapunov_history.png", rep.convergence_history)
    run.say("exponents: " + " ".join(f"{v:.6f}" for v in rep.exponents)
            + f"  (Liouville residual {rep.liouville_residual:.3e})")


def cmd_diagnose(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["diagnose"]
    orbit = fl.simulate(f, _start(cfg, f), c["dt"], c["n_steps"], cfg["system"]["tolerance"])
    split = hy.estimate_splitting(f, orbit, c["stable_dim"], trim_time=c["trim_time"],
                                  rng=np.random.default_rng(_seeds(cfg, "diagnose", 1)[0]))
    check = hy.hyperbolic_check if c["hyperbolic"] else hy.check_sectional_conditions
    rep = check(f, split, c["horizon"], n_base=c["n_base"], exclusion=c["exclusion"],
                residual_threshold=c["residual_threshold"])
    ds, dc = split.invariance_defect()
    rec = rep.as_record()
    rec.update(min_angle=split.min_angle, stable_invariance_defect=ds, central_invariance_defect=dc)
    run.record("diagnose.csv", rec)
    run.csv("diagnose_curves.csv", ["curve", "t", "value"], list(rep.rows()))
    run.csv("diagnose_angles.csv", ["index", "t", "angle"],
            np.column_stack([np.arange(len(split.angles)), split.base_orbit.times, split.angles]), int_cols=1)
    run.summary = rec
    run.checks = {"contraction_negative": rep.contraction_rate < 0, "domination_negative": rep.domination_rate < 0,
                  "sectional_positive": rep.sectional_rate > 0,
                  "fits_conclusive": not any(rep.inconclusive[k] for k in ("contraction", "domination", "sectional"))}
    if c["hyperbolic"]:
        run.checks["unstable_positive"] = rep.extra["unstable_rate"] > 0
    run.figure("rate_curves", "diagnose_curves.png", rep.times, rep.curves)
    run.say(f"contraction {rep.contraction_rate:.4f}  domination {rep.domination_rate:.4f}  "
            f"sectional {rep.sectional_rate:.4f}  (n_base {rep.sample_size})")


def cmd_shadow(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["shadow"]
    F = fl.TimeTauMap(f, cfg["map"]["tau"], c["tolerance"])
    rng = np.random.default_rng(_seeds(cfg, "shadow", 1)[0])
    x = _start(cfg, f)
    po = fl.generate_pseudo_orbit(F, x, c["delta"], c["n"], rng)
    res = fl.shadow_search(po, F, max_iter=c["max_iter"], c_est=c["c_est"])
    po.to_csv(run.out / "pseudo_orbit.csv", run.header)
    run.files.append("pseudo_orbit.csv")
    run.record("shadow_result.csv", res.as_record())
    rows, rec, checks = acc.shadow_study(F, x, c["n_orbits"], c["n_list"], c["n"], c["delta"], c["c_est"],
                                         c["max_iter"], rng)
    run.csv("shadow.csv", acc.SHADOW_COLUMNS, rows)
    run.record("shadow_summary.csv", rec)
    run.summary, run.checks = rec, checks
    R = np.array(rows)
    run.figure("shadow_deviation", "shadow.png", R[:, 1], R[:, 2])
    run.say(f"{rec['converged_at_n']}/{c['n_orbits']} converged at n={c['n']}, "
            f"deviation ~ n^{rec['loglog_slope']:.2f}")


def cmd_chain(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    s1, s2 = _seeds(cfg, "chain", 2)
    k = _kernel(cfg, f, cfg["stationary"]["epsilon"], s1)
    sample = pt.run_chain(k, _start(cfg, f), cfg["simulate"]["n"], seed=int(s2.generate_state(1)[0]))
    sample.to_csv(run.out / "chain.csv", run.header)
    run.files.append("chain.csv")
    run.summary = {"states": len(sample.states), "mean": sample.states.mean(0).tolist()}
    run.say(f"wrote {len(sample.states)} chain states")


def cmd_stationary(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["stationary"]
    s = _seeds(cfg, "stationary", 3)
    k = _kernel(cfg, f, c["epsilon"], s[0])
    grid = _grid(cfg, f)
    mu = pt.estimate_stationary(k, _start(cfg, f), c["burn_in"], c["n_samples"], grid, n_chains=c["n_chains"],
                                min_samples=c["min_samples"], seed=s[1], workers=cfg.workers)
    mu.to_csv(run.out / "stationary.csv", run.header)
    run.files.append("stationary.csv")
    rep = pt.check_stationarity(k, mu, c["n_test"], seed=s[2], n_boot=c["n_boot"])
    rec = {"epsilon": c["epsilon"], "support": int(mu.support().size), "mean": mu.mean().tolist()}
    rec.update(rep.as_record())
    run.record("stationarity.csv", rec)
    run.summary = rec
    run.checks = {"stationarity_within_3_floor": rep.passed}
    run.figure("marginals", "stationary_marginals.png", mu)
    run.say(f"stationarity defect {rep.defect:.4g} vs floor {rep.floor:.4g}")


def cmd_avoidance(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["avoidance"]
    m = cfg["map"]
    rows, rec, checks = acc.avoidance_study(
        f, _start(cfg, f), c["eps_list"], c["gamma"], c["n_mc"], c["min_slope"],
        {"tau": m["tau"], "policy": m["boundary_policy"], "tol": m["tolerance"]},
        _seeds(cfg, "avoidance", 1)[0], cfg.workers)
    run.csv("avoidance.csv", acc.AVOIDANCE_COLUMNS, rows)
    run.record("avoidance_summary.csv", rec)
    run.summary, run.checks = rec, checks
    R = np.array(rows)
    run.figure("avoidance", "avoidance.png", R[:, 0], R[:, 3], R[:, 4], R[:, 5])
    for r in rows:
        run.say(f"eps={r[0]:<8g} k={r[1]:<3d} P={r[3]:.3e} [{r[4]:.2e}, {r[5]:.2e}]")


def cmd_rectangle(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["rectangle"]
    m = cfg["map"]
    rows, rec, checks = acc.rectangle_study(
        f, _start(cfg, f), c["epsilon"], c["eta0"], c["rho"], c["thickness"], c["n_rectangles"], c["max_ratio"],
        {"tau": m["tau"], "policy": m["boundary_policy"], "tol": m["tolerance"]}, cfg["stationary"],
        _grid(cfg, f), _seeds(cfg, "rectangle", 1)[0], cfg.workers)
    run.csv("rectangle.csv", acc.RECTANGLE_COLUMNS, rows)
    run.record("rectangle_summary.csv", rec)
    run.summary, run.checks = rec, checks
    R = np.array(rows)
    run.figure("rectangle_ratios", "rectangle.png", R[:, 1], R[:, 4], R[:, 0])
    run.say(f"max mass/mes_u spread {rec['max_ratio_spread']:.3f} over {rec['rectangles']} rectangles")


def cmd_stability(run, args):
    cfg = run.cfg
    f = cfg.build_system()
    c = cfg["stability"]
    st = cfg["stationary"]
    m = cfg["map"]
    grid = _grid(cfg, f)
    x = _start(cfg, f)
    srb = ms.srb_estimate(f, x, 0.0, c["srb_average"], c["srb_sample_dt"], grid, tol=cfg["system"]["tolerance"])
    analytic = None
    if f.name == "ou1d":
        a = f.parameters["a"]
        analytic = np.array([acc.ou_stationary_std(a, m["tau"], e) * math.sqrt(2 / math.pi) for e in c["eps_list"]])
    chain = pt.ChainConfig(x, tau=m["tau"], burn_in=st["burn_in"], n_samples=st["n_samples"],
                           n_chains=st["n_chains"], tol=m["tolerance"], policy=m["boundary_policy"],
                           min_samples=st["min_samples"])
    table = ms.stability_study(f, c["eps_list"], chain, grid, srb=srb, seed=_seeds(cfg, "stability", 1)[0],
                               n_boot=st["n_boot"], analytic=analytic, workers=cfg.workers)
    rows = list(table.rows())
    run.csv("stability.csv", ["eps", "distance", "floor", "analytic"], rows)
    rec = {"monotone": int(table.monotone), "final_within_2_floor": int(table.final_within_floor)}
    run.checks = {"monotone": table.monotone}
    if analytic is not None:
        rel = np.abs(table.distances - analytic) / analytic
        rec["max_analytic_rel_error"] = float(rel.max())
        run.checks["closed_form_10pct"] = bool(np.all(rel <= 0.10))
    else:
        run.checks["final_within_2_floor"] = table.final_within_floor
    run.record("stability_summary.csv", rec)
    run.summary = rec
    run.figure("stability", "stability.png", table.eps, table.distances, table.floors, analytic=analytic)
    for r in rows:
        run.say(f"eps={r[0]:<8g} d={r[1]:.5f} floor={r[2]:.5f}" + ("" if analytic is None else f" closed form={r[3]:.5f}"))


def cmd_verify(run, args):
    cfg = run.cfg
    criteria = sorted(set(_parse_criteria(args.criteria) if args.criteria else cfg["verify"]["criteria"]))
    if args.against:
        ref = Path(args.against)
        digests = {header_digest(p) for p in ref.glob("criterion_*.csv")}
        if not digests:
            raise ConfigError(f"--against {ref}: no verify outputs found")
        if digests != {cfg.digest}:
            raise ConfigError(f"--against {ref}: config digest mismatch ({sorted(digests)} vs {cfg.digest}); "
                              "refusing to compare")
    ctx = acc.Context(cfg, seed=cfg.seed, workers=cfg.workers,
                      lorenz_jac=acc.FAULTS[args.inject_fault] if args.inject_fault else None)
    acc.warmup()
    results = []
    for n in [0] + [c for c in criteria if c != 11]:
        res = acc.run_criterion(ctx, n)
        _write_criterion(run, res)
        results.append(res)
        run.say(res.line())
    if 11 in criteria:
        if args.against:
            res = acc.run_criterion(ctx, 11, reference=Path(args.against), current=run.out)
        else:
            res = acc.run_criterion(ctx, 11)
        _write_criterion(run, res)
        results.append(res)
        run.say(res.line())
    run.csv("verify_summary.csv", ["criterion", "title", "checks_passed", "failed_checks", "note"],
            [(r.number, r.title, int(r.checks_passed), ";".join(k for k, v in r.checks.items() if not v), r.note)
             for r in results])
    run.checks = {f"criterion_{r.number}": r.passed for r in results}
    run.extra["criteria"] = [{"number": r.number, "title": r.title, "passed": r.passed,
                              "checks_passed": r.checks_passed, "runtime_seconds": round(r.runtime, 3),
                              "budget_seconds": r.budget, "checks": {k: bool(v) for k, v in r.checks.items()},
                              "summary": r.summary, "note": r.note} for r in results]
    run.summary = {f"criterion_{r.number}": r.summary for r in results}
    _verify_figures(run, results)


def _write_criterion(run, res):
    for name, tab in res.tables.items():
        run.table(f"criterion_{res.number:02d}_{name}.csv", tab)


def _verify_figures(run, results):
    by = {r.number: r for r in results}
    if 2 in by:
        run.figure("lyapunov_history", "criterion_02_history.png", by[2].tables["history"]["rows"])
    if 8 in by:
        R = np.array(by[8].tables["estimates"]["rows"], dtype=float)
        run.figure("avoidance", "criterion_08_avoidance.png", R[:, 0], R[:, 3], R[:, 4], R[:, 5])
    if 9 in by:
        R = np.array(by[9].tables["rectangles"]["rows"], dtype=float)
        run.figure("rectangle_ratios", "criterion_09_rectangles.png", R[:, 1], R[:, 4], R[:, 0])
    for n in (7, 10):
        if n in by:
            R = np.array(by[n].tables["stability"]["rows"], dtype=float)
            analytic = R[:, 3] if R.shape[1] > 3 else None
            run.figure("stability", f"criterion_{n:02d}_stability.png", R[:, 0], R[:, 1], R[:, 2], analytic=analytic)


def _parse_criteria(text):
    try:
        out = [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--criteria: not a list of integers: {text!r}") from None
    if not out or any(not 1 <= c <= 11 for c in out):
        raise ConfigError("--criteria: entries must lie in 1..11")
    return out


def cmd_systems(args):
    for d in list_systems():
        params = ", ".join(f"{k}={v:g}" for k, v in d["parameters"].items())
        sing = "; ".join("(" + ", ".join(f"{c:.6g}" for c in s) + ")" for s in d["singularities"])
        print(f"{d['name']:<15} dim={d['dimension']}  {params}  Sing: {sing}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "integrate one trajectory and write it as CSV"),
    "lyapunov": (cmd_lyapunov, "Lyapunov spectrum with Liouville residual"),
    "diagnose": (cmd_diagnose, "stable/central splitting and sectional-hyperbolicity rates"),
    "shadow": (cmd_shadow, "pseudo-orbits of the time-tau map and their shadows"),
    "chain": (cmd_chain, "one perturbed Markov chain"),
    "stationary": (cmd_stationary, "stationary measure of the perturbed chain and its defect"),
    "avoidance": (cmd_avoidance, "probability of landing near the singularities across eps"),
    "rectangle": (cmd_rectangle, "rectangle mass versus unstable arclength"),
    "stability": (cmd_stability, "distances of stationary measures to the SRB estimate across eps"),
    "verify": (cmd_verify, "run the acceptance suite"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration (or a run manifest .json)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, help="override [run] workers")
    common.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")
    common.add_argument("--quiet", action="store_true", help="no progress output")
    p = argparse.ArgumentParser(prog="srblab", description="Random perturbations of Lorenz-like flows: "
                                "simulations, estimators and acceptance checks.")
    p.add_argument("--version", action="version", version=f"srblab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "verify":
            sp.add_argument("--criteria", help="comma-separated criterion numbers (default from config)")
            sp.add_argument("--against", metavar="DIR", help="compare CSVs byte for byte with a previous verify run")
            sp.add_argument("--inject-fault", choices=sorted(acc.FAULTS), help=argparse.SUPPRESS)
    sub.add_parser("systems", help="list the catalog of vector fields")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    if args.command == "systems":
        return cmd_systems(args)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.workers is not None:
            over["workers"] = args.workers
        if over:
            cfg = cfg.with_overrides(run=over)
        run = Run(args.command, cfg, args.out, figures=args.figures or cfg["run"]["figures"], quiet=args.quiet)
        fn = COMMANDS[args.command][0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if args.quiet else "default")
            fn(run, args)
        return run.finish()
    except (IntegrationError, NumericalFailure, DegenerateSplittingError) as e:
        print(f"srblab {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as e:
        print(f"srblab {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())
