"""The acceptance suite: numbered criteria with runtime budgets.

Each criterion returns a :class:`CriterionResult` holding the verdict of
its numerical checks, the wall time it took, and tables that the CLI
writes as CSV. Criteria draw their randomness from
``SeedSequence([seed, number])`` so that selecting a subset does not
change any individual result.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np
from scipy.optimize import minimize

from . import flow as fl
from . import hyperbolicity as hy
from . import measures as ms
from . import perturbation as pt
from .systems import eval_field, eval_jacobian, inward_fraction, list_systems, make_system

# lambda_1 of the Lorenz flow (sigma=10, rho=28, beta=8/3) from an independent
# fixed-step RK4 + Gram-Schmidt estimator (tests/oracles.py), frozen before the
# package integrators existed.
BENETTIN_LAMBDA1 = 0.9069

TITLES = {
    0: "systems: Jacobian, singularity and divergence properties",
    1: "linear oracles exact",
    2: "Liouville identity for the Lorenz spectrum",
    3: "Lorenz lambda_1 against the Benettin oracle",
    4: "sectional conditions and 2-plane determinant formula",
    5: "shadowing of Lorenz pseudo-orbits",
    6: "volume lemma boundedness",
    7: "OU closed forms",
    8: "singularity-avoidance scaling",
    9: "rectangle mass linear in mes^u",
    10: "stochastic stability and SRB uniqueness",
    11: "determinism of verify outputs",
}

BUDGETS = {0: 30.0, 1: 1.0, 2: 30.0, 3: 60.0, 4: 120.0, 5: 120.0, 6: 300.0, 7: 60.0, 8: 300.0,
           9: 300.0, 10: 900.0, 11: 600.0}


@dataclass
class CriterionResult:
    number: int
    checks: dict
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    note: str = ""
    runtime: float = 0.0

    @property
    def title(self):
        return TITLES[self.number]

    @property
    def budget(self):
        return BUDGETS[self.number]

    @property
    def checks_passed(self):
        return all(bool(v) for v in self.checks.values())

    @property
    def within_budget(self):
        return self.runtime <= self.budget

    @property
    def passed(self):
        return self.checks_passed and self.within_budget

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        failed = [k for k, v in self.checks.items() if not v]
        extra = f" failed={','.join(failed)}" if failed else ""
        if not self.within_budget:
            extra += f" over_budget({self.budget:g}s)"
        return f"criterion {self.number:2d} {verdict} [{self.runtime:7.1f}s] {self.title}{extra}"


@dataclass
class Context:
    config: object
    seed: int = 0
    workers: int = 1
    lorenz_jac: object = None  # fault injection: replaces the Lorenz Jacobian kernel
    outputs: dict = field(default_factory=dict)

    def rng(self, number):
        return np.random.default_rng(np.random.SeedSequence([self.seed, number]))

    def seedseq(self, number):
        return np.random.SeedSequence([self.seed, number])

    def system(self, name, **overrides):
        f = make_system(name, **overrides)
        if name == "lorenz" and self.lorenz_jac is not None:
            f = f.with_jacobian(self.lorenz_jac)
        return f

    def lorenz(self):
        return self.system("lorenz")

    def lorenz_start(self):
        c = self.config
        return fl.flow_map(self.lorenz(), (1.0, 1.0, 1.0), c["system"]["t_transient"], 1e-9)


def warmup():
    """Compile the numba kernels for every catalog field so timings exclude compilation."""
    from . import _kernels as K
    rng = np.random.default_rng(0)
    for d in list_systems():
        f = make_system(d["name"])
        x = np.full(f.dimension, 0.5)
        fl.flow_map(f, x, 0.01)
        fl.tangent_flow_full(f, x, 0.01)
        fl.tangent_flow_full(f, x, 0.01, frame=np.eye(f.dimension)[:, :1])
        fl.simulate(f, x, 0.01, 2)
        F = fl.TimeTauMap(f, 1.5)
        F.apply(x[None])
        F.iterate(x, 1)
        k = pt.MarkovKernel(F, 0.01)
        pt.run_ensemble(k, x[None], 1, seed=0)
        b = f.trapping_region
        K.bowen_survival(f.rhs, f.jac, f.param_vector, F.iterate(x, 1), x[None] + 1e-3, 1.5, 0.1,
                         1e-8, 1e-8, b.lo, b.hi, fl.MAX_STEPS)
        K.tangent_maps(f.rhs, f.jac, f.param_vector, x[None], 0.01, 1e-8, 1e-8, b.lo, b.hi, fl.MAX_STEPS)
        K.lyapunov_qr(f.rhs, f.jac, f.param_vector, x, 0.01, 2, 1, 1e-8, 1e-8, b.lo, b.hi, fl.MAX_STEPS)
    del rng


@nb.njit(cache=True, nogil=True)
def wrong_lorenz_jacobian(x, p, out):
    """Lorenz Jacobian with the sign of d(dy/dt)/dz flipped (negative control)."""
    out[0, 0] = -p[0]
    out[0, 1] = p[0]
    out[0, 2] = 0.0
    out[1, 0] = p[1] - x[2]
    out[1, 1] = -1.0
    out[1, 2] = x[0]
    out[2, 0] = x[1]
    out[2, 1] = x[0]
    out[2, 2] = -p[2]


FAULTS = {"jacobian": wrong_lorenz_jacobian}


def _table(columns, rows):
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


# ---------------------------------------------------------------- 0: systems


def jacobian_fd_error(f, X, h=1e-5):
    """Largest |central difference - J e_i| over the rows of X and the axes."""
    worst = 0.0
    m = f.dimension
    for x in X:
        J = eval_jacobian(f, x)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            fd = (eval_field(f, x + e) - eval_field(f, x - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - J[:, i]))))
    return worst


def fd_sample_points(f, n, rng):
    """Uniform points of the box intersected with [-1, 1]^m.

    At |X| ~ 1e3 round-off alone gives central differences errors of
    ~1e-8 with h = 1e-5, so the 10 h^2 bound is checked where |X| = O(10).
    """
    b = f.trapping_region
    lo = np.maximum(b.lo, -1.0)
    hi = np.minimum(b.hi, 1.0)
    return lo + rng.random((n, f.dimension)) * (hi - lo)


def criterion_0(ctx):
    rng = ctx.rng(0)
    h = 1e-5
    checks, rows = {}, []
    for d in list_systems():
        f = ctx.system(d["name"])
        err = jacobian_fd_error(f, fd_sample_points(f, 100, rng), h)
        sing = max(float(np.max(np.abs(eval_field(f, s)))) for s in f.singularities)
        frac = inward_fraction(f, rng=rng)
        checks[f"{f.name}_jacobian"] = err <= 10 * h * h
        checks[f"{f.name}_singularities"] = sing <= 1e-12
        if f.trapping:
            checks[f"{f.name}_inward"] = frac >= 0.99
        rows.append((f.name, err, sing, frac, int(f.trapping)))
    f = ctx.lorenz()
    p = f.parameters
    X = f.trapping_region.lo + rng.random((100, 3)) * f.trapping_region.widths
    div = max(abs(np.trace(eval_jacobian(f, x)) + p["sigma"] + 1 + p["beta"]) for x in X)
    checks["lorenz_divergence"] = div <= 1e-12
    return CriterionResult(0, checks, {"lorenz_divergence_error": div},
                           {"systems": _table(["system", "jacobian_fd_error", "singularity_residual",
                                               "inward_fraction", "trapping"], rows)})


# ---------------------------------------------------------------- 1: linear oracles


def criterion_1(ctx):
    f = ctx.system("linear3d")
    p = f.parameters
    eig = np.sort([p["a"], p["b"], p["c"]])[::-1]
    rep = hy.lyapunov_spectrum(f, np.zeros(3), 0.0, 100.0, 1.0)
    lyap_err = float(np.max(np.abs(rep.exponents - eig)))
    tau = ctx.config["map"]["tau"]
    _, M = fl.tangent_flow(f, np.ones(3), tau, 1e-12)
    exact = np.diag(np.exp(np.array([p["a"], p["b"], p["c"]]) * tau))
    tan_err = float(np.max(np.abs(M - exact)))
    F = fl.TimeTauMap(f, tau, 1e-12)
    s = p["a"] + p["b"] + p["c"]
    jn_err = max(abs(fl.orbit_jacobian(F, np.ones(3), n) / math.exp(s * n * tau) - 1) for n in range(6))
    checks = {"lyapunov": lyap_err <= 1e-8, "tangent": tan_err <= 1e-10, "jacobian_n": jn_err <= 1e-10}
    summary = {"lyapunov_error": lyap_err, "tangent_error": tan_err, "jacobian_n_rel_error": jn_err}
    return CriterionResult(1, checks, summary, {"summary": _table(["key", "value"], summary.items())})


# ---------------------------------------------------------------- 2, 3: Lorenz spectrum


def _lorenz_spectrum(ctx):
    c = ctx.config["lyapunov"]
    return hy.lyapunov_spectrum(ctx.lorenz(), (1.0, 1.0, 1.0), c["t_transient"], c["t_average"],
                                c["qr_interval"], c["tolerance"])


def criterion_2(ctx):
    rep = _lorenz_spectrum(ctx)
    p = ctx.lorenz().parameters
    target = -(p["sigma"] + 1 + p["beta"])
    rel = abs(rep.exponents.sum() - target) / abs(target)
    rec = rep.as_record()
    rec.update(target=target, relative_error=rel)
    hist = [(t, *v) for t, *v in rep.convergence_history]
    return CriterionResult(2, {"liouville_1pct": rel <= 0.01}, rec,
                           {"summary": _table(["key", "value"], rec.items()),
                            "history": _table(["t", "lambda1", "lambda2", "lambda3"], hist)})


def criterion_3(ctx):
    rep = _lorenz_spectrum(ctx)
    l1 = float(rep.exponents[0])
    rec = {"lambda1": l1, "oracle": BENETTIN_LAMBDA1, "difference": l1 - BENETTIN_LAMBDA1,
           "lambda2": float(rep.exponents[1]), "lambda3": float(rep.exponents[2])}
    return CriterionResult(3, {"lambda1_within_0.05": abs(l1 - BENETTIN_LAMBDA1) <= 0.05}, rec,
                           {"summary": _table(["key", "value"], rec.items())})


# ---------------------------------------------------------------- 4: sectional conditions


def plane_determinant(A, B):
    """|det(A|span B)| for an orthonormal m x 2 frame B: sqrt(det(B^T A^T A B))."""
    G = (A @ B).T @ (A @ B)
    return math.sqrt(max(np.linalg.det(G), 0.0))


def brute_force_plane_min(A, rng, n_planes=1000):
    """min |det(A|L)| over 2-planes L: random sampling, then local polishing of the best."""
    m = A.shape[1]

    def frame(v):
        Q, _ = np.linalg.qr(v.reshape(m, 2))
        return Q

    best_v, best = None, np.inf
    for _ in range(n_planes):
        v = rng.standard_normal(2 * m)
        d = plane_determinant(A, frame(v))
        if d < best:
            best, best_v = d, v
    res = minimize(lambda v: plane_determinant(A, frame(v)), best_v, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000})
    return min(best, float(res.fun))


def criterion_4(ctx):
    c = ctx.config["diagnose"]
    f = ctx.lorenz()
    x0 = ctx.lorenz_start()
    orb = fl.simulate(f, x0, c["dt"], c["n_steps"], ctx.config["system"]["tolerance"])
    split = hy.estimate_splitting(f, orb, c["stable_dim"], trim_time=c["trim_time"], rng=ctx.rng(4))
    rep = hy.check_sectional_conditions(f, split, c["horizon"], n_base=c["n_base"],
                                        exclusion=c["exclusion"], residual_threshold=c["residual_threshold"])
    # 2-plane formula on full tangent maps DX_1 at 10 attractor points
    rng = ctx.rng(40)
    pts = orb.points[rng.choice(len(orb.points), 10, replace=False)]
    gaps = []
    for x in pts:
        _, A = fl.tangent_flow(f, x, 1.0, 1e-10)
        A = A / np.linalg.norm(A, 2) ** 0.5  # keep the determinant O(1) for an absolute tolerance
        formula = hy.min_plane_determinant(A)
        brute = brute_force_plane_min(A, rng)
        gaps.append((formula, brute, brute - formula))
    g = np.array(gaps)
    rec = rep.as_record()
    rec.update(min_angle=split.min_angle, plane_gap_min=float(g[:, 2].min()), plane_gap_max=float(g[:, 2].max()))
    checks = {
        "base_points_50": rep.sample_size >= 50,
        "contraction_negative": rep.contraction_rate < 0,
        "domination_negative": rep.domination_rate < 0,
        "sectional_positive": rep.sectional_rate > 0,
        "residuals_below_10pct": all(rep.fit_residuals[k] < 0.1 for k in ("contraction", "domination", "sectional")),
        "plane_formula_lower": bool(np.all(g[:, 2] >= -1e-9)),
        "plane_formula_close": bool(np.all(np.abs(g[:, 2]) <= 1e-6)),
    }
    return CriterionResult(4, checks, rec, {
        "summary": _table(["key", "value"], rec.items()),
        "curves": _table(["curve", "t", "value"], rep.rows()),
        "planes": _table(["formula", "brute_force", "difference"], gaps)})


# ---------------------------------------------------------------- 5: shadowing


def shadow_study(F, x, n_orbits, n_list, n_main, delta, c_est, max_iter, rng):
    """Shadow ``n_orbits`` pseudo-orbits per length in ``n_list`` (starts 3 map steps apart)."""
    f = F.system
    n_list = sorted(set(n_list) | {n_main})
    rows = []
    conv_main = []
    for j in range(n_orbits):
        x = F.iterate(x, 3)[-1]
        for n in n_list:
            po = fl.generate_pseudo_orbit(F, x, delta, n, rng)
            r = fl.shadow_search(po, F, max_iter=max_iter, c_est=c_est)
            rows.append((j, n, r.max_deviation, r.continuity_defect, int(r.converged), r.iterations,
                         float(f.distance_to_singularities(po.points).min())))
            if n == n_main:
                conv_main.append(r.converged and r.max_deviation <= c_est * n * delta)
    R = np.array(rows)
    med = np.array([np.median(R[R[:, 1] == n, 2]) for n in n_list])
    slope = float(np.polyfit(np.log(n_list), np.log(np.maximum(med, 1e-300)), 1)[0]) if len(n_list) > 1 else 0.0
    rec = {"converged_at_n": int(sum(conv_main)), "orbits": n_orbits, "n": n_main, "loglog_slope": slope,
           "fraction_within_c_delta": float(np.mean(R[:, 2] <= c_est * delta)),
           "min_singularity_distance": float(R[:, 6].min())}
    rec.update({f"median_deviation_n{n}": float(v) for n, v in zip(n_list, med)})
    checks = {"all_converged": all(conv_main) and len(conv_main) == n_orbits, "at_most_linear": slope <= 1.0}
    return rows, rec, checks


SHADOW_COLUMNS = ["orbit", "n", "max_deviation", "continuity_defect", "converged", "iterations",
                  "min_singularity_distance"]


def criterion_5(ctx):
    c = ctx.config["shadow"]
    F = fl.TimeTauMap(ctx.lorenz(), ctx.config["map"]["tau"], c["tolerance"])
    rows, rec, checks = shadow_study(F, ctx.lorenz_start(), c["n_orbits"], c["n_list"], c["n"], c["delta"],
                                     c["c_est"], c["max_iter"], ctx.rng(5))
    return CriterionResult(5, checks, rec, {"summary": _table(["key", "value"], rec.items()),
                                            "orbits": _table(SHADOW_COLUMNS, rows)})


# ---------------------------------------------------------------- 6: volume lemma


def central_log_jacobians(F, x, n, frame):
    """log|det DF^k|E^c| for k = 0..n, carrying the 2-frame ``frame`` along the orbit."""
    out = [0.0]
    y, Q = x, frame
    total = 0.0
    for _ in range(n):
        y, M, _ = fl.tangent_flow_full(F.system, y, F.tau, F.tol, frame=Q)
        Q, R = np.linalg.qr(M)
        total += float(np.log(abs(np.prod(np.diag(R)))))
        out.append(total)
    return np.array(out)


def criterion_6(ctx):
    c = ctx.config["volume"]
    f = ctx.lorenz()
    tau = ctx.config["map"]["tau"]
    F = fl.TimeTauMap(f, tau, ctx.config["map"]["tolerance"])
    rng = ctx.rng(6)
    n_list = list(c["n_list"])
    n_max = max(n_list)
    x = ctx.lorenz_start()
    rows = []
    prods, cprods = [], []
    for j in range(c["n_points"]):
        # E^c at x: a 2-frame pushed forward for 20 time units along the orbit ending at x
        Q = np.linalg.qr(rng.standard_normal((3, 2)))[0]
        for _ in range(40):
            x, M, _ = fl.tangent_flow_full(f, x, 0.5, F.tol, frame=Q)
            Q = np.linalg.qr(M)[0]
        ests = fl.bowen_ball_volumes(F, x, n_max, c["rho"], c["samples"], rng, c["rho_tilde"])
        logJ = np.concatenate([[0.0], np.cumsum([F.with_derivative(y)[2] for y in F.iterate(x, n_max - 1)])])
        logJc = central_log_jacobians(F, x, n_max, Q)
        for n in n_list:
            e = ests[n]
            p = e.volume * math.exp(logJ[n])
            pc = e.volume * math.exp(logJc[n])
            rows.append((j, n, e.volume, e.stderr, e.hits, logJ[n], p, logJc[n], pc))
            prods.append(p)
            if e.hits > 0:
                cprods.append(pc)
        x = F.iterate(x, 2)[-1]
    prods = np.array(prods)
    L, U = float(prods.min()), float(prods.max())
    spread = U / L if L > 0 else math.inf
    cp = np.array(cprods)
    cspread = float(cp.max() / cp.min()) if cp.size else math.inf
    R = np.array(rows)
    rec = {"L": L, "U": U, "spread": spread, "zero_hit_fraction": float(np.mean(R[:, 4] == 0)),
           "central_spread_nonzero": cspread, "central_nonzero_count": int(cp.size),
           "max_spread": c["max_spread"]}
    note = ("J_n = |det DF^n| decays like exp(-(sigma+1+beta) n tau) while the Bowen ball shrinks only "
            "along the unstable direction, so m(K)J_n is not bounded for a dissipative flow")
    return CriterionResult(6, {"spread_at_most_50": spread <= c["max_spread"]}, rec, {
        "summary": _table(["key", "value"], rec.items()),
        "points": _table(["point", "n", "volume", "stderr", "hits", "log_jacobian", "product",
                          "log_central_jacobian", "central_product"], rows)}, note=note)


# ---------------------------------------------------------------- 7: OU closed forms


def ou_stationary_std(a, tau, eps):
    return eps / math.sqrt(1 - math.exp(-2 * a * tau))


def criterion_7(ctx):
    f = ctx.system("ou1d")
    a = f.parameters["a"]
    tau, eps, N = 1.0, 0.1, 1_000_000
    tol = ctx.config["map"]["tolerance"]
    grid = ms.GridPartition(f.trapping_region, (4001,))
    ss = ctx.seedseq(7).spawn(8)
    k = pt.MarkovKernel.create(f, tau, eps, "resample", seed=ss[0], tol=tol)
    mu, states = pt.estimate_stationary(k, [0.0], 1000, N, grid, n_chains=100, seed=ss[1], return_states=True)
    var_true = ou_stationary_std(a, tau, eps) ** 2
    var_est = float(np.mean(states ** 2))
    var_rel = abs(var_est - var_true) / var_true
    # stability distances against the point mass at 0
    eps_list = (0.2, 0.1, 0.05, 0.025)
    zero = ms.EmpiricalMeasure.from_masses(grid, np.eye(grid.n_cells)[grid.cell_index([[0.0]])[0]])
    chain = pt.ChainConfig(np.zeros(1), tau=tau, n_samples=N, tol=tol)
    analytic = np.array([ou_stationary_std(a, tau, e) * math.sqrt(2 / math.pi) for e in eps_list])
    table = ms.stability_study(f, eps_list, chain, grid, srb=zero, seed=ss[2], analytic=analytic)
    dist_rel = np.abs(table.distances - analytic) / analytic
    # Chapman-Kolmogorov and stationarity defects
    ck = pt.chapman_kolmogorov_check(k, [1.0], 1, 2, N, grid, seed=ss[3])
    st = pt.check_stationarity(k, mu, N, seed=ss[4])
    rows = list(table.rows())
    rec = {"variance": var_est, "variance_exact": var_true, "variance_rel_error": var_rel,
           "max_distance_rel_error": float(dist_rel.max()), "ck_defect": ck.defect, "ck_floor": ck.floor,
           "stationarity_defect": st.defect, "stationarity_floor": st.floor}
    checks = {"variance_3pct": var_rel <= 0.03, "distances_10pct": bool(np.all(dist_rel <= 0.10)),
              "chapman_kolmogorov": ck.passed, "stationarity": st.passed}
    return CriterionResult(7, checks, rec, {
        "summary": _table(["key", "value"], rec.items()),
        "stability": _table(["eps", "distance", "floor", "analytic"], rows)})


# ---------------------------------------------------------------- 8: singularity avoidance


def loglog_slope(eps, probs):
    """Slope of log p against log eps; None when some estimate is zero."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0):
        return None
    return float(np.polyfit(np.log(eps), np.log(probs), 1)[0])


def monotone_with_overlap(ests):
    """p(eps) nonincreasing as eps decreases, up to Wilson-interval overlap."""
    return all(b.ci_low <= a.ci_high for a, b in zip(ests, ests[1:]))


def avoidance_study(f, x, eps_list, gamma, n_mc, min_slope, kernel_args, seedseq, workers=1):
    """Lemma-type estimates P(x_k near Sing) at k = ceil(m log(1/eps)) for each eps."""
    ss = seedseq.spawn(2 * len(eps_list))
    ests = []
    for i, e in enumerate(eps_list):
        k = pt.MarkovKernel.create(f, kernel_args["tau"], e, kernel_args["policy"], seed=ss[2 * i],
                                   tol=kernel_args["tol"])
        ests.append(pt.singularity_avoidance(k, x, gamma, pt.min_avoidance_steps(e, f.dimension), n_mc,
                                             seed=ss[2 * i + 1], workers=workers))
    slope = loglog_slope(eps_list, [a.probability for a in ests])
    rows = [(a.epsilon, a.k_steps, a.radius, a.probability, a.ci_low, a.ci_high, a.hits, a.n) for a in ests]
    rec = {"slope": float("nan") if slope is None else slope, "slope_evaluable": int(slope is not None),
           "min_slope": min_slope, "total_hits": int(sum(a.hits for a in ests))}
    checks = {"slope": slope is not None and slope >= min_slope, "monotone": monotone_with_overlap(ests)}
    return rows, rec, checks


AVOIDANCE_COLUMNS = ["eps", "k_steps", "radius", "probability", "ci_low", "ci_high", "hits", "n"]


def _kernel_args(ctx):
    m = ctx.config["map"]
    return {"tau": m["tau"], "policy": m["boundary_policy"], "tol": m["tolerance"]}


def criterion_8(ctx):
    c = ctx.config["avoidance"]
    rows, rec, checks = avoidance_study(ctx.lorenz(), ctx.lorenz_start(), c["eps_list"], c["gamma"], c["n_mc"],
                                        c["min_slope"], _kernel_args(ctx), ctx.seedseq(8), ctx.workers)
    note = "" if rec["slope_evaluable"] else "zero hits at some eps: the log-log slope is not evaluable"
    return CriterionResult(8, checks, rec, {"summary": _table(["key", "value"], rec.items()),
                                            "estimates": _table(AVOIDANCE_COLUMNS, rows)}, note=note)


# ---------------------------------------------------------------- 9: rectangles


def rectangle_study(f, x0, eps, eta0, rho, thickness, n_rect, max_ratio, kernel_args, chain_args, grid,
                    seedseq, workers=1):
    """Mass of fattened unstable rectangles under mu^eps for eta0, eta0/2, eta0/4.

    Rectangle centres are taken 15 time units apart along the orbit of x0,
    each arc built from the preceding 6 time units of orbit.
    """
    ss = seedseq.spawn(3)
    k = pt.MarkovKernel.create(f, kernel_args["tau"], eps, kernel_args["policy"], seed=ss[0],
                               tol=kernel_args["tol"])
    _, states = pt.estimate_stationary(k, x0, chain_args["burn_in"], chain_args["n_samples"], grid,
                                       n_chains=chain_args["n_chains"], min_samples=chain_args["min_samples"],
                                       seed=ss[1], workers=workers, return_states=True)
    P = states.reshape(-1, f.dimension)
    dt = 0.01
    long = fl.simulate(f, x0, dt, 1000 + 1500 * (2 * n_rect), 1e-9)
    rng = np.random.default_rng(ss[2])
    etas = [eta0, eta0 / 2, eta0 / 4]
    rows, spreads = [], []
    j = 0
    while len(spreads) < n_rect:
        end = 1000 + 1500 * j
        j += 1
        if end >= len(long.points):
            break
        seg = fl.Trajectory(f, 0.0, dt, long.points[end - 600:end + 1], 1e-9)
        if f.singularities and f.distance_to_singularities(seg.points[-1])[0] <= 10 * rho:
            continue
        ratios, lows, highs = [], [], []
        for eta in etas:
            rect = ms.build_rectangle(f, seg, eta, rho, thickness, rng=rng)
            m = ms.rectangle_mass_bound(P, rect)
            ratios.append(m.ratio)
            lows.append(m.ci_low / m.mes_u)
            highs.append(m.ci_high / m.mes_u)
            rows.append((len(spreads), eta, m.mass, m.mes_u, m.ratio, m.ci_low, m.ci_high, m.hits))
        ratios = np.array(ratios)
        raw = ratios.max() / ratios.min() if ratios.min() > 0 else math.inf
        # smallest spread compatible with the confidence intervals
        ci = max(1.0, max(lows) / min(highs)) if min(highs) > 0 else math.inf
        spreads.append((raw, ci))
    S = np.array(spreads) if spreads else np.full((1, 2), math.inf)
    rec = {"rectangles": len(spreads), "max_ratio_spread": float(S[:, 0].max()),
           "max_ci_spread": float(S[:, 1].max()), "max_ratio": max_ratio}
    checks = {"count": len(spreads) == n_rect, "ratio_bounded": bool(np.all(S[:, 1] <= max_ratio))}
    return rows, rec, checks


RECTANGLE_COLUMNS = ["rectangle", "eta", "mass", "mes_u", "ratio", "ci_low", "ci_high", "hits"]


def criterion_9(ctx):
    c = ctx.config["rectangle"]
    f = ctx.lorenz()
    grid = ms.GridPartition(f.trapping_region, ctx.config["grid"]["resolution"])
    rows, rec, checks = rectangle_study(f, ctx.lorenz_start(), c["epsilon"], c["eta0"], c["rho"], c["thickness"],
                                        c["n_rectangles"], c["max_ratio"], _kernel_args(ctx),
                                        ctx.config["stationary"], grid, ctx.seedseq(9), ctx.workers)
    return CriterionResult(9, checks, rec, {"summary": _table(["key", "value"], rec.items()),
                                            "rectangles": _table(RECTANGLE_COLUMNS, rows)})


# ---------------------------------------------------------------- 10: stochastic stability


def srb_starts(ctx, n):
    """The configured start plus n-1 seeded generic points, each after the transient."""
    f = ctx.lorenz()
    rng = ctx.rng(100)
    t = ctx.config["system"]["t_transient"]
    pts = [ctx.lorenz_start()]
    while len(pts) < n:
        y = np.array([-15.0, -15.0, 5.0]) + rng.random(3) * np.array([30.0, 30.0, 35.0])
        pts.append(fl.flow_map(f, y, t, 1e-9))
    return pts


def criterion_10(ctx):
    c = ctx.config["stability"]
    st = ctx.config["stationary"]
    f = ctx.lorenz()
    grid = ms.GridPartition(f.trapping_region, ctx.config["grid"]["resolution"])
    starts = srb_starts(ctx, c["n_starts"])
    srbs = [ms.srb_estimate(f, x, 0.0, c["srb_average"], c["srb_sample_dt"], grid) for x in starts]
    rng = ctx.rng(101)
    floors = [ms.noise_floor(m, rng) for m in srbs]
    pairs = []
    for i in range(len(srbs)):
        for j in range(i + 1, len(srbs)):
            d = ms.weak_distance(srbs[i], srbs[j])
            fl_ = math.hypot(floors[i], floors[j])
            pairs.append((i, j, d, fl_, int(d <= 3 * fl_)))
    chain = pt.ChainConfig(starts[0], tau=ctx.config["map"]["tau"], burn_in=st["burn_in"],
                           n_samples=st["n_samples"], n_chains=st["n_chains"], tol=ctx.config["map"]["tolerance"],
                           policy=ctx.config["map"]["boundary_policy"], min_samples=st["min_samples"])
    table = ms.stability_study(f, c["eps_list"], chain, grid, srb=srbs[0], seed=ctx.seedseq(10))
    rec = {"monotone": int(table.monotone), "final_distance": float(table.distances[-1]),
           "final_floor": float(table.floors[-1]), "final_within_2_floor": int(table.final_within_floor),
           "srb_pairs_within_3_floor": int(all(p[4] for p in pairs))}
    checks = {"monotone": table.monotone, "final_within_2_floor": table.final_within_floor,
              "uniqueness": all(p[4] for p in pairs)}
    ctx.outputs["stability_table"] = table
    return CriterionResult(10, checks, rec, {
        "summary": _table(["key", "value"], rec.items()),
        "stability": _table(["eps", "distance", "floor"], [r[:3] for r in table.rows()]),
        "srb_pairs": _table(["start_i", "start_j", "distance", "floor", "within_3_floor"], pairs)})


# ---------------------------------------------------------------- 11: determinism


def compare_dirs(a, b, pattern="*.csv", exclude=()):
    """(identical, differing names, missing names) for the CSVs of two output directories."""
    a, b = Path(a), Path(b)
    names_a = sorted(p.name for p in a.glob(pattern) if not p.name.startswith(tuple(exclude)))
    names_b = sorted(p.name for p in b.glob(pattern) if not p.name.startswith(tuple(exclude)))
    missing = sorted(set(names_a) ^ set(names_b))
    diff = [n for n in sorted(set(names_a) & set(names_b))
            if not filecmp.cmp(a / n, b / n, shallow=False)]
    return not diff and not missing and bool(names_a), diff, missing


def criterion_11(ctx, reference=None, current=None):
    """Byte-identity of CSV outputs across two runs with the same seed.

    With ``reference`` and ``current`` directories (a previous verify run and
    this one) every CSV is compared. Without them the seeded commands are
    replayed twice into scratch directories and compared.
    """
    from .cli import main
    if reference is not None:
        # criterion 11 itself and the summary are written after this comparison
        ok, diff, missing = compare_dirs(reference, current, "criterion_*.csv", exclude=("criterion_11",))
        mode = "against_reference"
    else:
        cfg = ctx.config.normalized()
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "run.ini").write_text(cfg)
            for run in ("a", "b"):
                for cmd in ("simulate", "shadow", "chain"):
                    code = main([cmd, "--config", str(tmp / "run.ini"), "--out", str(tmp / run),
                                 "--seed", str(ctx.seed), "--quiet"])
                    if code not in (0, 1):
                        return CriterionResult(11, {"replay_ran": False}, {"exit_code": code})
            ok, diff, missing = compare_dirs(tmp / "a", tmp / "b")
        mode = "replay"
    rec = {"mode": mode, "identical": int(ok), "differing": ";".join(diff), "missing": ";".join(missing)}
    return CriterionResult(11, {"byte_identical": ok}, rec, {"summary": _table(["key", "value"], rec.items())})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(0, 11)}


def run_criterion(ctx, number, **kw):
    fn = criterion_11 if number == 11 else CRITERIA[number]
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = fn(ctx, **kw)
    res.runtime = time.perf_counter() - t0
    return res
