"""Lyapunov spectra, the stable/central splitting and empirical rate fits.

Restricted cocycles are accumulated one sample step at a time in the
orthonormal frames of the estimated bundles,

    R_j = S_{j+1}^T DX_dt(p_j) S_j,

rather than by applying a long-time DX_t to a stable vector. The latter
loses the contracting component to round-off after a few time units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DegenerateSplittingError, InputError, NumericalFailure
from .flow import MAX_STEPS, Trajectory, _point, _raise_status, flow_map
from .systems import VectorField, eval_field


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    transient_time: float
    averaging_time: float
    convergence_history: np.ndarray = field(repr=False)
    mean_divergence: float = float("nan")

    @property
    def liouville_residual(self):
        """|sum of exponents - orbit-averaged divergence|."""
        return abs(float(np.sum(self.exponents)) - self.mean_divergence)

    def as_record(self):
        rec = {f"lambda{i + 1}": float(v) for i, v in enumerate(self.exponents)}
        rec.update(sum=float(np.sum(self.exponents)), mean_divergence=self.mean_divergence,
                   liouville_residual=self.liouville_residual,
                   transient_time=self.transient_time, averaging_time=self.averaging_time)
        return rec


def lyapunov_spectrum(f: VectorField, x0, t_transient, t_average, qr_interval, tol=1e-9,
                      n_records=200):
    """All m exponents by QR re-orthonormalisation every ``qr_interval``."""
    x0 = _point(f, x0)
    if not qr_interval > 0 or t_average < 100 * qr_interval:
        raise InputError("need qr_interval > 0 and t_average >= 100 * qr_interval")
    x = flow_map(f, x0, t_transient, tol) if t_transient > 0 else x0
    n_int = int(round(t_average / qr_interval))
    every = max(1, n_int // n_records)
    b = f.trapping_region
    sums, logdet, hist, _, st, done = K.lyapunov_qr(
        f.rhs, f.jac, f.param_vector, x, float(qr_interval), n_int, every, tol, tol,
        b.lo, b.hi, MAX_STEPS)
    if st == K.UNDERFLOW:
        raise NumericalFailure("frame degenerated (R diagonal underflow)", history=hist)
    _raise_status(st, x, None)
    T = n_int * qr_interval
    exps = np.sort(sums / T)[::-1]
    return LyapunovReport(exps, float(t_transient), float(T), hist, logdet / T)


# ---------------------------------------------------------------- splitting


def _orth(A):
    Q, R = np.linalg.qr(A)
    if np.min(np.abs(np.diag(R))) == 0:
        raise NumericalFailure("frame collapsed during power iteration")
    return Q


def _complement(W):
    """Orthonormal basis of the orthogonal complement of span(W)."""
    m, k = W.shape
    Q, _ = np.linalg.qr(W, mode="complete")
    return Q[:, k:]


def principal_angles(A, B):
    """Principal angles (ascending) between span(A) and span(B), orthonormal inputs."""
    if A.shape[1] > B.shape[1]:
        A, B = B, A
    resid = A - B @ (B.T @ A)
    s = np.linalg.svd(resid, compute_uv=False)
    return np.sort(np.arcsin(np.clip(s, 0.0, 1.0)))


@dataclass
class SplittingEstimate:
    base_orbit: Trajectory
    stable_dim: int
    stable_frames: np.ndarray = field(repr=False)
    central_frames: np.ndarray = field(repr=False)
    min_angle: float
    angles: np.ndarray = field(repr=False)
    step_maps: np.ndarray = field(repr=False)

    @property
    def leading_directions(self):
        """Leading covariant direction at each point (first central column)."""
        return self.central_frames[:, :, 0]

    def invariance_defect(self):
        """Largest principal angle between DF E_i and E_{i+1}, for (stable, central)."""
        ds = dc = 0.0
        for i, A in enumerate(self.step_maps):
            S = _orth(A @ self.stable_frames[i])
            C = _orth(A @ self.central_frames[i])
            ds = max(ds, principal_angles(S, self.stable_frames[i + 1]).max())
            dc = max(dc, principal_angles(C, self.central_frames[i + 1]).max())
        return ds, dc


def estimate_splitting(f: VectorField, orbit: Trajectory, stable_dim, trim_time=5.0, rng=None,
                       min_angle_floor=1e-3):
    """E^s by backward adjoint power iteration, E^c by forward power iteration.

    ``trim_time`` of spin-up is discarded at both ends of the orbit, so the
    returned ``base_orbit`` is the interior piece on which both families
    have converged.
    """
    m = f.dimension
    s = int(stable_dim)
    if not 0 < s < m:
        raise InputError("stable_dim must lie strictly between 0 and the dimension")
    trim = int(np.ceil(trim_time / orbit.dt))
    N = len(orbit.points)
    if N - 1 < 200 or N - 2 * trim < 2:
        raise InputError("orbit too short for splitting estimation (need >= 200 steps beyond trimming)")
    rng = np.random.default_rng(12345) if rng is None else rng
    b = f.trapping_region
    pts = np.ascontiguousarray(orbit.points[:-1])
    _, mats, _, st = K.tangent_maps(f.rhs, f.jac, f.param_vector, pts, orbit.dt, orbit.tol,
                                    orbit.tol, b.lo, b.hi, MAX_STEPS)
    _raise_status(st, None, None)
    c = m - s
    central = np.empty((N, m, c))
    Q = _orth(rng.standard_normal((m, c)))
    central[0] = Q
    for i in range(N - 1):
        Q = _orth(mats[i] @ Q)
        central[i + 1] = Q
    stable = np.empty((N, m, s))
    W = _orth(rng.standard_normal((m, c)))
    stable[N - 1] = _complement(W)
    for i in range(N - 2, -1, -1):
        W = _orth(mats[i].T @ W)
        stable[i] = _complement(W)
    sl = slice(trim, N - trim)
    stable, central = stable[sl], central[sl]
    angles = np.array([principal_angles(S, C)[0] for S, C in zip(stable, central)])
    min_angle = float(angles.min())
    if min_angle < min_angle_floor:
        raise DegenerateSplittingError(f"minimal angle {min_angle:.2e} below {min_angle_floor}")
    base = Trajectory(f, orbit.t0 + trim * orbit.dt, orbit.dt, orbit.points[sl].copy(), orbit.tol)
    return SplittingEstimate(base, s, stable, central, min_angle, angles, mats[trim:N - trim - 1])


# ---------------------------------------------------------------- rate fits


def min_plane_determinant(A):
    """min over 2-planes L of |det(A|L)|: product of the two smallest singular values."""
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size < 2:
        raise InputError("need at least a 2-dimensional space")
    return float(sv[-1] * sv[-2])


def fit_rate(times, values):
    """Least-squares slope and residual relative to the fitted change.

    The residual is rms(values - fit) / horizon, compared against |slope|.
    """
    slope, intercept = np.polyfit(times, values, 1)
    resid = values - (slope * times + intercept)
    horizon = times[-1] - times[0] if len(times) > 1 else 1.0
    rms = float(np.sqrt(np.mean(resid ** 2)))
    rel = rms / horizon / abs(slope) if slope != 0 else np.inf
    return float(slope), float(intercept), float(rel)


@dataclass
class DiagnosticsReport:
    contraction_rate: float
    domination_rate: float
    sectional_rate: float
    fit_residuals: dict
    sample_size: int
    times: np.ndarray = field(repr=False)
    curves: dict = field(repr=False)
    residual_threshold: float = 0.1
    extra: dict = field(default_factory=dict)

    @property
    def inconclusive(self):
        return {k: not (v < self.residual_threshold) for k, v in self.fit_residuals.items()}

    @property
    def passed(self):
        signs = self.contraction_rate < 0 and self.domination_rate < 0 and self.sectional_rate > 0
        return bool(signs and not any(self.inconclusive[k] for k in ("contraction", "domination", "sectional")))

    def as_record(self):
        rec = {"contraction_rate": self.contraction_rate, "domination_rate": self.domination_rate,
               "sectional_rate": self.sectional_rate, "sample_size": self.sample_size}
        rec.update({f"residual_{k}": v for k, v in self.fit_residuals.items()})
        rec.update(self.extra)
        rec["passed"] = int(self.passed)
        return rec

    def rows(self):
        """Long format: one row per (curve, t) of the base-point averaged curves."""
        for name, curve in self.curves.items():
            for t, v in zip(self.times, curve):
                yield name, t, v


def _base_indices(f, split, h, n_base, exclusion):
    N = len(split.base_orbit.points)
    cand = np.arange(0, N - h)
    if exclusion > 0 and f.singularities:
        far = f.distance_to_singularities(split.base_orbit.points[cand]) >= exclusion
        cand = cand[far]
    if cand.size == 0:
        raise InputError("no admissible base points (orbit too short or too close to singularities)")
    if n_base is not None and cand.size > n_base:
        cand = cand[np.linspace(0, cand.size - 1, n_base).round().astype(int)]
    return cand


def _restricted_logs(split, b, h):
    """Per-step logs of ||DX_t|E^s||, conorm and singular values of DX_t|E^c from base b."""
    S, C, A = split.stable_frames, split.central_frames, split.step_maps
    s = S.shape[2]
    c = C.shape[2]
    Rs = np.eye(s)
    Rc = np.eye(c)
    ls = lc = 0.0
    out_s = np.empty(h)
    out_c = np.empty((h, c))
    Rc_hist = np.empty((h, c, c))
    for k in range(h):
        j = b + k
        Rs = S[j + 1].T @ A[j] @ S[j] @ Rs
        Rc = C[j + 1].T @ A[j] @ C[j] @ Rc
        ns = np.linalg.norm(Rs, 2)
        nc = np.linalg.norm(Rc, 2)
        Rs /= ns
        Rc /= nc
        ls += np.log(ns)
        lc += np.log(nc)
        out_s[k] = ls
        out_c[k] = lc + np.log(np.linalg.svd(Rc, compute_uv=False))
        Rc_hist[k] = Rc * np.exp(lc)
    return out_s, out_c, Rc_hist


def check_sectional_conditions(f: VectorField, split: SplittingEstimate, horizon, n_base=None,
                               exclusion=0.5, residual_threshold=0.1):
    """Fit exponential rates for the three sectional-hyperbolicity inequalities.

    Curves (averaged over base points, versus t):
    contraction  log ||DX_t|E^s||
    domination   log ||DX_t|E^s|| - log m(DX_t|E^c)
    sectional    log of the minimal 2-plane determinant of DX_t|E^c
    """
    dt = split.base_orbit.dt
    h = int(round(horizon / dt))
    if h < 10:
        raise InputError("horizon must cover at least 10 sample steps")
    bases = _base_indices(f, split, h, n_base, exclusion)
    c = split.central_frames.shape[2]
    cs = np.empty((bases.size, h))
    dom = np.empty((bases.size, h))
    sec = np.empty((bases.size, h))
    for r, b in enumerate(bases):
        ls, lsv, _ = _restricted_logs(split, b, h)
        cs[r] = ls
        dom[r] = ls - lsv[:, -1]
        sec[r] = lsv[:, -1] + lsv[:, -2] if c >= 2 else np.nan
    times = dt * np.arange(1, h + 1)
    curves = {"contraction": cs.mean(0), "domination": dom.mean(0), "sectional": sec.mean(0)}
    rates, resid = {}, {}
    for k, v in curves.items():
        if np.all(np.isfinite(v)):
            rates[k], _, resid[k] = fit_rate(times, v)
        else:
            rates[k], resid[k] = float("nan"), float("inf")
    return DiagnosticsReport(rates["contraction"], rates["domination"], rates["sectional"], resid,
                             int(bases.size), times, curves, residual_threshold)


def hyperbolic_check(f: VectorField, split: SplittingEstimate, horizon, n_base=None, exclusion=0.0,
                     residual_threshold=0.1, zero_tol=0.02):
    """Refine E^c = E^X + E^u and fit the unstable conorm and flow-direction rates.

    E^u is represented by the quotient of E^c by the flow direction; where the
    field vanishes (an equilibrium base orbit) E^u is all of E^c.
    """
    rep = check_sectional_conditions(f, split, horizon, n_base, exclusion, residual_threshold)
    dt = split.base_orbit.dt
    h = int(round(horizon / dt))
    bases = _base_indices(f, split, h, n_base, exclusion)
    pts = split.base_orbit.points
    C = split.central_frames
    unst = np.empty((bases.size, h))
    flow = np.full((bases.size, h), np.nan)
    inv_defect = 0.0
    for r, b in enumerate(bases):
        _, _, Rc = _restricted_logs(split, b, h)
        X0 = eval_field(f, pts[b])
        if np.linalg.norm(X0) > 1e-12:
            u0 = C[b].T @ X0 / np.linalg.norm(X0)
            U = _complement(u0[:, None])
        else:
            U = np.eye(C.shape[2])
        for k in range(h):
            j = b + k + 1
            Xt = eval_field(f, pts[j])
            M = Rc[k] @ U
            if np.linalg.norm(X0) > 1e-12 and np.linalg.norm(Xt) > 1e-12:
                ut = C[j].T @ Xt / np.linalg.norm(Xt)
                M = M - np.outer(ut, ut @ M)
                if k == 0:
                    # one step only: longer products amplify round-off along E^u
                    pushed = C[j] @ (Rc[k] @ (C[b].T @ X0))
                    inv_defect = max(inv_defect, np.linalg.norm(pushed - Xt) / max(1.0, np.linalg.norm(Xt)))
                flow[r, k] = np.log(np.linalg.norm(Xt) / np.linalg.norm(X0))
            unst[r, k] = np.log(np.linalg.svd(M, compute_uv=False)[-1])
    times = rep.times
    u_rate, _, u_res = fit_rate(times, unst.mean(0))
    rep.curves["unstable_conorm"] = unst.mean(0)
    rep.fit_residuals["unstable"] = u_res
    rep.extra["unstable_rate"] = u_rate
    if np.all(np.isfinite(flow)):
        fcurve = flow.mean(0)
        f_rate = float(np.polyfit(times, fcurve, 1)[0])
        rep.curves["flow_direction"] = fcurve
        rep.extra["flow_rate"] = f_rate
        rep.extra["flow_neutral"] = int(abs(f_rate) <= zero_tol)
    else:
        rep.extra["flow_rate"] = float("nan")
    rep.extra["flow_invariance_defect"] = float(inv_defect)
    return rep
