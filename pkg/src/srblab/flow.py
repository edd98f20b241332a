"""Flows, tangent flows, the time-tau map and what is built on it.

Shadowing uses multiple shooting: one unknown per pseudo-orbit node,
continuity constraints F(y_i) = y_{i+1}, and minimum-norm Gauss-Newton
corrections starting from the pseudo-orbit itself.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InputError, IntegrationError, TrappingRegionError
from .systems import VectorField

DEFAULT_TOL = 1e-10
MAX_STEPS = 10_000_000

# fields whose flow is globally defined, so negative times are allowed
LINEAR_SYSTEMS = frozenset({"linear3d", "ou1d", "saddle_focus3d"})


def _raise_status(status, state, t):
    if status == K.ESCAPED:
        raise TrappingRegionError("orbit left the trapping region", state=state, time=t)
    if status == K.UNDERFLOW:
        raise IntegrationError("step size underflow", state=state, time=t)
    if status == K.MAX_STEPS:
        raise IntegrationError("step budget exhausted", state=state, time=t)


def _point(f, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dimension,):
        raise InputError(f"{f.name} expects a point of dimension {f.dimension}, got shape {x.shape}")
    return x


def _check_start(f, x, t):
    if not f.trapping_region.contains(x):
        raise InputError(f"starting point {x} lies outside the trapping region of {f.name}")
    if t < 0 and f.name not in LINEAR_SYSTEMS:
        raise InputError("negative times are only supported for linear systems")


def flow_map(f: VectorField, x, t, tol=DEFAULT_TOL):
    """X_t(x) by adaptive Dormand-Prince 5(4) with rtol = atol = tol."""
    x = _point(f, x)
    _check_start(f, x, t)
    if t == 0:
        return x.copy()
    b = f.trapping_region
    z, _, st, tr = K.dopri(f.rhs, f.jac, f.param_vector, x, f.dimension, -1, float(t),
                           tol, tol, 0.0, b.lo, b.hi, MAX_STEPS)
    _raise_status(st, z, tr)
    return z


def tangent_flow_full(f, x, t, tol=DEFAULT_TOL, frame=None):
    """(X_t x, DX_t(x) @ frame, log|det DX_t(x)|)."""
    x = _point(f, x)
    _check_start(f, x, t)
    frame = np.eye(f.dimension) if frame is None else np.ascontiguousarray(frame, dtype=float)
    if t == 0:
        return x.copy(), frame.copy(), 0.0
    b = f.trapping_region
    y, M, ld, st = K.tangent(f.rhs, f.jac, f.param_vector, x, frame, float(t), tol, tol,
                             b.lo, b.hi, MAX_STEPS)
    _raise_status(st, y, None)
    return y, M, ld


def tangent_flow(f: VectorField, x, t, tol=DEFAULT_TOL):
    """(X_t(x), DX_t(x)) from the variational equation M' = J(X_s x) M, M(0) = I."""
    y, M, _ = tangent_flow_full(f, x, t, tol)
    return y, M


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    system: VectorField
    t0: float
    dt: float
    points: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.points))

    def step_defects(self):
        """||X_dt(p_i) - p_{i+1}|| / (1 + ||p_i||) for every consecutive pair."""
        f = self.system
        b = f.trapping_region
        pushed, st = K.map_points(f.rhs, f.jac, f.param_vector, np.ascontiguousarray(self.points[:-1]),
                                  self.dt, self.tol, self.tol, b.lo, b.hi, MAX_STEPS)
        d = np.linalg.norm(pushed - self.points[1:], axis=1)
        return d / (1 + np.linalg.norm(self.points[:-1], axis=1))

    def to_csv(self, path, header_lines=()):
        from .io import write_csv
        cols = ["index", "t"] + [f"x{i}" for i in range(self.system.dimension)]
        rows = np.column_stack([np.arange(len(self.points)), self.times, self.points])
        write_csv(path, cols, rows, header_lines, int_cols=1)


def simulate(f: VectorField, x0, dt, n, tol=DEFAULT_TOL, t0=0.0):
    """Sample the orbit of x0 at n + 1 equally spaced times."""
    x0 = _point(f, x0)
    _check_start(f, x0, dt)
    if not dt > 0 or n < 0:
        raise InputError("simulate needs dt > 0 and n >= 0")
    b = f.trapping_region
    pts, st, good = K.trajectory(f.rhs, f.jac, f.param_vector, x0, float(dt), int(n), tol, tol,
                                 b.lo, b.hi, MAX_STEPS)
    _raise_status(st, pts[good - 1], t0 + (good - 1) * dt)
    return Trajectory(f, float(t0), float(dt), pts, tol)


def settle(f, x0, t_transient, tol=1e-9):
    """Point on (or near) the attractor: X_{t_transient}(x0)."""
    return flow_map(f, x0, t_transient, tol)


# ---------------------------------------------------------------- time-tau map


class TimeTauMap:
    """F = X_tau with derivative DF via the tangent flow."""

    def __init__(self, f: VectorField, tau, tol=DEFAULT_TOL):
        if not tau > 0:
            raise InputError("tau must be positive")
        self.system = f
        self.tau = float(tau)
        self.tol = float(tol)
        self.short_tau = tau <= 1
        if self.short_tau:
            warnings.warn(f"tau={tau} <= 1; accepted but flagged", stacklevel=3)

    @property
    def dimension(self):
        return self.system.dimension

    def __call__(self, x):
        return flow_map(self.system, x, self.tau, self.tol)

    def derivative(self, x):
        return tangent_flow(self.system, x, self.tau, self.tol)[1]

    def with_derivative(self, x):
        """(F(x), DF(x), log|det DF(x)|)."""
        return tangent_flow_full(self.system, x, self.tau, self.tol)

    def iterate(self, x, n):
        """Array of F^i(x), i = 0..n."""
        f = self.system
        x = _point(f, x)
        _check_start(f, x, self.tau)
        b = f.trapping_region
        pts, st, good = K.trajectory(f.rhs, f.jac, f.param_vector, x, self.tau, int(n),
                                     self.tol, self.tol, b.lo, b.hi, MAX_STEPS)
        _raise_status(st, pts[good - 1], None)
        return pts

    def apply(self, X):
        """Row-wise F on an (N, m) array."""
        f = self.system
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        b = f.trapping_region
        out, st = K.map_points(f.rhs, f.jac, f.param_vector, X, self.tau, self.tol, self.tol,
                               b.lo, b.hi, MAX_STEPS)
        bad = np.flatnonzero(st != K.OK)
        if bad.size:
            _raise_status(st[bad[0]], out[bad[0]], None)
        return out


def time_tau_map(f: VectorField, tau, tol=DEFAULT_TOL):
    return TimeTauMap(f, tau, tol)


# ---------------------------------------------------------------- pseudo-orbits


@dataclass
class PseudoOrbit:
    system: VectorField
    tau: float
    delta: float
    points: np.ndarray

    def __post_init__(self):
        if len(self.points) < 2:
            raise InputError("a pseudo-orbit needs at least two points")
        if self.delta < 0:
            raise InputError("delta must be nonnegative")

    @property
    def n(self):
        return len(self.points) - 1

    def gaps(self, F: TimeTauMap):
        return np.linalg.norm(F.apply(self.points[:-1]) - self.points[1:], axis=1)

    def to_csv(self, path, header_lines=()):
        from .io import write_csv
        cols = ["index", "t"] + [f"x{i}" for i in range(self.system.dimension)]
        idx = np.arange(len(self.points))
        write_csv(path, cols, np.column_stack([idx, idx * self.tau, self.points]), header_lines, int_cols=1)


def _uniform_ball(rng, n, m, radius):
    d = rng.standard_normal((n, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / m)
    return d * r[:, None]


def generate_pseudo_orbit(F: TimeTauMap, x0, delta, n, rng):
    """x_{i+1} = F(x_i) + eta_i, eta_i uniform in the delta-ball, clipped to the box."""
    if n < 1:
        raise InputError("pseudo-orbit length n must be >= 1")
    f = F.system
    b = f.trapping_region
    x = _point(f, x0).copy()
    pts = np.empty((n + 1, f.dimension))
    pts[0] = x
    for i in range(n):
        y = F(x)
        if delta > 0:
            y = np.clip(y + _uniform_ball(rng, 1, f.dimension, delta)[0], b.lo, b.hi)
        pts[i + 1] = y
        x = y
    return PseudoOrbit(f, F.tau, float(delta), pts)


@dataclass
class ShadowingResult:
    shadow_point: np.ndarray
    max_deviation: float
    converged: bool
    iterations: int
    shadow_orbit: np.ndarray = field(repr=False)
    continuity_defect: float = 0.0
    bound: float = 0.0

    def recompute(self, po: PseudoOrbit, F: TimeTauMap):
        """(max_i |x_i - y_i|, max_i |F(y_i) - y_{i+1}|) from the stored shadow nodes."""
        dev = float(np.max(np.linalg.norm(po.points - self.shadow_orbit, axis=1)))
        cont = float(np.max(np.linalg.norm(F.apply(self.shadow_orbit[:-1]) - self.shadow_orbit[1:], axis=1)))
        return dev, cont

    def as_record(self):
        rec = {f"y{i}": float(v) for i, v in enumerate(self.shadow_point)}
        rec.update(max_deviation=self.max_deviation, converged=int(self.converged),
                   iterations=self.iterations, continuity_defect=self.continuity_defect,
                   bound=self.bound)
        return rec


def shadow_search(po: PseudoOrbit, F: TimeTauMap, max_iter=30, tol=1e-9, c_est=10.0):
    """Find a true orbit y_0, ..., y_n = F^n y_0 near the pseudo-orbit.

    ``tol`` is the target for the continuity defect max |F(y_i) - y_{i+1}|.
    ``converged`` additionally requires max |x_i - y_i| <= c_est * n * delta.
    """
    f = F.system
    X = np.asarray(po.points, dtype=float)
    n, m = po.n, f.dimension
    slack = 1e-9 * (1 + np.abs(X).max())
    if np.max(po.gaps(F)) > po.delta + slack:
        raise InputError("input is not a delta-pseudo-orbit of F")
    if np.min(f.distance_to_singularities(X)) <= c_est * po.delta:
        raise InputError("pseudo-orbit passes within c_est*delta of a singularity")

    def residual(Y):
        return F.apply(Y[:-1]) - Y[1:]

    Y = X.copy()
    g = residual(Y)
    gmax = float(np.abs(g).max())
    it = 0
    eye = np.eye(m)
    while gmax > tol and it < max_iter:
        it += 1
        G = np.zeros((n * m, (n + 1) * m))
        for i in range(n):
            G[i * m:(i + 1) * m, i * m:(i + 1) * m] = F.derivative(Y[i])
            G[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = -eye
        step = np.linalg.lstsq(G, -g.ravel(), rcond=None)[0].reshape(n + 1, m)
        alpha = 1.0
        for _ in range(12):
            trial = Y + alpha * step
            try:
                gt = residual(trial)
            except IntegrationError:
                gt = None
            if gt is not None and np.abs(gt).max() < gmax:
                Y, g = trial, gt
                break
            alpha *= 0.5
        else:
            break
        gmax = float(np.abs(g).max())
    dev = float(np.max(np.linalg.norm(X - Y, axis=1)))
    bound = c_est * n * po.delta
    ok = gmax <= tol and dev <= bound + tol
    return ShadowingResult(Y[0].copy(), dev, bool(ok), it, Y, gmax, bound)


# ---------------------------------------------------------------- volumes


def log_orbit_jacobian(F: TimeTauMap, x, n):
    """sum_{i<n} log|det DF(F^i x)|."""
    if n < 0:
        raise InputError("n must be >= 0")
    total = 0.0
    y = _point(F.system, x)
    for _ in range(n):
        y, _, ld = F.with_derivative(y)
        total += ld
    return total


def orbit_jacobian(F: TimeTauMap, x, n):
    """J_n(x) = |det DF^n(x)| as a product of per-step determinants."""
    return math.exp(log_orbit_jacobian(F, x, n))


def ball_volume(m, rho):
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1) * rho ** m


@dataclass
class BowenEstimate:
    n: int
    volume: float
    stderr: float
    hits: int
    samples: int
    needs_more_samples: bool


def bowen_ball_volumes(F: TimeTauMap, x, n_max, rho, samples, rng, rho_tilde=1.0):
    """Monte Carlo m(K_rho(x, n)) for every n = 0..n_max from one sample set.

    K_rho(x, n) shrinks with n, so one pass of rejection sampling in the
    rho-ball answers all n at once.
    """
    if not 0 < rho <= rho_tilde:
        raise InputError(f"rho must lie in (0, {rho_tilde}]")
    if n_max < 0 or samples < 1:
        raise InputError("need n >= 0 and at least one sample")
    f = F.system
    x = _point(f, x)
    ref = F.iterate(x, n_max)
    Y = np.ascontiguousarray(x + _uniform_ball(rng, samples, f.dimension, rho))
    b = f.trapping_region
    counts = K.bowen_survival(f.rhs, f.jac, f.param_vector, ref, Y, F.tau, float(rho),
                              F.tol, F.tol, b.lo, b.hi, MAX_STEPS)
    V = ball_volume(f.dimension, rho)
    out = []
    for k, c in enumerate(counts):
        p = c / samples
        out.append(BowenEstimate(k, V * p, V * math.sqrt(p * (1 - p) / samples), int(c), samples, c == 0))
    return out


def bowen_ball_volume(F: TimeTauMap, x, n, rho, samples, rng, rho_tilde=1.0):
    """(volume estimate, standard error) of the Bowen ball K_rho(x, n)."""
    est = bowen_ball_volumes(F, x, n, rho, samples, rng, rho_tilde)[n]
    if est.needs_more_samples:
        warnings.warn("no sample stayed in the Bowen ball; increase samples", stacklevel=2)
    return est.volume, est.stderr
