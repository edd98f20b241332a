"""Histogram measures on grid partitions and the distances between them.

Measures keep per-group counts (chains, or contiguous blocks of one long
orbit) next to the normalised masses, so that noise floors can be
estimated by resampling whole groups instead of correlated samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import InputError
from .flow import MAX_STEPS, Trajectory, _raise_status, flow_map, simulate
from .systems import Box, VectorField, eval_field

DICTIONARY_SIZE = 256
_DICTIONARY_SEED = 20240917


@dataclass(frozen=True)
class GridPartition:
    box: Box
    resolution: tuple

    def __post_init__(self):
        res = tuple(int(r) for r in np.broadcast_to(self.resolution, (self.box.dimension,)))
        if any(r < 2 for r in res):
            raise InputError("grid resolution must be >= 2 per axis")
        object.__setattr__(self, "resolution", res)

    @property
    def n_cells(self):
        return int(np.prod(self.resolution))

    @property
    def widths(self):
        return self.box.widths / np.array(self.resolution)

    def cell_index(self, X):
        """Flat (C-order) cell index of each row; points outside are clipped to edge cells."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        res = np.array(self.resolution)
        ijk = np.floor((X - self.box.lo) / self.widths).astype(np.int64)
        ijk = np.clip(ijk, 0, res - 1)
        return np.ravel_multi_index(ijk.T, self.resolution)

    def centers(self, idx):
        ijk = np.array(np.unravel_index(np.asarray(idx), self.resolution)).T
        return self.box.lo + (ijk + 0.5) * self.widths


@dataclass
class EmpiricalMeasure:
    partition: GridPartition
    masses: np.ndarray = field(repr=False)
    sample_count: int
    group_counts: sparse.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.masses.shape != (self.partition.n_cells,):
            raise InputError("mass vector does not match the partition")

    @classmethod
    def from_points(cls, partition, X, groups=None):
        """Normalised histogram; ``groups`` labels rows for the grouped bootstrap."""
        X = np.atleast_2d(X)
        idx = partition.cell_index(X)
        counts = np.bincount(idx, minlength=partition.n_cells).astype(float)
        gc = None
        if groups is not None:
            groups = np.asarray(groups)
            G = int(groups.max()) + 1
            gc = sparse.csr_matrix((np.ones(idx.size), (groups, idx)), shape=(G, partition.n_cells))
            gc.sum_duplicates()
        return cls(partition, counts / counts.sum(), int(idx.size), gc)

    @classmethod
    def from_masses(cls, partition, masses, sample_count=0):
        """Measure with given masses; ``sample_count=0`` marks it as exact (noise-free)."""
        masses = np.asarray(masses, dtype=float)
        if np.any(masses < 0):
            raise InputError("masses must be nonnegative")
        return cls(partition, masses / masses.sum(), int(sample_count))

    @property
    def counts(self):
        return self.masses * self.sample_count

    def merge(self, other):
        """Pool two measures built from disjoint samples (weights = sample counts)."""
        if other.partition != self.partition:
            raise InputError("cannot merge measures on different partitions")
        n1, n2 = self.sample_count, other.sample_count
        masses = (n1 * self.masses + n2 * other.masses) / (n1 + n2)
        gc = None
        if self.group_counts is not None and other.group_counts is not None:
            gc = sparse.vstack([self.group_counts, other.group_counts]).tocsr()
        return EmpiricalMeasure(self.partition, masses / masses.sum(), n1 + n2, gc)

    def support(self):
        return np.flatnonzero(self.masses > 0)

    def marginal(self, axis):
        return self.masses.reshape(self.partition.resolution).sum(
            axis=tuple(i for i in range(len(self.partition.resolution)) if i != axis))

    def bootstrap(self, rng, n_boot):
        """Replicate mass vectors: grouped resampling if groups exist, else multinomial."""
        if self.sample_count == 0:
            for _ in range(n_boot):
                yield self.masses
            return
        if self.group_counts is not None and self.group_counts.shape[0] > 1:
            G = self.group_counts.shape[0]
            for _ in range(n_boot):
                w = rng.multinomial(G, np.full(G, 1.0 / G)).astype(float)
                c = np.asarray(self.group_counts.T @ w).ravel()
                yield c / c.sum()
        else:
            for _ in range(n_boot):
                c = rng.multinomial(self.sample_count, self.masses).astype(float)
                yield c / c.sum()

    def mean(self):
        idx = self.support()
        return self.masses[idx] @ self.partition.centers(idx)

    def to_csv(self, path, header_lines=()):
        from .io import write_csv
        idx = self.support()
        m = self.partition.box.dimension
        cols = ["cell"] + [f"c{i}" for i in range(m)] + ["mass"]
        rows = np.column_stack([idx, self.partition.centers(idx), self.masses[idx]])
        write_csv(path, cols, rows, header_lines, int_cols=1)


# ---------------------------------------------------------------- distances


def _dictionary(box):
    """Fixed Lipschitz-1 test functions for a box: (kind, params) arrays."""
    rng = np.random.default_rng(_DICTIONARY_SEED)
    m = box.dimension
    n_rest = DICTIONARY_SIZE - m
    n_half = n_rest // 2
    n_ball = n_rest - n_half
    u = rng.standard_normal((n_half, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(box.lo, box.hi)])).reshape(m, -1).T
    proj = u @ corners.T
    offsets = proj.min(1) + rng.random(n_half) * (proj.max(1) - proj.min(1))
    centers = box.lo + rng.random((n_ball, m)) * box.widths
    diam = float(np.linalg.norm(box.widths))
    radii = rng.random(n_ball) * diam / 2
    return u, offsets, centers, radii


def _dictionary_values(box, X):
    """(DICTIONARY_SIZE, N) values of the test functions at the rows of X."""
    u, offsets, centers, radii = _dictionary(box)
    mid = (box.lo + box.hi) / 2
    vals = [(X - mid).T]
    vals.append(np.clip(u @ X.T - offsets[:, None], 0.0, 1.0))
    d = np.sqrt(((X[None, :, :] - centers[:, None, :]) ** 2).sum(-1))
    vals.append(np.clip(radii[:, None] - d, 0.0, 1.0))
    return np.vstack(vals)


def marginal_w1(mu, nu, axis):
    """Exact Wasserstein-1 distance between the coordinate marginals of two grid measures."""
    a = mu.marginal(axis)
    b = nu.marginal(axis)
    return float(np.abs(np.cumsum(a - b)).sum() * mu.partition.widths[axis])


def _distance_masses(partition, a, b):
    diff = a - b
    idx = np.flatnonzero((a > 0) | (b > 0))
    if idx.size == 0:
        return 0.0
    best = 0.0
    # chunk to bound memory on large supports
    for s in range(0, idx.size, 20000):
        part = idx[s:s + 20000]
        vals = _dictionary_values(partition.box, partition.centers(part))
        if s == 0:
            acc = vals @ diff[part]
        else:
            acc = acc + vals @ diff[part]
    best = float(np.abs(acc).max())
    res = partition.resolution
    A = a.reshape(res)
    B = b.reshape(res)
    for ax in range(len(res)):
        others = tuple(i for i in range(len(res)) if i != ax)
        ma = A.sum(axis=others)
        mb = B.sum(axis=others)
        best = max(best, float(np.abs(np.cumsum(ma - mb)).sum() * partition.widths[ax]))
    return best


def weak_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    """Dictionary lower bound for the bounded-Lipschitz / W1 distance.

    Maximum of |int f dmu - int f dnu| over a fixed seeded dictionary of
    Lipschitz-1 functions (coordinate projections, ramped half-space and
    ball indicators) and of the exact coordinate-marginal W1 distances.
    """
    if mu.partition != nu.partition:
        raise InputError("weak_distance needs measures on the same partition")
    return _distance_masses(mu.partition, mu.masses, nu.masses)


def noise_floor(mu, rng, n_boot=20):
    """Mean distance between bootstrap replicates of ``mu`` and ``mu`` itself."""
    if mu.sample_count == 0:
        return 0.0
    d = [_distance_masses(mu.partition, rep, mu.masses) for rep in mu.bootstrap(rng, n_boot)]
    return float(np.mean(d))


def pair_floor(mu, nu, rng, n_boot=20):
    """Noise floor for d(mu, nu) when both are independent estimates."""
    return math.hypot(noise_floor(mu, rng, n_boot), noise_floor(nu, rng, n_boot))


# ---------------------------------------------------------------- SRB estimate


def srb_estimate(f: VectorField, x0, t_transient, t_average, sample_dt, grid: GridPartition,
                 n_blocks=100, tol=1e-9):
    """Histogram of X_t(x0), sampled every ``sample_dt`` after a transient."""
    x = flow_map(f, x0, t_transient, tol) if t_transient > 0 else np.asarray(x0, dtype=float)
    n = int(round(t_average / sample_dt))
    if n < 1:
        raise InputError("t_average must exceed sample_dt")
    traj = simulate(f, x, sample_dt, n - 1, tol)
    groups = (np.arange(n) * n_blocks) // n
    return EmpiricalMeasure.from_points(grid, traj.points, groups)


@dataclass
class StabilityTable:
    eps: np.ndarray
    distances: np.ndarray
    floors: np.ndarray
    monotone: bool
    final_within_floor: bool
    analytic: np.ndarray | None = None

    @property
    def passed(self):
        return self.monotone and self.final_within_floor

    def rows(self):
        for i in range(len(self.eps)):
            a = self.analytic[i] if self.analytic is not None else float("nan")
            yield float(self.eps[i]), float(self.distances[i]), float(self.floors[i]), a


def monotone_nonincreasing(values, floors):
    """values[i+1] <= values[i] up to the sum of the two floors."""
    return all(values[i + 1] <= values[i] + floors[i] + floors[i + 1] for i in range(len(values) - 1))


def stability_study(f: VectorField, eps_list, chain, grid: GridPartition, srb=None, seed=0,
                    n_boot=20, analytic=None, workers=1):
    """Distances d(mu^eps, mu_SRB) for decreasing eps.

    ``chain`` is a :class:`srblab.perturbation.ChainConfig`; ``srb`` a
    precomputed SRB estimate (computed from ``chain.srb_*`` when None).
    """
    from .perturbation import MarkovKernel, estimate_stationary

    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 4:
        raise InputError("stability study needs at least 4 noise levels")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise InputError("eps_list must be strictly decreasing and positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(eps.size + 1)
    if srb is None:
        srb = srb_estimate(f, chain.x0, chain.srb_transient, chain.srb_average, chain.srb_sample_dt, grid)
    boot = np.random.default_rng(seeds[-1])
    dist, floors = [], []
    srb_floor = noise_floor(srb, boot, n_boot)
    for e, s in zip(eps, seeds):
        k = MarkovKernel.create(f, chain.tau, e, chain.policy, seed=s, tol=chain.tol)
        mu = estimate_stationary(k, chain.x0, chain.burn_in, chain.n_samples, grid,
                                 n_chains=chain.n_chains, min_samples=chain.min_samples, workers=workers)
        dist.append(weak_distance(mu, srb))
        floors.append(math.hypot(noise_floor(mu, boot, n_boot), srb_floor))
    dist = np.array(dist)
    floors = np.array(floors)
    return StabilityTable(eps, dist, floors, monotone_nonincreasing(dist, floors),
                          bool(dist[-1] <= 2 * floors[-1]), analytic)


# ---------------------------------------------------------------- rectangles


@dataclass
class Rectangle:
    center: np.ndarray
    unstable_arc: np.ndarray = field(repr=False)
    stable_radius: float
    thickness: float
    flow_directions: np.ndarray | None = field(default=None, repr=False)

    @property
    def mes_u(self):
        """Arclength of the unstable arc."""
        return float(np.linalg.norm(np.diff(self.unstable_arc, axis=0), axis=1).sum())

    def contains(self, P):
        """Membership of each row of P in the fattened rectangle."""
        P = np.atleast_2d(P)
        A = self.unstable_arc
        tang = np.gradient(A, axis=0)
        tang /= np.linalg.norm(tang, axis=1, keepdims=True)
        if self.flow_directions is None:
            phi = np.zeros_like(A)
        else:
            phi = self.flow_directions - (self.flow_directions * tang).sum(1, keepdims=True) * tang
            nrm = np.linalg.norm(phi, axis=1, keepdims=True)
            phi = np.divide(phi, nrm, out=np.zeros_like(phi), where=nrm > 1e-12)
        reach = np.max(np.linalg.norm(A - self.center, axis=1)) + self.stable_radius + self.thickness
        near = np.linalg.norm(P - self.center, axis=1) <= reach + 1e-12
        inside = np.zeros(len(P), dtype=bool)
        if not near.any():
            return inside
        Q = P[near]
        _, i = cKDTree(A).query(Q)
        d = Q - A[i]
        t = (d * tang[i]).sum(1)
        within = ~(((i == 0) & (t < 0)) | ((i == len(A) - 1) & (t > 0)))
        d = d - t[:, None] * tang[i]
        fcomp = (d * phi[i]).sum(1)
        trans = np.linalg.norm(d - fcomp[:, None] * phi[i], axis=1)
        inside[near] = within & (np.abs(fcomp) <= self.thickness) & (trans <= self.stable_radius)
        return inside


def _forward_direction(f, orbit, rng):
    """Leading covariant direction at the last orbit point by forward power iteration."""
    b = f.trapping_region
    pts = np.ascontiguousarray(orbit.points[:-1])
    _, mats, _, st = K.tangent_maps(f.rhs, f.jac, f.param_vector, pts, orbit.dt, orbit.tol, orbit.tol,
                                    b.lo, b.hi, MAX_STEPS)
    _raise_status(st, None, None)
    v = rng.standard_normal(f.dimension)
    v /= np.linalg.norm(v)
    for A in mats:
        v = A @ v
        v /= np.linalg.norm(v)
    return v


def build_rectangle(f: VectorField, orbit: Trajectory, eta, rho, thickness=None, push_time=1.0,
                    n_arc=2001, rng=None):
    """Local unstable arc through z = orbit.points[-1], fattened by rho and thickness.

    A short segment along the leading direction at X_{-push_time}(z) (an
    earlier orbit point) is pushed forward to z and truncated to the
    connected piece within eta of z.
    """
    if not eta > 0:
        raise InputError("eta must be positive")
    if not rho > 0:
        raise InputError("rho must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    thickness = rho if thickness is None else thickness
    z = orbit.points[-1]
    if f.singularities and f.distance_to_singularities(z)[0] <= 10 * rho:
        raise InputError("rectangle center too close to a singularity")
    back = int(round(push_time / orbit.dt))
    if back < 1 or back >= len(orbit.points) - 1:
        raise InputError("orbit too short for the requested push time")
    lead = Trajectory(f, orbit.t0, orbit.dt, orbit.points[: len(orbit.points) - back], orbit.tol)
    w = lead.points[-1]
    v = _forward_direction(f, lead, rng)
    t_push = back * orbit.dt
    from .flow import tangent_flow
    zt, M = tangent_flow(f, w, t_push, orbit.tol)
    gain = np.linalg.norm(M @ v)
    if not gain > 0:
        raise InputError("leading direction degenerate")
    half = 1.5 * eta / gain
    s = np.linspace(-half, half, n_arc)
    seg = np.ascontiguousarray(w + s[:, None] * v)
    b = f.trapping_region
    img, st = K.map_points(f.rhs, f.jac, f.param_vector, seg, t_push, orbit.tol, orbit.tol,
                           b.lo, b.hi, MAX_STEPS)
    if np.any(st != K.OK):
        raise InputError("arc left the trapping region while being pushed")
    img[n_arc // 2] = zt
    arc = _truncate_arc(img, n_arc // 2, z, eta)
    if len(arc) < 3:
        raise InputError("unstable arc degenerate")
    flows = np.array([eval_field(f, p) for p in arc])
    return Rectangle(z.copy(), arc, float(rho), float(thickness), flows)


def _truncate_arc(img, c, z, eta):
    """Connected piece of the polyline through img[c] inside the eta-ball, ends interpolated."""
    d = np.linalg.norm(img - z, axis=1)

    def walk(step):
        pts = []
        i = c
        while 0 <= i + step < len(img) and d[i + step] <= eta:
            i += step
            pts.append(img[i])
        j = i + step
        if 0 <= j < len(img):
            # interpolate the crossing of the eta-sphere on segment (i, j)
            p, q = img[i], img[j]
            lo_, hi_ = 0.0, 1.0
            for _ in range(60):
                mid = (lo_ + hi_) / 2
                if np.linalg.norm(p + mid * (q - p) - z) <= eta:
                    lo_ = mid
                else:
                    hi_ = mid
            pts.append(p + lo_ * (q - p))
        return pts

    left = walk(-1)[::-1]
    right = walk(1)
    return np.array(left + [img[c]] + right)


@dataclass
class MassEstimate:
    mass: float
    mes_u: float
    ratio: float
    ci_low: float
    ci_high: float
    hits: int
    n: int
    widened: bool


def wilson_interval(hits, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def rectangle_mass_bound(samples, rect: Rectangle):
    """Mass of the fattened rectangle under an empirical law, and mass / mes^u.

    ``samples`` is an (N, m) array, a ChainSample, or an EmpiricalMeasure
    (cell centers weighted by mass).
    """
    if isinstance(samples, EmpiricalMeasure):
        idx = samples.support()
        inside = rect.contains(samples.partition.centers(idx))
        mass = float(samples.masses[idx][inside].sum())
        n = max(samples.sample_count, 1)
        hits = int(round(mass * n))
    else:
        P = getattr(samples, "states", samples)
        P = np.asarray(P).reshape(-1, rect.center.size)
        inside = rect.contains(P)
        hits = int(inside.sum())
        n = len(P)
        mass = hits / n
    lo, hi = wilson_interval(hits, n)
    mes = rect.mes_u
    return MassEstimate(mass, mes, mass / mes, lo, hi, hits, n, hits == 0)


# ---------------------------------------------------------------- coverage


def visited_cells(f: VectorField, x0, t, grid: GridPartition, sample_dt=0.01, t_transient=0.0, tol=1e-9):
    """Set of grid cells visited by X_s(x0), 0 <= s <= t (after an optional transient)."""
    x = flow_map(f, x0, t_transient, tol) if t_transient > 0 else np.asarray(x0, dtype=float)
    n = int(round(t / sample_dt))
    if n == 0:
        return set(grid.cell_index(x[None]).tolist())
    traj = simulate(f, x, sample_dt, n, tol)
    return set(np.unique(grid.cell_index(traj.points)).tolist())


def attractor_coverage(f: VectorField, x0, t, grid: GridPartition, reference=None, sample_dt=0.01,
                       t_transient=0.0):
    """Fraction of reference cells visited by the orbit of x0 (the count itself if no reference)."""
    cells = visited_cells(f, x0, t, grid, sample_dt, t_transient)
    if reference is None:
        return float(len(cells)), cells
    reference = set(reference)
    return len(cells & reference) / len(reference), cells


def symmetric_difference_fraction(a, b):
    a, b = set(a), set(b)
    return len(a ^ b) / max(1, len(a | b))
