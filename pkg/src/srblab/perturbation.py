"""Small random perturbations of the time-tau map as Markov chains.

One step is ``x -> F(x) + eps * xi`` with ``xi`` standard Gaussian, so the
transition law is Gaussian with covariance eps^2 I centred at F(x),
modified near the boundary of the box by the chosen policy.

Randomness: every chain block gets its own generator spawned from one
seed, and blocks have a fixed size, so results do not depend on how many
workers run them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InputError
from .flow import MAX_STEPS, TimeTauMap, _point, _raise_status
from .measures import (EmpiricalMeasure, GridPartition, _distance_masses, noise_floor,
                       weak_distance, wilson_interval)

POLICIES = {"resample": K.RESAMPLE, "reflect": K.REFLECT, "clamp": K.CLAMP}
BLOCK = 1000


@dataclass
class MarkovKernel:
    map: TimeTauMap
    epsilon: float
    boundary_policy: str = "resample"
    seed: int | np.random.SeedSequence = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if self.boundary_policy not in POLICIES:
            raise InputError(f"boundary_policy must be one of {sorted(POLICIES)}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @classmethod
    def create(cls, f, tau, epsilon, policy="resample", seed=0, tol=1e-8):
        return cls(TimeTauMap(f, tau, tol), float(epsilon), policy, seed)

    @property
    def system(self):
        return self.map.system

    def next_seed(self):
        return int(self.rng.integers(2**63))


@dataclass
class ChainSample:
    kernel: MarkovKernel = field(repr=False)
    x0: np.ndarray
    states: np.ndarray = field(repr=False)
    seed: int

    def to_csv(self, path, header_lines=()):
        from .io import write_csv
        m = self.states.shape[1]
        cols = ["index", "t"] + [f"x{i}" for i in range(m)]
        idx = np.arange(len(self.states))
        write_csv(path, cols, np.column_stack([idx, idx * self.kernel.map.tau, self.states]),
                  header_lines, int_cols=1)


def _run_block(k, x0s, n_steps, keep_from, rng, zero_noise=False):
    F = k.map
    f = F.system
    b = f.trapping_region
    out, st, c, s = K.chain_block(f.rhs, f.jac, f.param_vector, np.ascontiguousarray(x0s, dtype=float),
                                  int(n_steps), int(keep_from), float(k.epsilon), F.tau,
                                  POLICIES[k.boundary_policy], bool(zero_noise), rng,
                                  F.tol, F.tol, b.lo, b.hi, MAX_STEPS)
    _raise_status(st, None, None)
    return out


def kernel_step(k: MarkovKernel, x, seed=None, noise=None):
    """One transition from x. ``noise`` overrides the Gaussian draw (zeros give F(x))."""
    f = k.system
    x = _point(f, x)
    if not f.trapping_region.contains(x):
        raise InputError("kernel_step starting point outside the trapping region")
    if noise is not None:
        y = k.map(x) + k.epsilon * np.asarray(noise, dtype=float)
        b = f.trapping_region
        if not b.contains(y):
            if k.boundary_policy == "resample":
                raise InputError("explicit noise lands outside the box under the resample policy")
            tmp = y.copy()
            K._apply_boundary(tmp, b.lo, b.hi, POLICIES[k.boundary_policy])
            y = tmp
        return y
    seed = k.next_seed() if seed is None else seed
    return _run_block(k, x[None], 1, 1, np.random.default_rng(seed))[0, 0]


def run_chain(k: MarkovKernel, x0, n, seed=None, zero_noise=False):
    """States x_0, ..., x_n of one chain, reproducible from ``seed``."""
    if n < 1:
        raise InputError("run_chain needs n >= 1")
    x0 = _point(k.system, x0)
    seed = k.next_seed() if seed is None else seed
    states = _run_block(k, x0[None], n, 0, np.random.default_rng(seed), zero_noise)[0]
    return ChainSample(k, x0, states, seed)


def run_ensemble(k: MarkovKernel, x0s, n_steps, keep_from=0, seed=None, workers=1):
    """Independent chains from each row of ``x0s``; returns (n_chains, n_keep, m)."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != k.system.dimension:
        raise InputError("starting points have the wrong dimension")
    seed = k.next_seed() if seed is None else seed
    nb = -(-len(x0s) // BLOCK)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gens = [np.random.default_rng(s) for s in ss.spawn(nb)]
    blocks = [x0s[i * BLOCK:(i + 1) * BLOCK] for i in range(nb)]

    def job(i):
        return _run_block(k, blocks[i], n_steps, keep_from, gens[i])

    if workers > 1 and nb > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, range(nb)))
    else:
        parts = [job(i) for i in range(nb)]
    return np.concatenate(parts, axis=0)


def estimate_stationary(k: MarkovKernel, x0, burn_in, n_samples, grid: GridPartition, n_chains=100,
                        min_samples=100_000, seed=None, workers=1, return_states=False):
    """Histogram of post-burn-in states of ``n_chains`` chains started at x0.

    Each chain discards ``burn_in`` steps and contributes
    ``ceil(n_samples / n_chains)`` states; chains are the bootstrap groups.
    """
    if burn_in < 1000:
        raise InputError("burn_in must be >= 1000 steps")
    if n_samples < min_samples:
        raise InputError(f"n_samples must be >= {min_samples}")
    x0 = _point(k.system, x0)
    per = -(-int(n_samples) // int(n_chains))
    states = run_ensemble(k, np.tile(x0, (n_chains, 1)), burn_in + per, keep_from=burn_in + 1,
                          seed=seed, workers=workers)
    groups = np.repeat(np.arange(n_chains), per)
    mu = EmpiricalMeasure.from_points(grid, states.reshape(-1, x0.size), groups)
    return (mu, states) if return_states else mu


# ---------------------------------------------------------------- checks


@dataclass
class DefectReport:
    defect: float
    floor: float
    factor: float = 3.0
    insufficient: bool = False
    detail: dict = field(default_factory=dict)

    @property
    def passed(self):
        return (not self.insufficient) and self.defect <= self.factor * self.floor

    def as_record(self):
        rec = {"defect": self.defect, "floor": self.floor, "factor": self.factor,
               "insufficient": int(self.insufficient), "passed": int(self.passed)}
        rec.update(self.detail)
        return rec


def sample_from_measure(mu: EmpiricalMeasure, n, rng):
    """Points drawn from a grid measure, uniform within the chosen cells."""
    cells = rng.choice(mu.partition.n_cells, size=n, p=mu.masses)
    w = mu.partition.widths
    return mu.partition.centers(cells) + (rng.random((n, w.size)) - 0.5) * w


def _iid_floor(partition, X, rng, n_boot):
    mu = EmpiricalMeasure.from_points(partition, X)
    return noise_floor(mu, rng, n_boot), mu


def check_stationarity(k: MarkovKernel, mu: EmpiricalMeasure, n_test, seed=0, n_boot=20):
    """Push samples of mu through one kernel step and compare with mu."""
    if n_test <= 0:
        return DefectReport(float("nan"), float("nan"), insufficient=True)
    rng = np.random.default_rng(seed)  # accepts ints and SeedSequences
    X = sample_from_measure(mu, n_test, rng)
    Y = run_ensemble(k, X, 1, keep_from=1, seed=int(rng.integers(2**63)))[:, 0]
    f_push, pushed = _iid_floor(mu.partition, Y, rng, n_boot)
    floor = math.hypot(f_push, noise_floor(mu, rng, n_boot))
    return DefectReport(weak_distance(pushed, mu), floor)


def chapman_kolmogorov_check(k: MarkovKernel, x, l, k_total, n_mc, grid: GridPartition, seed=0,
                             n_boot=20):
    """Law of x_{k_total} directly versus (k_total - l) steps, then l more from fresh noise."""
    if not 0 < l < k_total:
        raise InputError("need 0 < l < k_total")
    x = _point(k.system, x)
    ss = (seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)).spawn(4)
    start = np.tile(x, (n_mc, 1))
    direct = run_ensemble(k, start, k_total, keep_from=k_total, seed=ss[0])[:, 0]
    mid = run_ensemble(k, start, k_total - l, keep_from=k_total - l, seed=ss[1])[:, 0]
    two = run_ensemble(k, mid, l, keep_from=l, seed=ss[2])[:, 0]
    rng = np.random.default_rng(ss[3])
    fa, A = _iid_floor(grid, direct, rng, n_boot)
    fb, B = _iid_floor(grid, two, rng, n_boot)
    return DefectReport(weak_distance(A, B), math.hypot(fa, fb),
                        detail={"mean_direct": direct.mean(0).tolist(), "mean_composed": two.mean(0).tolist()})


@dataclass
class AvoidanceEstimate:
    epsilon: float
    gamma: float
    k_steps: int
    radius: float
    probability: float
    ci_low: float
    ci_high: float
    hits: int
    n: int


def min_avoidance_steps(epsilon, m):
    """ceil(log(eps^-m)), the lemma's lower bound on the number of steps."""
    return max(1, math.ceil(m * math.log(1.0 / epsilon)))


def singularity_avoidance(k: MarkovKernel, x, gamma, k_steps, n_mc, seed=0, workers=1):
    """P(x^eps_k lies within eps^(1-gamma) of Sing(X)) with a Wilson 95% interval."""
    if not 0 < gamma < 1:
        raise InputError("gamma must lie in (0, 1)")
    f = k.system
    eps = k.epsilon
    if k_steps < min_avoidance_steps(eps, f.dimension):
        raise InputError("k_steps below ceil(log(eps^-m))")
    radius = eps ** (1 - gamma)
    if not f.singularities:
        return AvoidanceEstimate(eps, gamma, k_steps, radius, 0.0, 0.0, 0.0, 0, n_mc)
    x = _point(f, x)
    final = run_ensemble(k, np.tile(x, (n_mc, 1)), k_steps, keep_from=k_steps, seed=seed, workers=workers)[:, 0]
    hits = int((f.distance_to_singularities(final) < radius).sum())
    lo, hi = wilson_interval(hits, n_mc)
    return AvoidanceEstimate(eps, gamma, k_steps, radius, hits / n_mc, lo, hi, hits, n_mc)


def chain_length_window(epsilon):
    """(ceil((log eps)^2), floor((log eps)^4)) default chain lengths."""
    L = abs(math.log(epsilon))
    return math.ceil(L ** 2), max(math.ceil(L ** 2), math.floor(L ** 4))


@dataclass
class ChainConfig:
    """Chain settings shared by the stationary-measure studies."""

    x0: np.ndarray
    tau: float = 1.5
    burn_in: int = 1000
    n_samples: int = 1_000_000
    n_chains: int = 100
    tol: float = 1e-8
    policy: str = "resample"
    min_samples: int = 100_000
    srb_transient: float = 100.0
    srb_average: float = 1e5
    srb_sample_dt: float = 0.1
