import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from srblab import InputError, make_system
from srblab.flow import TimeTauMap, flow_map
from srblab.measures import EmpiricalMeasure, GridPartition
from srblab.perturbation import (MarkovKernel, chain_length_window, chapman_kolmogorov_check, check_stationarity,
                                 estimate_stationary, kernel_step, min_avoidance_steps, run_chain, run_ensemble,
                                 singularity_avoidance)

A, TAU, EPS = 1.0, 1.0, 0.1
RHO1 = math.exp(-A * TAU)
SD = EPS / math.sqrt(1 - RHO1 ** 2)


def ou_kernel(eps=EPS, policy="resample", seed=0):
    return MarkovKernel.create(make_system("ou1d", a=A), TAU, eps, policy, seed=seed, tol=1e-10)


def gaussian_masses(grid, sd):
    edges = np.linspace(grid.box.lo[0], grid.box.hi[0], grid.resolution[0] + 1)
    return np.diff(stats.norm.cdf(edges, scale=sd))


@pytest.fixture(scope="module")
def long_ou_chain():
    return run_chain(ou_kernel(), [0.0], 1_000_000, seed=11).states[1000:, 0]


def test_one_step_moments():
    k = ou_kernel()
    x = 0.5
    Y = run_ensemble(k, np.full((100_000, 1), x), 1, keep_from=1, seed=3)[:, 0, 0]
    se = EPS / math.sqrt(len(Y))
    assert abs(Y.mean() - RHO1 * x) <= 4 * se
    assert abs(Y.var() / EPS ** 2 - 1) <= 0.05


def test_lag_one_autocorrelation(long_ou_chain):
    x = long_ou_chain
    r = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r - RHO1) <= 0.02


def test_stationary_variance(long_ou_chain):
    assert abs(np.mean(long_ou_chain ** 2) / SD ** 2 - 1) <= 0.03


def markov_chi2(x, nbins=80):
    # given a narrow bin of x_n, the signs of x_{n-1} and x_{n+1} around
    # their in-bin medians should be independent
    prev, cur, nxt = x[:-2], x[1:-1], x[2:]
    sd = x.std()
    edges = np.linspace(-2 * sd, 2 * sd, nbins + 1)
    b = np.digitize(cur, edges)
    chi, dof = 0.0, 0
    for i in range(1, nbins + 1):
        sel = b == i
        if sel.sum() < 200:
            continue
        p = prev[sel] > np.median(prev[sel])
        q = nxt[sel] > np.median(nxt[sel])
        table = np.array([[np.sum(p & q), np.sum(p & ~q)], [np.sum(~p & q), np.sum(~p & ~q)]])
        chi += stats.chi2_contingency(table, correction=False)[0]
        dof += 1
    return stats.chi2.sf(chi, dof)


def test_markov_property(long_ou_chain):
    assert markov_chi2(long_ou_chain) > 0.01


def test_markov_test_detects_memory():
    rng = np.random.default_rng(0)
    x = np.zeros(1_000_000)
    e = rng.standard_normal(x.size)
    for i in range(2, x.size):
        x[i] = 0.3 * x[i - 1] + 0.4 * x[i - 2] + e[i]
    assert markov_chi2(x) < 0.01


def test_zero_noise_is_the_map():
    f = make_system("lorenz")
    x = flow_map(f, [1, 1, 1], 20.0)
    k = MarkovKernel.create(f, 1.5, 0.1, seed=0, tol=1e-8)
    chain = run_chain(k, x, 10, seed=1, zero_noise=True).states
    F = TimeTauMap(f, 1.5, 1e-8)
    assert np.allclose(chain, F.iterate(x, 10), rtol=0, atol=1e-12)
    assert np.array_equal(kernel_step(k, x, noise=np.zeros(3)), F(x))


def test_chain_reproducible():
    f = make_system("lorenz")
    x = flow_map(f, [1, 1, 1], 20.0)
    k = MarkovKernel.create(f, 1.5, 0.1)
    a = run_chain(k, x, 50, seed=7).states
    b = run_chain(k, x, 50, seed=7).states
    c = run_chain(k, x, 50, seed=8).states
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_ensemble_independent_of_workers():
    k = ou_kernel()
    X = np.zeros((2500, 1))
    a = run_ensemble(k, X, 5, seed=np.random.SeedSequence(4), workers=1)
    b = run_ensemble(k, X, 5, seed=np.random.SeedSequence(4), workers=3)
    assert np.array_equal(a, b)


@settings(max_examples=12)
@given(st.sampled_from(["resample", "reflect", "clamp"]), st.floats(0.1, 3.0), st.floats(-2.0, 2.0))
def test_boundary_confinement(policy, eps, x0):
    k = ou_kernel(eps, policy)
    states = run_chain(k, [x0], 200, seed=0).states
    assert np.all(np.abs(states) <= 2.0)


def test_input_errors():
    with pytest.raises(InputError):
        ou_kernel(eps=0.0)
    with pytest.raises(InputError):
        ou_kernel(policy="wrap")
    with pytest.raises(InputError):
        kernel_step(ou_kernel(), [5.0])
    with pytest.raises(InputError):
        run_chain(ou_kernel(), [0.0], 0)


def test_stationarity_exact_and_wrong():
    k = ou_kernel()
    grid = GridPartition(k.system.trapping_region, 401)
    exact = EmpiricalMeasure.from_masses(grid, gaussian_masses(grid, SD))
    good = check_stationarity(k, exact, 200_000, seed=1)
    assert good.passed
    uniform = EmpiricalMeasure.from_masses(grid, np.ones(401))
    bad = check_stationarity(k, uniform, 200_000, seed=1)
    assert bad.defect > 10 * bad.floor


def test_estimated_measure_is_stationary():
    k = ou_kernel()
    grid = GridPartition(k.system.trapping_region, 401)
    mu = estimate_stationary(k, [0.0], 1000, 200_000, grid, n_chains=50, seed=2)
    assert abs(mu.sample_count - 200_000) <= 50
    assert check_stationarity(k, mu, 200_000, seed=3).passed


def test_chapman_kolmogorov_ou():
    k = ou_kernel()
    grid = GridPartition(k.system.trapping_region, 401)
    assert chapman_kolmogorov_check(k, [0.8], 3, 6, 100_000, grid, seed=5).passed


def test_chapman_kolmogorov_lorenz():
    f = make_system("lorenz")
    x = flow_map(f, [1, 1, 1], 20.0)
    k = MarkovKernel.create(f, 1.5, 0.1)
    grid = GridPartition(f.trapping_region, 32)
    rep = chapman_kolmogorov_check(k, x, 2, 4, 20_000, grid, seed=6)
    assert rep.defect <= 3 * rep.floor


def test_avoidance_small_gamma_matches_gaussian_mass():
    # gamma -> 0: radius -> eps and the law after k steps is N(0, s_k^2)
    k = ou_kernel()
    gamma, k_steps, n = 0.01, 8, 100_000
    est = singularity_avoidance(k, [0.0], gamma, k_steps, n, seed=9)
    s_k = EPS * math.sqrt((1 - RHO1 ** (2 * k_steps)) / (1 - RHO1 ** 2))
    p = math.erf(est.radius / (s_k * math.sqrt(2)))
    assert est.radius == pytest.approx(EPS ** (1 - gamma))
    assert abs(est.probability - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert est.ci_low <= est.probability <= est.ci_high


def test_step_counts():
    assert min_avoidance_steps(0.1, 3) == math.ceil(3 * math.log(10))
    lo, hi = chain_length_window(math.exp(-2))
    assert (lo, hi) == (4, 16)
