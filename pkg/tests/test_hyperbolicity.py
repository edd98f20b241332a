import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

import oracles
from srblab import InputError, make_system
from srblab.flow import flow_map, simulate
from srblab.hyperbolicity import (check_sectional_conditions, estimate_splitting, fit_rate, hyperbolic_check,
                                  lyapunov_spectrum, min_plane_determinant, principal_angles)

S, R, B = 10.0, 28.0, 8.0 / 3.0
# Benettin oracle (oracles.py), frozen before the integrator existed
BENETTIN = [0.906856846744292, -0.0015096964149070844, -14.5719114661941]


def brute_plane_min(A, rng, n=1000):
    # min over 2-planes L of the area factor |det(A|L)|, random search then polish
    def area(v):
        Q, _ = np.linalg.qr(v.reshape(-1, 2))
        G = (A @ Q).T @ (A @ Q)
        return math.sqrt(max(np.linalg.det(G), 0.0))

    k = A.shape[1]
    best = min((area(rng.standard_normal(2 * k)) for _ in range(n)))
    starts = [rng.standard_normal(2 * k) for _ in range(5)]
    for v in starts:
        best = min(best, minimize(area, v, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14,
                                                                          "maxiter": 20000}).fun)
    return best


@pytest.fixture(scope="module")
def spectrum():
    f = make_system("lorenz")
    return lyapunov_spectrum(f, [1, 1, 1], 100.0, 2000.0, 0.5)


@pytest.fixture(scope="module")
def split():
    f = make_system("lorenz")
    x = flow_map(f, [1, 1, 1], 100.0, 1e-9)
    orbit = simulate(f, x, 0.1, 800)
    return estimate_splitting(f, orbit, 1, rng=np.random.default_rng(0))


def test_linear_exponents():
    f = make_system("linear3d", a=0.3, b=-0.7, c=-2.0)
    rep = lyapunov_spectrum(f, [0, 0, 0], 0.0, 100.0, 1.0, tol=1e-12)
    assert np.allclose(rep.exponents, [0.3, -0.7, -2.0], atol=1e-8)


def test_lorenz_spectrum(spectrum):
    l1, l2, l3 = spectrum.exponents
    assert 0.85 <= l1 <= 0.95
    assert -0.02 <= l2 <= 0.02
    assert abs(l3 - (-(S + 1 + B) - l1 - l2)) <= 0.01 * (S + 1 + B)
    assert abs(l1 - BENETTIN[0]) <= 0.05
    assert list(spectrum.exponents) == sorted(spectrum.exponents, reverse=True)


def test_lorenz_liouville(spectrum):
    assert abs(spectrum.exponents.sum() / -(S + 1 + B) - 1) <= 0.01
    assert spectrum.liouville_residual <= 0.01 * (S + 1 + B)
    H = spectrum.convergence_history
    assert H.shape[1] == 4 and np.all(np.diff(H[:, 0]) > 0)


def test_spectrum_rejects_short_average():
    with pytest.raises(InputError):
        lyapunov_spectrum(make_system("lorenz"), [1, 1, 1], 0.0, 10.0, 0.5)


@given(arrays(float, (3, 3), elements=st.floats(-3, 3)))
def test_plane_determinant_formula(A):
    A = A + 0.1 * np.eye(3)
    s = np.linalg.svd(A, compute_uv=False)
    assert min_plane_determinant(A) == pytest.approx(s[-1] * s[-2], abs=1e-12)


def test_plane_determinant_brute_force(split):
    f = make_system("lorenz")
    rng = np.random.default_rng(1)
    for i in range(10):
        A = split.step_maps[i]
        A = A / np.linalg.norm(A, 2)
        formula = min_plane_determinant(A)
        brute = brute_plane_min(A, rng)
        assert brute >= formula - 1e-9
        assert abs(brute - formula) <= 1e-6


def test_principal_angles():
    A = np.eye(3)[:, :1]
    B = np.array([[1.0], [1.0], [0.0]]) / math.sqrt(2)
    assert principal_angles(A, B)[0] == pytest.approx(math.pi / 4)
    assert principal_angles(A, A)[0] == pytest.approx(0.0, abs=1e-8)


def test_fit_rate():
    t = np.linspace(0, 10, 50)
    slope, intercept, resid = fit_rate(t, 2.0 - 0.7 * t)
    assert slope == pytest.approx(-0.7) and intercept == pytest.approx(2.0) and resid <= 1e-12


def test_splitting_frames(split):
    s, c = split.stable_frames, split.central_frames
    assert s.shape[2] + c.shape[2] == 3
    for E in (s[::50], c[::50]):
        for Q in E:
            assert np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])) <= 1e-10
    assert split.min_angle > 0


def test_splitting_invariance(split):
    ds, dc = split.invariance_defect()
    assert ds <= 1e-3 and dc <= 1e-3


def test_sectional_conditions(split, spectrum):
    f = make_system("lorenz")
    rep = check_sectional_conditions(f, split, 15.0, n_base=60)
    assert rep.sample_size >= 50
    assert rep.contraction_rate < 0 and rep.domination_rate < 0 and rep.sectional_rate > 0
    assert all(rep.fit_residuals[k] < 0.1 for k in ("contraction", "domination", "sectional"))
    assert rep.passed
    l1, l2, _ = spectrum.exponents
    assert rep.sectional_rate <= l1 + l2 + 0.1


def test_flow_direction_exponent(split, spectrum):
    f = make_system("lorenz")
    rep = hyperbolic_check(f, split, 15.0, n_base=60, exclusion=0.5)
    assert abs(rep.extra["flow_rate"]) <= 0.02
    assert abs(rep.extra["flow_rate"] - spectrum.exponents[1]) <= 0.03


@pytest.mark.parametrize("re, expanding", [(0.3, True), (-0.3, False)])
def test_saddle_focus_sectional_rate(re, expanding):
    # central block is the complex pair, so the area rate is 2 re
    f = make_system("saddle_focus3d", s=-2.0, re=re, im=1.0)
    orbit = simulate(f, [0.3, 0.2, 0.1], 0.05, 300)
    split = estimate_splitting(f, orbit, 1, rng=np.random.default_rng(0), trim_time=2.0)
    rep = check_sectional_conditions(f, split, 5.0, n_base=30, exclusion=0.0)
    assert rep.sectional_rate == pytest.approx(2 * re, abs=0.02)
    assert rep.passed == expanding
