import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from srblab import InputError, IntegrationError, make_system
from srblab.flow import (TimeTauMap, ball_volume, bowen_ball_volumes, flow_map, generate_pseudo_orbit,
                         log_orbit_jacobian, orbit_jacobian, shadow_search, simulate, tangent_flow,
                         tangent_flow_full)

DIV = -(10 + 1 + 8.0 / 3.0)
# fixed-step RK4 at dt=1e-5, see oracles.py
RK4_X1 = [-9.378570010925012, -8.357033788426817, 29.362325337363128]


def attractor_points(f, n, seed=0):
    x = flow_map(f, [1.0, 1.0, 1.0], 30.0)
    return simulate(f, x, 0.37, n).points[1:]


def test_flow_map_vs_rk4(lorenz):
    assert np.linalg.norm(flow_map(lorenz, [1, 1, 1], 1.0, 1e-10) - RK4_X1) <= 1e-6


def test_linear_flow_exact():
    f = make_system("linear3d", a=-0.3, b=-1.0, c=0.2)
    x = np.array([0.5, -1.0, 2.0])
    assert np.allclose(flow_map(f, x, 2.0, 1e-12), x * np.exp(np.array([-0.3, -1.0, 0.2]) * 2.0), rtol=1e-10)
    _, M = tangent_flow(f, x, 2.0, 1e-12)
    assert np.allclose(M, np.diag(np.exp(np.array([-0.3, -1.0, 0.2]) * 2.0)), atol=1e-10)


def test_ou_flow_exact():
    f = make_system("ou1d", a=1.0)
    assert abs(flow_map(f, [1.5], 1.0)[0] - 1.5 * math.exp(-1)) <= 1e-10


def test_liouville_determinant(lorenz):
    for x in attractor_points(lorenz, 5):
        _, M = tangent_flow(lorenz, x, 1.0)
        assert abs(np.linalg.det(M) / math.exp(DIV) - 1) <= 1e-6
        _, _, logdet = tangent_flow_full(lorenz, x, 1.0)
        assert abs(logdet / DIV - 1) <= 1e-6


def test_tangent_flow_vs_finite_differences(lorenz):
    x = attractor_points(lorenz, 1)[0]
    _, M = tangent_flow(lorenz, x, 0.5, 1e-12)
    h = 1e-6
    fd = np.column_stack([(flow_map(lorenz, x + h * e, 0.5, 1e-12) - flow_map(lorenz, x - h * e, 0.5, 1e-12)) / (2 * h)
                          for e in np.eye(3)])
    assert np.linalg.norm(fd - M) / np.linalg.norm(M) <= 1e-5


@given(st.floats(0.05, 2.5), st.floats(0.05, 2.5), st.integers(0, 20))
def test_semigroup(s, t, i):
    f = make_system("lorenz")
    x = attractor_points(f, 21)[i]
    a = flow_map(f, flow_map(f, x, s), t)
    b = flow_map(f, x, s + t)
    # the tolerance is local; global error grows with the Lyapunov exponent
    assert np.linalg.norm(a - b) <= 2e-10 * (1 + np.linalg.norm(b)) * math.exp(0.91 * (s + t)) * 10


def test_cocycle(lorenz):
    for x in attractor_points(lorenz, 3):
        s, t = 0.4, 0.7
        A = tangent_flow(lorenz, x, s + t)[1]
        B = tangent_flow(lorenz, flow_map(lorenz, x, s), t)[1] @ tangent_flow(lorenz, x, s)[1]
        assert np.linalg.norm(A - B) <= 1e-7 * np.linalg.norm(A)


def test_trajectory_invariants(lorenz):
    traj = simulate(lorenz, [1, 1, 1], 0.01, 500)
    assert traj.points.shape == (501, 3)
    assert np.all(traj.step_defects() <= 1e-10 * 10)
    assert all(lorenz.trapping_region.contains(p) for p in traj.points)


def test_time_tau_map_semigroup(lorenz):
    F = TimeTauMap(lorenz, 0.7, 1e-10)
    for x in attractor_points(lorenz, 100)[::10]:
        assert np.linalg.norm(F(F(x)) - flow_map(lorenz, x, 1.4, 1e-10)) <= 2e-10 * (1 + np.linalg.norm(x)) * 10


def test_iterate_and_apply_agree(lorenz):
    F = TimeTauMap(lorenz, 0.5)
    X = attractor_points(lorenz, 4)
    assert np.allclose(F.apply(X), np.array([F(x) for x in X]), atol=1e-12)
    it = F.iterate(X[0], 3)
    assert it.shape == (4, 3) and np.allclose(it[1], F(X[0]))


def test_escape_is_an_error():
    f = make_system("lorenz", rho=500.0)
    with pytest.raises(IntegrationError):
        simulate(f, [1.0, 1.0, 1.0], 0.01, 2000)
    with pytest.raises(InputError):
        flow_map(make_system("lorenz"), [100.0, 0, 0], 1.0)


def test_pseudo_orbit_property(lorenz):
    F = TimeTauMap(lorenz, 1.5)
    x = attractor_points(lorenz, 1)[0]
    po = generate_pseudo_orbit(F, x, 1e-4, 10, np.random.default_rng(1))
    assert po.n == 10
    assert np.all(po.gaps(F) <= 1e-4 * (1 + 1e-6))
    exact = generate_pseudo_orbit(F, x, 0.0, 5, np.random.default_rng(1))
    assert np.all(exact.gaps(F) == 0.0)


def test_shadowing_exact_orbit(lorenz):
    F = TimeTauMap(lorenz, 1.5)
    x = attractor_points(lorenz, 1)[0]
    po = generate_pseudo_orbit(F, x, 0.0, 5, np.random.default_rng(0))
    res = shadow_search(po, F)
    assert res.converged and res.max_deviation <= 1e-9


def test_shadowing_lorenz(lorenz):
    F = TimeTauMap(lorenz, 1.5, 1e-10)
    x = attractor_points(lorenz, 1)[0]
    po = generate_pseudo_orbit(F, x, 1e-6, 20, np.random.default_rng(2))
    res = shadow_search(po, F, c_est=10.0)
    assert res.converged
    assert res.max_deviation <= 10 * 20 * 1e-6
    dev, cont = res.recompute(po, F)
    assert abs(dev - res.max_deviation) <= 1e-10
    assert cont <= 1e-8


def test_shadowing_linear_contraction():
    # geometric-series bound delta / (1 - e^{a tau}) along the slowest contracting axis
    a, b, c, tau, delta = -0.5, -1.0, -2.0, 1.0, 1e-5
    f = make_system("linear3d", a=a, b=b, c=c)
    F = TimeTauMap(f, tau, 1e-12)
    po = generate_pseudo_orbit(F, [5.0, 5.0, 5.0], delta, 8, np.random.default_rng(5))
    res = shadow_search(po, F)
    assert res.converged
    assert res.max_deviation <= delta / (1 - math.exp(a * tau)) * math.sqrt(3)


def test_orbit_jacobian_liouville(lorenz):
    F = TimeTauMap(lorenz, 1.5)
    x = attractor_points(lorenz, 1)[0]
    for n in (1, 3, 5):
        assert abs(log_orbit_jacobian(F, x, n) / (DIV * n * 1.5) - 1) <= 1e-4


def test_orbit_jacobian_linear():
    f = make_system("linear3d")
    F = TimeTauMap(f, 0.5, 1e-12)
    for n in range(6):
        ref = math.exp((-1 - 2 + 0.5) * n * 0.5)
        assert abs(orbit_jacobian(F, [0.1, 0.2, 0.3], n) / ref - 1) <= 1e-10


def test_ball_volume():
    assert ball_volume(1, 2.0) == pytest.approx(4.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 1.0) == pytest.approx(4 * math.pi / 3)


def test_bowen_ball_linear_expanding():
    # one expanding axis: K_rho(x, n) shrinks like e^{-a n tau} along it
    a, tau, rho = 0.5, 0.5, 0.1
    f = make_system("linear3d", a=a, b=-1.0, c=-2.0)
    F = TimeTauMap(f, tau, 1e-10)
    est = bowen_ball_volumes(F, [0.0, 0.0, 0.0], 6, rho, 20000, np.random.default_rng(0), rho_tilde=rho)
    assert est[0].volume == pytest.approx(ball_volume(3, rho), rel=1e-12)
    vols = np.array([e.volume for e in est])
    assert np.all(np.diff(vols) <= 0)
    # for large n the set is a thin slab of the ball: width 2 rho e^{-a n tau} times the disc area
    n = 6
    slab = 2 * rho * math.exp(-a * n * tau) * math.pi * rho ** 2
    assert est[n].volume == pytest.approx(slab, rel=0.25)
