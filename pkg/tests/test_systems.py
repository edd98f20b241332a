import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srblab import InputError, list_systems, make_system
from srblab.systems import SystemConfig, divergence, eval_field, eval_jacobian, inward_fraction

NAMES = ["lorenz", "linear3d", "ou1d", "saddle_focus3d"]


def test_catalog_contents():
    d = {s["name"]: s for s in list_systems()}
    assert set(NAMES) <= set(d)
    assert d["lorenz"]["parameters"] == {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}
    assert d["lorenz"]["dimension"] == 3 and len(d["lorenz"]["singularities"]) == 3
    assert d["ou1d"]["dimension"] == 1
    assert d["ou1d"]["singularities"] == [[0.0]]
    assert d["linear3d"]["singularities"] == [[0.0, 0.0, 0.0]]


@pytest.mark.parametrize("name", NAMES)
def test_singularities_are_zeros(name):
    f = make_system(name)
    for s in f.singularities:
        assert np.linalg.norm(eval_field(f, s)) <= 1e-12


def test_lorenz_equilibrium_by_hand():
    # C+ = (sqrt(beta(rho-1)), sqrt(beta(rho-1)), rho-1)
    s, r, b = 10.0, 28.0, 8.0 / 3.0
    c = math.sqrt(b * (r - 1))
    f = make_system("lorenz")
    assert np.allclose(eval_field(f, [c, c, r - 1]), 0.0, atol=1e-12)
    assert any(np.allclose(p, [c, c, r - 1]) for p in f.singularities)


def test_lorenz_field_by_hand():
    f = make_system("lorenz")
    assert np.allclose(eval_field(f, [1.0, 2.0, 3.0]), [10.0, 1 * 25 - 2, 2 - 8.0])


def test_lorenz_jacobian_at_origin():
    f = make_system("lorenz", sigma=10.0, rho=28.0, beta=8.0 / 3.0)
    J = eval_jacobian(f, [0.0, 0.0, 0.0])
    assert np.allclose(J, [[-10, 10, 0], [28, -1, 0], [0, 0, -8.0 / 3.0]], atol=0)


@pytest.mark.parametrize("name", NAMES)
def test_jacobian_central_differences(name):
    f = make_system(name)
    rng = np.random.default_rng(3)
    h = 1e-5
    m = f.dimension
    b = f.trapping_region
    lo, hi = np.maximum(b.lo, -1.0), np.minimum(b.hi, 1.0)
    for x in lo + rng.random((100, m)) * (hi - lo):
        J = eval_jacobian(f, x)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            fd = (eval_field(f, x + e) - eval_field(f, x - e)) / (2 * h)
            assert np.linalg.norm(fd - J[:, i]) <= 10 * h * h


def test_lorenz_divergence_constant():
    f = make_system("lorenz")
    rng = np.random.default_rng(0)
    b = f.trapping_region
    X = b.lo + rng.random((100, 3)) * b.widths
    assert all(abs(divergence(f, x) + (10 + 1 + 8.0 / 3.0)) <= 1e-12 for x in X)


@given(st.floats(1.0, 20.0), st.floats(0.5, 50.0), st.floats(0.5, 5.0))
def test_lorenz_divergence_any_parameters(s, r, b):
    f = make_system("lorenz", sigma=s, rho=r, beta=b)
    assert abs(divergence(f, [1.0, -2.0, 3.0]) + s + 1 + b) <= 1e-12


def test_rejects_bad_input():
    with pytest.raises(InputError):
        make_system("nosuch")
    with pytest.raises(InputError):
        make_system("lorenz", kappa=1.0)
    with pytest.raises(InputError):
        eval_field(make_system("lorenz"), [1.0, 2.0])
    with pytest.raises(InputError):
        SystemConfig("lorenz", {}, integration_tolerance=0.0).build()
    with pytest.raises(InputError):
        SystemConfig("lorenz", {}, base_time_step=-1.0).build()


def test_trapping_flags():
    # the box is only genuinely trapping for a contracting linear field
    lin = make_system("linear3d", c=-0.5)
    assert inward_fraction(lin, 2000, np.random.default_rng(0)) >= 0.99
    assert not make_system("lorenz").trapping


def test_vector_field_is_immutable():
    f = make_system("lorenz")
    with pytest.raises(TypeError):
        f.parameters["rho"] = 1.0
