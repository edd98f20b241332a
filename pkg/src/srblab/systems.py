"""Catalog of vector fields with closed-form Jacobians and singularities.

Each entry pairs a pair of numba kernels ``rhs(x, p, out)`` and
``jac(x, p, out)`` (``p`` is the packed parameter vector) with the metadata
the rest of the package needs: a box the system lives on and the exact
zeros of the field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numba as nb
import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_0, hi_0] x ... x [lo_{m-1}, hi_{m-1}]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box bounds must be 1-d arrays of equal length")
        if np.any(hi <= lo):
            raise InputError("box must have hi > lo on every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self):
        return self.lo.size

    @property
    def widths(self):
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def sample_boundary(self, n, rng):
        """Uniform samples on the surface of the box plus inward unit normals."""
        m = self.dimension
        w = self.widths
        # face areas: product of the other widths
        areas = np.array([np.prod(np.delete(w, i)) for i in range(m)]) if m > 1 else np.ones(1)
        probs = np.repeat(areas, 2) / (2 * areas.sum())
        faces = rng.choice(2 * m, size=n, p=probs)
        pts = self.lo + rng.random((n, m)) * w
        normals = np.zeros((n, m))
        axis = faces // 2
        upper = faces % 2 == 1
        idx = np.arange(n)
        pts[idx, axis] = np.where(upper, self.hi[axis], self.lo[axis])
        normals[idx, axis] = np.where(upper, -1.0, 1.0)
        return pts, normals


@dataclass(frozen=True)
class VectorField:
    """A smooth autonomous field on R^m together with its catalog metadata.

    ``trapping`` records whether ``trapping_region`` is genuinely entered
    transversally by the flow. When it is False the box only bounds the
    domain on which orbits are integrated (escape is reported as an error).
    """

    name: str
    dimension: int
    parameters: Mapping[str, float]
    trapping_region: Box
    singularities: tuple
    rhs: Callable = field(repr=False)
    jac: Callable = field(repr=False)
    param_vector: np.ndarray = field(repr=False)
    trapping: bool = True
    note: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise InputError("dimension must be positive")
        if self.trapping_region.dimension != self.dimension:
            raise InputError("trapping region dimension does not match the field")
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))

    def __call__(self, x):
        return eval_field(self, x)

    def distance_to_singularities(self, x):
        """Euclidean distance from each row of ``x`` to the nearest singularity."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.singularities:
            return np.full(x.shape[0], np.inf)
        s = np.array(self.singularities)
        d = np.linalg.norm(x[:, None, :] - s[None, :, :], axis=-1)
        return d.min(axis=1)

    def with_jacobian(self, jac):
        """Copy of this field with the Jacobian kernel replaced (test hook)."""
        return VectorField(
            self.name, self.dimension, dict(self.parameters), self.trapping_region,
            self.singularities, self.rhs, jac, self.param_vector, self.trapping, self.note,
        )


@dataclass(frozen=True)
class SystemConfig:
    field_name: str
    parameter_overrides: Mapping[str, float] = field(default_factory=dict)
    integration_tolerance: float = 1e-10
    base_time_step: float = 0.01

    def __post_init__(self):
        if self.field_name not in _CATALOG:
            raise InputError(f"unknown system {self.field_name!r}; known: {sorted(_CATALOG)}")
        if not self.integration_tolerance > 0:
            raise InputError("integration_tolerance must be positive")
        if not self.base_time_step > 0:
            raise InputError("base_time_step must be positive")
        unknown = set(self.parameter_overrides) - set(_CATALOG[self.field_name].defaults)
        if unknown:
            raise InputError(f"unknown parameters for {self.field_name}: {sorted(unknown)}")

    def build(self):
        return make_system(self.field_name, **self.parameter_overrides)


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True)
def _lorenz_rhs(x, p, out):
    out[0] = p[0] * (x[1] - x[0])
    out[1] = x[0] * (p[1] - x[2]) - x[1]
    out[2] = x[0] * x[1] - p[2] * x[2]


@nb.njit(cache=True)
def _lorenz_jac(x, p, out):
    out[0, 0] = -p[0]
    out[0, 1] = p[0]
    out[0, 2] = 0.0
    out[1, 0] = p[1] - x[2]
    out[1, 1] = -1.0
    out[1, 2] = -x[0]
    out[2, 0] = x[1]
    out[2, 1] = x[0]
    out[2, 2] = -p[2]


@nb.njit(cache=True)
def _diag_rhs(x, p, out):
    for i in range(x.size):
        out[i] = p[i] * x[i]


@nb.njit(cache=True)
def _diag_jac(x, p, out):
    n = x.size
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0
        out[i, i] = p[i]


@nb.njit(cache=True)
def _ou_rhs(x, p, out):
    out[0] = -p[0] * x[0]


@nb.njit(cache=True)
def _ou_jac(x, p, out):
    out[0, 0] = -p[0]


# p = (stable rate, real part, imaginary part)
@nb.njit(cache=True)
def _saddle_focus_rhs(x, p, out):
    out[0] = p[0] * x[0]
    out[1] = p[1] * x[1] - p[2] * x[2]
    out[2] = p[2] * x[1] + p[1] * x[2]


@nb.njit(cache=True)
def _saddle_focus_jac(x, p, out):
    out[0, 0] = p[0]
    out[0, 1] = 0.0
    out[0, 2] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = p[1]
    out[1, 2] = -p[2]
    out[2, 0] = 0.0
    out[2, 1] = p[2]
    out[2, 2] = p[1]


# ---------------------------------------------------------------- catalog


@dataclass(frozen=True)
class _Entry:
    dimension: int
    defaults: dict
    rhs: Callable
    jac: Callable
    box: Callable
    singularities: Callable
    trapping: Callable
    description: str


def _lorenz_sing(p):
    sigma, rho, beta = p["sigma"], p["rho"], p["beta"]
    pts = [np.zeros(3)]
    if rho > 1:
        r = np.sqrt(beta * (rho - 1.0))
        pts.append(np.array([r, r, rho - 1.0]))
        pts.append(np.array([-r, -r, rho - 1.0]))
    return pts


_CATALOG = {
    "lorenz": _Entry(
        3, {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
        _lorenz_rhs, _lorenz_jac,
        lambda p: Box([-30.0, -30.0, -5.0], [30.0, 30.0, 60.0]),
        _lorenz_sing,
        lambda p: False,
        "Lorenz 1963 convection model; box is an integration domain containing the attractor",
    ),
    "linear3d": _Entry(
        3, {"a": -1.0, "b": -2.0, "c": 0.5},
        _diag_rhs, _diag_jac,
        lambda p: Box([-1e3] * 3, [1e3] * 3),
        lambda p: [np.zeros(3)],
        lambda p: all(v < 0 for v in p.values()),
        "diagonal linear field dx/dt = diag(a, b, c) x",
    ),
    "ou1d": _Entry(
        1, {"a": 1.0},
        _ou_rhs, _ou_jac,
        lambda p: Box([-2.0], [2.0]),
        lambda p: [np.zeros(1)],
        lambda p: p["a"] > 0,
        "linear drift dx/dt = -a x (Ornstein-Uhlenbeck skeleton)",
    ),
    "saddle_focus3d": _Entry(
        3, {"s": -2.0, "re": 0.3, "im": 1.0},
        _saddle_focus_rhs, _saddle_focus_jac,
        lambda p: Box([-1e3] * 3, [1e3] * 3),
        lambda p: [np.zeros(3)],
        lambda p: False,
        "linear saddle-focus with eigenvalues s and re +/- i im",
    ),
}


def make_system(name, **overrides):
    """Instantiate a catalog field by name, overriding default parameters."""
    try:
        entry = _CATALOG[name]
    except KeyError:
        raise InputError(f"unknown system {name!r}; known: {sorted(_CATALOG)}") from None
    unknown = set(overrides) - set(entry.defaults)
    if unknown:
        raise InputError(f"unknown parameters for {name}: {sorted(unknown)}")
    params = {k: float(overrides.get(k, v)) for k, v in entry.defaults.items()}
    pvec = np.array(list(params.values()), dtype=float)
    pvec.flags.writeable = False
    sing = tuple(np.asarray(s, dtype=float) for s in entry.singularities(params))
    return VectorField(
        name=name,
        dimension=entry.dimension,
        parameters=params,
        trapping_region=entry.box(params),
        singularities=sing,
        rhs=entry.rhs,
        jac=entry.jac,
        param_vector=pvec,
        trapping=entry.trapping(params),
        note=entry.description,
    )


def list_systems():
    """Descriptors for every catalog entry (default parameters)."""
    out = []
    for name, entry in _CATALOG.items():
        f = make_system(name)
        out.append({
            "name": name,
            "dimension": entry.dimension,
            "parameters": dict(entry.defaults),
            "singularities": [s.tolist() for s in f.singularities],
            "trapping_region": (f.trapping_region.lo.tolist(), f.trapping_region.hi.tolist()),
            "description": entry.description,
        })
    return out


def _check_point(f, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dimension,):
        raise InputError(f"{f.name} expects a point of dimension {f.dimension}, got shape {x.shape}")
    return x


def eval_field(f, x):
    x = _check_point(f, x)
    out = np.empty(f.dimension)
    f.rhs(x, f.param_vector, out)
    return out


def eval_jacobian(f, x):
    x = _check_point(f, x)
    out = np.empty((f.dimension, f.dimension))
    f.jac(x, f.param_vector, out)
    return out


def divergence(f, x):
    return float(np.trace(eval_jacobian(f, x)))


def inward_fraction(f, n=10_000, rng=None):
    """Fraction of uniform boundary samples where the field points into the box."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts, normals = f.trapping_region.sample_boundary(n, rng)
    dots = np.array([eval_field(f, p) @ nrm for p, nrm in zip(pts, normals)])
    return float(np.mean(dots > 0))
