"""Contrast models, parameter domains, datasets and the generic fitting entry point.

A contrast model bundles the log-contrast L(theta) of a dataset with a sampler
for data under a given truth and whatever closed forms the model knows about.
The estimator is theta_tilde = argmax L(theta). Model callables take the raw
observation array; the public functions here accept either a Dataset or an
array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import golden_max
from .errors import DomainError, FitError


@dataclass(frozen=True)
class ParameterDomain:
    """Box (open at finite ends unless closed=True), integer range, or explicit finite set."""

    kind: str
    lower: tuple = ()
    upper: tuple = ()
    points: tuple = ()
    closed: bool = False

    def __post_init__(self):
        if self.kind == "box":
            if len(self.lower) != len(self.upper) or not self.lower:
                raise DomainError("box bounds must be nonempty and of equal length")
            if any(not lo < hi for lo, hi in zip(self.lower, self.upper)):
                raise DomainError("box bounds need lower < upper coordinatewise")
        elif self.kind == "discrete_range":
            if len(self.points) != 2 or self.points[0] > self.points[1]:
                raise DomainError("discrete_range needs (first, last) with first <= last")
        elif self.kind == "explicit_finite_set":
            if not self.points:
                raise DomainError("explicit set must be nonempty")
        else:
            raise DomainError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def box(cls, lower, upper, closed=False):
        lower = tuple(float(x) for x in np.atleast_1d(lower))
        upper = tuple(float(x) for x in np.atleast_1d(upper))
        return cls("box", lower, upper, (), closed)

    @classmethod
    def discrete_range(cls, first, last):
        return cls("discrete_range", points=(int(first), int(last)))

    @classmethod
    def finite_set(cls, points):
        return cls("explicit_finite_set", points=tuple(points))

    @property
    def is_discrete(self):
        return self.kind != "box"

    @property
    def dim(self):
        if self.kind == "box":
            return len(self.lower)
        if self.kind == "discrete_range":
            return 1
        return int(np.size(self.points[0]))

    def enumerate(self):
        if self.kind == "discrete_range":
            return np.arange(self.points[0], self.points[1] + 1)
        if self.kind == "explicit_finite_set":
            return np.asarray(self.points)
        raise DomainError("cannot enumerate a box")

    def contains(self, theta):
        if self.kind == "discrete_range":
            t = np.asarray(theta)
            if t.size != 1 or t.reshape(()) != np.round(t.reshape(())):
                return False
            t = int(t.reshape(()))
            return self.points[0] <= t <= self.points[1]
        if self.kind == "explicit_finite_set":
            t = np.asarray(theta)
            return any(np.array_equal(t, np.asarray(q)) for q in self.points)
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        if t.size != len(self.lower) or not np.all(np.isfinite(t)):
            return False
        lo, hi = np.array(self.lower), np.array(self.upper)
        if self.closed:
            return bool(np.all(t >= lo) and np.all(t <= hi))
        return bool(np.all(t > lo) and np.all(t < hi))


@dataclass(frozen=True)
class Dataset:
    observations: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float)
        if y.ndim == 0:
            y = y.reshape(1)
        if y.shape[0] < 1:
            raise DomainError("dataset needs at least one observation")
        if not np.all(np.isfinite(y)):
            raise DomainError("dataset entries must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)

    @property
    def n(self):
        return self.observations.shape[0]

    @classmethod
    def read_csv(cls, path):
        y = np.loadtxt(path, delimiter=",", ndmin=2)
        if y.shape[1] == 1:
            y = y[:, 0]
        return cls(y)

    def write_csv(self, path):
        y = self.observations
        with open(path, "w", newline="\n") as fh:
            for row in (y if y.ndim == 2 else y[:, None]):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


@dataclass(frozen=True)
class ContrastModel:
    """L(theta) plus a sampler and optional closed forms.

    closed_rate(mu, theta, theta0) gives the rate M(mu, theta, theta0) = -log E exp{mu L(theta, theta0)};
    for iid models it is the per-observation value and callers multiply by n.
    obs_law(theta0) / increment_law(theta, theta0) return objects with `logpdf`
    and `support()` used by the quadrature route (the law of one observation, or
    the law of L(theta, theta0) itself).
    """

    name: str
    param_dim: int
    domain: ParameterDomain
    total_contrast: Callable
    sampler: Callable
    mu_profile: Callable
    per_obs_contrast: Optional[Callable] = None
    closed_rate: Optional[Callable] = None
    rate_kind: str = "closed"
    gradient: Optional[Callable] = None
    per_obs_gradient: Optional[Callable] = None
    closed_fit: Optional[Callable] = None
    profile: Optional[Callable] = None
    obs_law: Optional[Callable] = None
    increment_law: Optional[Callable] = None
    kinks: Optional[Callable] = None
    iid: bool = False
    fixed_n: Optional[int] = None
    extras: dict = field(default_factory=dict)

    def param(self, theta):
        """Canonical parameter value: float (1-D box), int (integer range), array otherwise."""
        if self.domain.kind == "discrete_range":
            return int(np.asarray(theta).reshape(()))
        if self.param_dim == 1 and self.domain.kind == "box":
            return float(np.asarray(theta, dtype=float).reshape(()))
        return np.asarray(theta, dtype=float).reshape(self.param_dim)

    def check(self, theta):
        if not self.domain.contains(theta):
            raise DomainError(f"{self.name}: parameter {theta!r} outside the domain")
        return self.param(theta)


def _obs(data):
    return data.observations if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def contrast_diff(model, data, theta, theta_prime):
    """L(theta) - L(theta_prime) on the given data."""
    y = _obs(data)
    a, b = model.check(theta), model.check(theta_prime)
    if np.array_equal(np.asarray(a), np.asarray(b)):
        return 0.0
    return float(model.total_contrast(y, a) - model.total_contrast(y, b))


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-9
    max_iter: int = 200
    grid_size: int = 256
    use_closed: bool = True
    max_sweeps: int = 200


def fit(model, data, opts=FitOptions()):
    y = _obs(data)
    if y.shape[0] < 1:
        raise DomainError("empty dataset")
    if opts.use_closed and model.closed_fit is not None:
        return model.param(model.closed_fit(y))
    if model.domain.is_discrete:
        return _fit_scan(model, y)
    if model.param_dim == 1:
        return _fit_1d(lambda t: model.total_contrast(y, t), model.domain.lower[0],
                       model.domain.upper[0], opts, center=None)
    return _fit_coordinate(model, y, opts)


def _fit_scan(model, y):
    pts = model.domain.enumerate()
    if model.profile is not None:
        vals = np.asarray(model.profile(y), dtype=float)
    else:
        vals = np.array([model.total_contrast(y, model.param(t)) for t in pts])
    return model.param(pts[int(np.argmax(vals))])


def _safe(f):
    def g(t):
        v = f(t)
        return v if math.isfinite(v) else -math.inf
    return g


def _fit_1d(f, lo, hi, opts, center=None):
    """Grid bracket then golden section. Infinite ends are handled by doubling a window."""
    f = _safe(f)
    c = 0.0 if center is None else float(center)
    if math.isfinite(lo) and math.isfinite(hi):
        wlo, whi = lo, hi
    else:
        if math.isfinite(lo):
            c = max(c, lo)
        if math.isfinite(hi):
            c = min(c, hi)
        wlo = lo if math.isfinite(lo) else c - 1.0
        whi = hi if math.isfinite(hi) else c + 1.0
    m = opts.grid_size
    for _ in range(64):
        grid = wlo + (whi - wlo) * (np.arange(m) + 0.5) / m
        vals = np.array([f(t) for t in grid])
        j = int(np.argmax(vals))
        if not math.isfinite(vals[j]):
            raise FitError("contrast is -inf on the whole probe grid", grid, vals)
        grow_lo = j == 0 and not math.isfinite(lo)
        grow_hi = j == m - 1 and not math.isfinite(hi)
        if not (grow_lo or grow_hi):
            break
        width = whi - wlo
        if grow_lo:
            wlo -= width
        if grow_hi:
            whi += width
    else:
        raise FitError("could not bracket a maximum: contrast keeps increasing", grid, vals)
    a = grid[j - 1] if j > 0 else wlo
    b = grid[j + 1] if j < m - 1 else whi
    x, fx = golden_max(f, a, b, tol=opts.tol, max_iter=opts.max_iter)
    if vals[j] > fx:
        return float(grid[j])
    return float(x)


def _fit_coordinate(model, y, opts):
    p = model.param_dim
    lo = np.array(model.domain.lower)
    hi = np.array(model.domain.upper)
    theta = np.clip(np.zeros(p), np.where(np.isfinite(lo), lo + 1e-6, -np.inf),
                    np.where(np.isfinite(hi), hi - 1e-6, np.inf))
    best = model.total_contrast(y, theta)
    for _ in range(opts.max_sweeps):
        old = theta.copy()
        for k in range(p):
            def fk(t, k=k):
                z = theta.copy()
                z[k] = t
                return model.total_contrast(y, z)
            theta[k] = _fit_1d(fk, lo[k], hi[k], opts, center=theta[k])
        val = model.total_contrast(y, theta)
        if np.max(np.abs(theta - old)) <= opts.tol and val >= best - 1e-15 * abs(best):
            break
        best = val
    return model.param(theta)
