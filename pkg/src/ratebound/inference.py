"""Confidence sets, concentration sets and the probability bounds built on Omega."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import bisect_root
from .core import Dataset, fit
from .errors import BracketError, DomainError, MinorantError
from .rate import EvalSpec, legendre


@dataclass(frozen=True)
class ConfidenceSet:
    """E(z) = {theta : L(theta_tilde, theta) <= z}.

    1-D continuous models carry interval endpoints; discrete models carry the
    enumerated members. `predicate_only` is set when a branch was not monotone
    on the probe grid, in which case lo/hi are the probe extent, not endpoints.
    """

    theta_tilde: object
    z: float
    n: int
    predicate: Callable
    lo: Optional[float] = None
    hi: Optional[float] = None
    members: Optional[tuple] = None
    predicate_only: bool = False
    one_sided: tuple = ()
    grid: tuple = ()

    def contains(self, theta):
        return bool(self.predicate(theta))

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        if self.members is not None or self.predicate_only:
            buf.write("theta,member\n")
            pts = self.members if self.members is not None else self.grid
            for t in pts:
                buf.write("%.17g,%d\n" % (t, 1 if self.members is not None else self.contains(t)))
        else:
            buf.write("lo,hi,z,n\n")
            buf.write("%.17g,%.17g,%.17g,%d\n" % (self.lo, self.hi, self.z, self.n))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class ConcentrationSet:
    """A(r, theta0) = {theta : rate(theta) <= r}."""

    r: float
    theta0: object
    rate: Callable

    def contains(self, theta):
        return bool(self.rate(theta) <= self.r)


def concentration_set(model, theta0, r, n=1):
    """A(r, theta0) using the plug-in rate of the model (scaled by n for iid models)."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    t0 = model.check(theta0)
    k = n if model.iid else 1

    def rate(theta):
        theta = model.param(theta)
        if np.array_equal(np.asarray(theta), np.asarray(t0)):
            return 0.0
        return k * float(model.closed_rate(float(model.mu_profile(theta)), theta, t0))

    return ConcentrationSet(float(r), t0, rate)


def _branch(excess, start, bound, direction, probes=64):
    """Walk from start, doubling the step, until excess > 0 or the domain bound is hit.

    Returns (endpoint, one_sided, monotone, probe_points). Monotonicity of the
    excess is checked on an equispaced grid from start to the bracketing point.
    """
    step = max(abs(start), 1.0) * 1e-3
    inner = start
    for _ in range(2000):
        x = start + direction * step
        if (x - bound) * direction >= 0:
            x = bound - direction * 1e-12 * max(1.0, abs(bound))
            if excess(x) <= 0:
                return bound, True, True, (x,)
            break
        if excess(x) > 0:
            break
        inner = x
        step *= 2.0
    else:
        raise DomainError("confidence set appears unbounded on an infinite side")
    grid = np.linspace(start, x, probes + 1)
    vals = np.array([excess(t) for t in grid])
    monotone = bool(np.all(np.diff(vals) >= -1e-9 * (1.0 + np.abs(vals[1:]))))
    k = int(np.argmax(vals > 0))
    a, b = sorted((grid[k - 1], grid[k]))
    root = bisect_root(excess, a, b, tol=1e-12)
    return root, False, monotone, tuple(grid)


def confidence_set(model, data, z):
    if not z >= 0:
        raise DomainError("z must be nonnegative")
    y = data.observations if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    tt = fit(model, y)
    top = model.total_contrast(y, tt)

    def lr(theta):
        return top - model.total_contrast(y, model.param(theta))

    def pred(theta):
        return model.domain.contains(theta) and lr(theta) <= z

    n = y.shape[0]
    if model.domain.is_discrete:
        pts = model.domain.enumerate()
        if model.profile is not None:
            vals = top - np.asarray(model.profile(y), dtype=float)
        else:
            vals = np.array([lr(t) for t in pts])
        mem = tuple(int(t) for t, v in zip(pts, vals) if v <= z)
        return ConfidenceSet(tt, float(z), n, pred, min(mem), max(mem), mem)
    if model.param_dim != 1:
        return ConfidenceSet(tt, float(z), n, pred, predicate_only=True)

    def excess(x):
        return lr(x) - z

    lo_b, hi_b = model.domain.lower[0], model.domain.upper[0]
    if z == 0:
        return ConfidenceSet(tt, 0.0, n, pred, tt, tt)
    lo, lo_one, m1, g1 = _branch(excess, tt, lo_b, -1.0)
    hi, hi_one, m2, g2 = _branch(excess, tt, hi_b, 1.0)
    sides = tuple(s for s, f in (("lo", lo_one), ("hi", hi_one)) if f)
    grid = tuple(sorted(g1 + g2 + (tt,)))
    return ConfidenceSet(tt, float(z), n, pred, lo, hi, None, not (m1 and m2), sides, grid)


# ----------------------------------------------------------- probability bounds

def _clip(x):
    return min(1.0, max(0.0, x))


def noncoverage_bound(omega_rho0, rho, mu_star_lower, z):
    """Omega(rho, 0) exp{-rho mu_* z}, clipped to 1."""
    if not mu_star_lower > 0:
        raise DomainError("mu_* lower bound must be positive")
    if z < 0 or not 0 < rho < 1:
        raise DomainError("need z >= 0 and rho in (0, 1)")
    return _clip(omega_rho0 * math.exp(-rho * mu_star_lower * z))


def concentration_bound(omega_rho_s, rho, s, r):
    """Omega(rho, s) exp{-rho s r}, clipped to 1."""
    if not 0 < rho < 1 or not 0 < s < 1:
        raise DomainError("rho and s must lie in (0, 1)")
    if r < 0:
        raise DomainError("r must be nonnegative")
    return _clip(omega_rho_s * math.exp(-rho * s * r))


@dataclass(frozen=True)
class LocalNoncoverage:
    r: float
    bound: float
    simplified: float
    mu_star: float
    bracket: tuple = field(default=())


def noncoverage_bound_local(omega_rho0, omega_rho_s, rho, s, mu_star_of_r, z, r_max=1e12,
                            check_points=33):
    """Balance mu_*(r) z = s r, then bound non-coverage by the two-term sum.

    mu_*(r) must be nonincreasing; this is checked on the final bracket.
    """
    if not 0 < rho < 1 or not 0 < s < 1 or z < 0:
        raise DomainError("need rho, s in (0, 1) and z >= 0")

    def g(r):
        return mu_star_of_r(r) * z - s * r

    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        lo, hi = hi, hi * 2.0
        if hi > r_max:
            raise BracketError("balance relation has no root below r_max",
                               (0.0, r_max), (g(0.0), g(r_max)))
    grid = np.linspace(0.0, hi, check_points)
    mus = np.array([mu_star_of_r(r) for r in grid])
    if np.any(mus <= 0):
        raise DomainError("mu_*(r) must be positive on the bracket")
    if np.any(np.diff(mus) > 1e-12 * np.abs(mus[1:])):
        raise BracketError("mu_*(r) is not nonincreasing on the bracket", (0.0, hi),
                           tuple(mus))
    if z == 0:
        r = 0.0
    else:
        r = bisect_root(g, lo, hi, tol=1e-14)
    m = mu_star_of_r(r)
    two = omega_rho0 * math.exp(-rho * m * z) + omega_rho_s * math.exp(-rho * s * r)
    simple = 2.0 * omega_rho_s * math.exp(-rho * m * z)
    return LocalNoncoverage(r, _clip(two), _clip(simple), m, (0.0, hi))


def quadratic_risk_bound(omega_rho_s, rho, s, r, V0, z, rate=None, theta0=None, grid=()):
    """Omega(rho, s) exp{-rho s min(z, r)}, clipped to 1.

    When `rate` and a grid are given, the minorant rate(theta) >= (theta-theta0)' V0 (theta-theta0)
    is checked at every grid point of A(r, theta0); the first failure raises MinorantError.
    """
    if not 0 < rho < 1 or not 0 < s < 1 or r < 0 or z < 0:
        raise DomainError("need rho, s in (0, 1) and r, z >= 0")
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    if np.min(np.linalg.eigvalsh(0.5 * (V0 + V0.T))) <= 0:
        raise DomainError("V0 must be positive definite")
    if rate is not None:
        c = np.atleast_1d(np.asarray(theta0, dtype=float))
        for t in grid:
            m = float(rate(t))
            if m > r:
                continue
            u = np.atleast_1d(np.asarray(t, dtype=float)) - c
            q = float(u @ V0 @ u)
            if m < q:
                raise MinorantError(f"rate {m:.6g} below quadratic {q:.6g} at theta = {t!r}", t)
    return _clip(omega_rho_s * math.exp(-rho * s * min(z, r)))


def mu_lower_envelope(model, theta0, r, grid, n=1, spec=None):
    """min of mu*(theta) over grid points in A(r, theta0) under the Legendre rate.

    Returns (value, number of grid points used). The grid fixes the resolution of the infimum.
    """
    spec = spec or EvalSpec(n=n)
    best, used = math.inf, 0
    for t in grid:
        pt = legendre(model, t, theta0, spec)
        if pt.rate <= r:
            best = min(best, pt.mu)
            used += 1
    if used == 0:
        raise DomainError("no grid point lies in A(r, theta0)")
    return best, used
