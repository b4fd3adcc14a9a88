"""Concrete contrast models: Gaussian linear regression, exponential scale,
least absolute deviation (median) and the change-point location model.

Each constructor returns a ContrastModel. Helpers next to them expose the
closed forms the models admit (rates, divergences, local balls).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from ._numerics import quad
from .core import ContrastModel, ParameterDomain
from .errors import DomainError
from .rate import RatePoint


# ---------------------------------------------------------------- Gaussian

@dataclass(frozen=True)
class GaussianLinearSpec:
    X: np.ndarray
    sigma: float = 1.0
    basis: np.ndarray = field(init=False, repr=False)
    rank: int = field(init=False)
    pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] == 1 and np.ndim(self.X) == 1:
            X = X.T
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        u, sv, _ = np.linalg.svd(X, full_matrices=False)
        tol = sv.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
        k = int(np.sum(sv > tol))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "basis", u[:, :k])
        object.__setattr__(self, "rank", k)
        object.__setattr__(self, "pinv", np.linalg.pinv(X))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def _gauss_quad(spec, theta, theta0):
    d = spec.X @ (np.atleast_1d(theta) - np.atleast_1d(theta0))
    return float(d @ d) / spec.sigma ** 2


def gauss_rate(spec, theta, theta0):
    """mu* = 1/2 and M* = |X(theta - theta0)|^2 / (8 sigma^2)."""
    return RatePoint(theta, 0.5, _gauss_quad(spec, theta, theta0) / 8.0, "closed")


def gauss_sup_value(spec, s, eps):
    """Pathwise sup over theta of mu* L(theta, theta0) + s M*(theta, theta0) for noise eps."""
    if not s < 1:
        raise DomainError("s must be < 1")
    proj = spec.basis.T @ np.asarray(eps, dtype=float)
    return float(proj @ proj) / (4.0 - 2.0 * s)


def gauss_sup_moment(s, k, rho=1.0):
    """E exp{rho * sup} = ((2 - s)/(2 - s - rho))^{k/2}; rho = 1 gives ((2-s)/(1-s))^{k/2}."""
    return ((2.0 - s) / (2.0 - s - rho)) ** (k / 2.0)


def gauss_sup_moment_quadrature(s, k, rho=1.0):
    """Same moment by integrating exp{rho x/(4-2s)} against the chi-square(k) density.

    Substituting x = t^2 removes the x^{k/2-1} singularity at the origin for k = 1.
    """
    c = rho / (4.0 - 2.0 * s)
    lognorm = -(k / 2.0) * math.log(2.0) - math.lgamma(k / 2.0)

    def f(t):
        if t == 0.0:
            return 2.0 * math.exp(lognorm) if k == 1 else 0.0
        x = t * t
        return 2.0 * t * math.exp(lognorm + (k / 2.0 - 1.0) * math.log(x) - x / 2.0 + c * x)

    peak = math.sqrt(max(k - 2.0, 0.0) / (1.0 - 2.0 * c) + 1.0)
    a, _ = quad(f, 0.0, peak, rtol=1e-12)
    b, _ = quad(f, peak, math.inf, rtol=1e-12)
    return a + b


def gaussian_linear_model(spec):
    X, sig2 = spec.X, spec.sigma ** 2
    p = spec.p

    def total(y, theta):
        r = y - X @ np.atleast_1d(theta)
        return -float(r @ r) / (2.0 * sig2)

    def sampler(theta, n, rng):
        return X @ np.atleast_1d(theta) + spec.sigma * rng.standard_normal(spec.n)

    def closed_rate(mu, theta, theta0):
        q = _gauss_quad(spec, theta, theta0)
        return mu * q / 2.0 - mu * mu * q / 2.0

    def law(theta, theta0):
        q = _gauss_quad(spec, theta, theta0)
        return stats.norm(loc=-q / 2.0, scale=math.sqrt(q))

    return ContrastModel(
        name="gaussian_linear",
        param_dim=p,
        domain=ParameterDomain.box([-math.inf] * p, [math.inf] * p),
        total_contrast=total,
        sampler=sampler,
        mu_profile=lambda theta: 0.5,
        closed_rate=closed_rate,
        gradient=lambda y, theta: X.T @ (y - X @ np.atleast_1d(theta)) / sig2,
        closed_fit=lambda y: spec.pinv @ y,
        increment_law=law,
        fixed_n=spec.n,
        extras={"spec": spec},
    )


def gaussian_contrast_model(drift, variance, theta0=0.0, name="gaussian_contrast"):
    """Abstract 1-D model whose increment L(theta, theta0) is N(-drift, variance).

    The data is a single standard normal draw xi and L(theta) = -drift + sqrt(variance) xi,
    both evaluated against the fixed reference theta0.
    """
    theta0 = float(theta0)

    def total(y, theta):
        return -drift(theta, theta0) + math.sqrt(variance(theta, theta0)) * float(y[0])

    def closed_rate(mu, theta, t0):
        return mu * drift(theta, t0) - mu * mu * variance(theta, t0) / 2.0

    return ContrastModel(
        name=name,
        param_dim=1,
        domain=ParameterDomain.box([-math.inf], [math.inf]),
        total_contrast=total,
        sampler=lambda theta, n, rng: rng.standard_normal(1),
        mu_profile=lambda theta: 0.5,
        closed_rate=closed_rate,
        increment_law=lambda theta, t0: stats.norm(loc=-drift(theta, t0),
                                                    scale=math.sqrt(variance(theta, t0))),
        fixed_n=1,
    )


# ------------------------------------------------------------- exponential

def exp_kl(theta, theta_prime):
    """Kullback-Leibler divergence between exponential laws with rates theta and theta_prime."""
    r = theta_prime / theta
    return r - 1.0 - math.log(r)


def exp_h1(delta):
    """log E exp{-delta (theta0 Y - 1)} = delta - log(1 + delta)."""
    if delta <= -1.0:
        return math.inf
    return delta - math.log1p(delta)


def exp_h(delta, gamma=1.0):
    """Standardized gradient log-MGF h(delta, gamma) of the exponential model."""
    return exp_h1(2.0 * gamma * delta)


def exp_rate(mu, u):
    """Per-observation rate log(1 + mu u) - mu log(1 + u); -inf outside 1 + mu u > 0."""
    a = 1.0 + mu * u
    if a <= 0.0:
        return -math.inf
    return math.log1p(mu * u) - mu * math.log1p(u)


def exp_plugin_rate(u):
    """exp_rate at mu = 1/2, written as (1/2) log(1 + u^2 / (4 (1 + u)))."""
    return 0.5 * math.log1p(u * u / (4.0 * (1.0 + u)))


def exp_mu_star(u):
    """Maximizer of mu -> exp_rate(mu, u): (u - log(1+u)) / (u log(1+u))."""
    if u == 0.0:
        return 0.5
    l1 = math.log1p(u)
    return (u - l1) / (u * l1)


def exp_model():
    def per_obs(y, theta):
        return math.log(theta) - theta * np.asarray(y, dtype=float)

    def total(y, theta):
        if not theta > 0:
            raise DomainError("exponential model needs theta > 0")
        return y.shape[0] * math.log(theta) - theta * float(np.sum(y))

    def closed_rate(mu, theta, theta0):
        return exp_rate(mu, theta / theta0 - 1.0)

    return ContrastModel(
        name="exponential",
        param_dim=1,
        domain=ParameterDomain.box([0.0], [math.inf]),
        total_contrast=total,
        per_obs_contrast=per_obs,
        sampler=lambda theta, n, rng: rng.exponential(1.0 / theta, n),
        mu_profile=lambda theta: 0.5,
        closed_rate=closed_rate,
        gradient=lambda y, theta: np.array([y.shape[0] / theta - float(np.sum(y))]),
        per_obs_gradient=lambda y, theta: 1.0 / theta - np.asarray(y, dtype=float),
        closed_fit=lambda y: y.shape[0] / float(np.sum(y)),
        obs_law=lambda theta0: stats.expon(scale=1.0 / theta0),
        iid=True,
    )


@dataclass(frozen=True)
class ExpRateLower:
    c1: float
    c2: float
    quadratic_ok: Optional[bool]
    log_ok: Optional[bool]
    quadratic_ratio: Optional[float]
    log_ratio: Optional[float]


_EXP_C = {}


def _exp_constants():
    if not _EXP_C:
        q = np.concatenate([np.linspace(-0.999, -1e-4, 4000), np.linspace(1e-4, 1.0, 4000)])
        r1 = np.array([exp_plugin_rate(u) / (u * u) for u in q])
        g = np.geomspace(1.0, 1e8, 4000)
        r2 = np.array([exp_plugin_rate(u) / math.log1p(u) for u in g])
        _EXP_C["c1"] = float(r1.min())
        _EXP_C["c2"] = float(r2.min())
    return _EXP_C["c1"], _EXP_C["c2"]


def exp_rate_lower(u):
    """Check m(u) >= c1 u^2 (|u| <= 1) and m(u) >= c2 log(1+u) (u >= 1), m the plug-in rate.

    c1, c2 are the grid infima of the two ratios; checks that do not apply return None.
    At u = 0 the quadratic ratio is its limit m''(0)/2 = 1/8.
    """
    if not u > -1.0:
        raise DomainError("u must exceed -1")
    c1, c2 = _exp_constants()
    m = exp_plugin_rate(u)
    qr = lr = qok = lok = None
    if abs(u) <= 1.0:
        # m/u^2 = (log1p(x)/(2x)) / (4(1+u)) with x = u^2/(4(1+u)); stable as u -> 0
        x = u * u / (4.0 * (1.0 + u))
        qr = (0.5 if x == 0.0 else 0.5 * math.log1p(x) / x) / (4.0 * (1.0 + u))
        qok = qr >= c1 * (1.0 - 1e-12)
    if u >= 1.0:
        lr = m / math.log1p(u)
        lok = lr >= c2 * (1.0 - 1e-12)
    return ExpRateLower(c1, c2, qok, lok, qr, lr)


# --------------------------------------------------------------------- LAD

def _central_diff(f, y, h=1e-6):
    y = np.asarray(y, dtype=float)
    step = h * np.maximum(1.0, y)
    lo = np.maximum(y - step, 0.5 * step)
    return (f(y + step) - f(lo)) / (y + step - lo)


@dataclass(frozen=True)
class LadSpec:
    """Symmetric noise with P(Y > y) = exp{-2 y tail(y)} / 2 for y >= 0.

    `tail` must be positive and nonincreasing with y * tail(y) nondecreasing.
    `inverse` (optional) solves 2 y tail(y) = e for y, vectorized.
    """

    tail: Callable
    dtail: Optional[Callable] = None
    inverse: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        grid = np.geomspace(1e-4, 1e4, 801)
        lam = np.asarray(self.lam(grid))
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            raise DomainError("tail profile must be positive and finite")
        if np.any(np.diff(lam) > 1e-12 * lam[:-1]):
            raise DomainError("tail profile must be nonincreasing")
        dl = self.dlam(grid)
        if np.any(dl > 1e-6 * np.maximum(lam, 1.0)):
            raise DomainError("tail profile derivative is positive somewhere on the probe grid")
        g = grid * lam
        if np.any(np.diff(g) < -1e-12 * g[1:]):
            raise DomainError("y * tail(y) must be nondecreasing")

    @classmethod
    def laplace(cls):
        return cls(lambda y: np.full(np.shape(y), 0.5) if np.ndim(y) else 0.5,
                   dtail=lambda y: np.zeros(np.shape(y)) if np.ndim(y) else 0.0,
                   inverse=lambda e: e, name="laplace")

    @classmethod
    def pareto(cls):
        """tail(y) = log(1+y)/(2y): P(|Y| > y) = 1/(1+y), no first moment."""
        def lam(y):
            y = np.asarray(y, dtype=float)
            safe = np.where(y > 0, y, 1.0)
            out = np.where(y > 0, np.log1p(safe) / (2.0 * safe), 0.5)
            return out if out.ndim else float(out)

        def dlam(y):
            y = np.asarray(y, dtype=float)
            safe = np.where(y > 0, y, 1.0)
            out = np.where(y > 0, (safe / (1 + safe) - np.log1p(safe)) / (2 * safe ** 2), -0.25)
            return out if out.ndim else float(out)

        return cls(lam, dtail=dlam, inverse=lambda e: np.expm1(e), name="pareto")

    def lam(self, y):
        return self.tail(y)

    def dlam(self, y):
        if self.dtail is not None:
            return np.asarray(self.dtail(y), dtype=float)
        return _central_diff(lambda z: np.asarray(self.tail(z), dtype=float), y)

    def g(self, y):
        """2 y tail(y), the cumulative hazard of |Y|."""
        y = np.asarray(y, dtype=float)
        return 2.0 * y * np.asarray(self.tail(y), dtype=float)

    def dg(self, y):
        y = np.asarray(y, dtype=float)
        return 2.0 * (np.asarray(self.tail(y), dtype=float) + y * self.dlam(y))

    def solve(self, e):
        """|Y| from an Exp(1) draw e by inverting the cumulative hazard."""
        e = np.asarray(e, dtype=float)
        if self.inverse is not None:
            return np.asarray(self.inverse(e), dtype=float)
        lo = np.zeros_like(e)
        hi = np.ones_like(e)
        for _ in range(200):
            short = self.g(hi) < e
            if not short.any():
                break
            hi = np.where(short, 2.0 * hi, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.g(mid) < e
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


class LadLaw:
    """Density of theta0 + Y for the symmetric LadSpec noise."""

    def __init__(self, spec, theta0):
        self.spec, self.theta0 = spec, float(theta0)

    def logpdf(self, x):
        a = np.abs(np.asarray(x, dtype=float) - self.theta0)
        with np.errstate(divide="ignore"):
            return math.log(0.5) + np.log(self.spec.dg(a)) - self.spec.g(a)

    def support(self):
        return (-math.inf, math.inf)

    def anchors(self):
        return [self.theta0 - 4.0, self.theta0, self.theta0 + 4.0]


def lad_rate(spec, mu, theta):
    """-log E exp{mu L(theta, 0)} for one observation, via the integration-by-parts identity

    E exp{mu l} = e^{-mu t} (1 + mu I),  I = int_0^t exp{2y[mu - tail(y)]} dy,  t = |theta|.
    The integrand is scaled by exp{-2 t mu} so it stays in [0, 1].
    """
    t = abs(float(theta))
    if t == 0.0:
        return 0.0

    def f(y):
        return math.exp(2.0 * y * (mu - float(spec.lam(y))) - 2.0 * t * mu)

    integral, _ = quad(f, 0.0, t, rtol=1e-12)
    log_mi = math.log(mu * integral) + 2.0 * t * mu if integral > 0 else -math.inf
    return mu * t - float(np.logaddexp(0.0, log_mi))


def lad_mgf(spec, theta):
    """Rate at the plug-in mu = tail(theta), with theta0 = 0."""
    if not theta > 0:
        raise DomainError("theta must be positive (theta0 is normalized to 0)")
    mu = float(spec.lam(theta))
    return lad_rate(spec, mu, theta)


def lad_lower_bound(spec, theta):
    """theta tail(theta) - log(1 + theta tail(theta))."""
    x = theta * float(spec.lam(theta))
    return x - math.log1p(x)


def lad_model(spec, theta0=0.0):
    """LAD (median) model; the plug-in profile is mu(theta) = tail(|theta - theta0|)."""
    def per_obs(y, theta):
        return -np.abs(np.asarray(y, dtype=float) - theta)

    def total(y, theta):
        return -float(np.sum(np.abs(y - theta)))

    def sampler(theta, n, rng):
        e = rng.standard_exponential(n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return theta + sign * spec.solve(e)

    def closed_rate(mu, theta, theta0):
        return lad_rate(spec, mu, theta - theta0)

    def mu_profile(theta):
        return float(spec.lam(max(abs(theta - theta0), 1e-12)))

    def sign_sum(y, theta):
        return float(np.sum(np.sign(y - theta)))

    return ContrastModel(
        name="lad",
        param_dim=1,
        domain=ParameterDomain.box([-math.inf], [math.inf]),
        total_contrast=total,
        per_obs_contrast=per_obs,
        sampler=sampler,
        mu_profile=mu_profile,
        closed_rate=closed_rate,
        rate_kind="quadrature",
        gradient=lambda y, theta: np.array([sign_sum(y, theta)]),
        closed_fit=lambda y: float(np.median(y)),
        obs_law=lambda theta0: LadLaw(spec, theta0),
        kinks=lambda theta, theta0: sorted({float(theta), float(theta0)}),
        iid=True,
        extras={"spec": spec},
    )


# ------------------------------------------------------------ change point

@dataclass(frozen=True)
class ChangePointSpec:
    n: int
    A: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("series length must be at least 2")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def amplitude(self, theta0):
        """a = A sqrt(theta0) / sigma."""
        return self.A * math.sqrt(theta0) / self.sigma


def cp_d(theta, theta_prime):
    """1 - sqrt(min(theta/theta', theta'/theta))."""
    lo, hi = min(theta, theta_prime), max(theta, theta_prime)
    return 1.0 - math.sqrt(lo / hi)


def cp_moments(spec, variant, theta, theta0):
    """(M, D^2): minus the mean and the variance of L(theta, theta0)."""
    if variant == "known_A":
        m = spec.A ** 2 * abs(theta - theta0) / (2.0 * spec.sigma ** 2)
        return m, 2.0 * m
    d = cp_d(theta, theta0)
    return spec.amplitude(theta0) * d, 2.0 * d


def cp_model(spec, variant="known_A", theta0=None):
    """Change-point model on {1, ..., n-1}. theta0 fixes the unknown-A plug-in mu = a/2."""
    if variant not in ("known_A", "unknown_A"):
        raise DomainError(f"unknown variant {variant!r}")
    n, A, sig = spec.n, spec.A, spec.sigma
    k = np.arange(1, n)

    if variant == "known_A":
        def profile(y):
            cs = np.cumsum(y)[: n - 1]
            return (A / sig ** 2) * cs - A ** 2 * k / (2.0 * sig ** 2)

        def total(y, theta):
            return (A / sig ** 2) * float(np.sum(y[:theta])) - A ** 2 * theta / (2.0 * sig ** 2)

        def mu_profile(theta):
            return 0.5
    else:
        def profile(y):
            return np.cumsum(y)[: n - 1] / (sig * np.sqrt(k))

        def total(y, theta):
            return float(np.sum(y[:theta])) / (sig * math.sqrt(theta))

        a = None if theta0 is None else spec.amplitude(theta0)

        def mu_profile(theta):
            if a is None:
                raise DomainError("unknown-A plug-in mu needs theta0")
            return a / 2.0

    def sampler(theta, m, rng):
        return A * (np.arange(1, n + 1) <= theta) + sig * rng.standard_normal(n)

    def closed_rate(mu, theta, t0):
        mm, d2 = cp_moments(spec, variant, theta, t0)
        return mu * mm - mu * mu * d2 / 2.0

    def law(theta, t0):
        mm, d2 = cp_moments(spec, variant, theta, t0)
        return stats.norm(loc=-mm, scale=math.sqrt(d2))

    def fit(y):
        return int(np.argmax(profile(y))) + 1

    return ContrastModel(
        name=f"change_point_{variant}",
        param_dim=1,
        domain=ParameterDomain.discrete_range(1, n - 1),
        total_contrast=total,
        sampler=sampler,
        mu_profile=mu_profile,
        closed_rate=closed_rate,
        closed_fit=fit,
        profile=profile,
        increment_law=law,
        fixed_n=n,
        extras={"spec": spec, "variant": variant, "theta0": theta0},
    )


def _ball_factor(eps):
    e2 = eps * eps
    if not 0.0 < e2 < 2.0:
        raise DomainError("need 0 < eps^2 < 2")
    return (1.0 - e2 / 2.0) ** 2


def cp_ball_bounds(centers, eps, first=1, last=None):
    """Integer local balls [ceil(c (1-eps^2/2)^2), floor(c (1-eps^2/2)^-2)] clipped to [first, last]."""
    f = _ball_factor(eps)
    c = np.asarray(centers, dtype=float)
    lo = np.ceil(c * f * (1.0 - 1e-12)).astype(np.int64)
    hi = np.floor(c / f * (1.0 + 1e-12)).astype(np.int64)
    lo = np.maximum(lo, first)
    if last is not None:
        hi = np.minimum(hi, last)
    return lo, hi


def cp_local_ball(theta0, eps, n=None):
    """(lo, hi, count) of the local ball around theta0; clipped to {1, ..., n-1} when n is given."""
    lo, hi = cp_ball_bounds([theta0], eps, 1, None if n is None else n - 1)
    lo, hi = int(lo[0]), int(hi[0])
    return lo, hi, max(hi - lo + 1, 0)


def cp_ball_constant(eps):
    """K(eps) = (1 - eps^2/2)^-2 - (1 - eps^2/2)^2."""
    f = _ball_factor(eps)
    return 1.0 / f - f


def cp_inverse_ball_sum(n, eps):
    """sum over theta = 1..n of 1 / (number of integers of the local ball within 1..n)."""
    t = np.arange(1, n + 1)
    lo, hi = cp_ball_bounds(t, eps, 1, n)
    return float(np.sum(1.0 / (hi - lo + 1)))


def cp_known_geometric_bound(rho, A, sigma):
    """(C, 2/(1 - C)) with C = exp{-rho (1 - rho) A^2 / (8 sigma^2)}."""
    c = math.exp(-rho * (1.0 - rho) * A * A / (8.0 * sigma * sigma))
    return c, 2.0 / (1.0 - c)
