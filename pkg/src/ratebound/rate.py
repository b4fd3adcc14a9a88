"""Rate function M(mu, theta, theta0) = -log E exp{mu L(theta, theta0)} and its Legendre transform.

Three evaluation routes, tried in this order unless EvalSpec.method forces one:

* closed      the model's closed_rate
* quadrature  adaptive quadrature against the model's declared density
* monte_carlo log-sum-exp over samples drawn under theta0

A divergent exponential moment is reported as a rate of -inf.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._numerics import exp_moment_stats, golden_max, parabolic_polish, quad
from .errors import (CapabilityError, DivergenceError, DomainError, ExponentialMomentError,
                     QuadratureError)

METHODS = ("closed", "quadrature", "monte_carlo")


@dataclass(frozen=True)
class EvalSpec:
    """How to evaluate the rate. `n` scales per-observation rates of iid models."""

    method: str = "auto"
    n: int = 1
    mc_samples: int = 100_000
    seed: int = 0
    rtol: float = 1e-9

    def __post_init__(self):
        if self.method not in ("auto",) + METHODS:
            raise DomainError(f"unknown evaluation method {self.method!r}")
        if self.n < 1 or self.mc_samples < 2:
            raise DomainError("n >= 1 and mc_samples >= 2 required")


@dataclass(frozen=True)
class RateEstimate:
    value: float
    stderr: float = 0.0
    dominance: float = 0.0
    method: str = "closed"

    @property
    def flagged(self):
        return self.dominance > 0.5


@dataclass(frozen=True)
class RatePoint:
    theta: object
    mu: float
    rate: float
    method: str
    flag: str = ""


@dataclass(frozen=True)
class MuDomain:
    theta: object
    upper: float
    probe_log: tuple = ()


@dataclass(frozen=True)
class RateProfile:
    theta0: object
    points: tuple
    grid: tuple = field(default=())

    def rates(self):
        return np.array([p.rate for p in self.points])

    def mus(self):
        return np.array([p.mu for p in self.points])

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        buf.write("theta,mu,rate,method\n")
        for p in self.points:
            th = " ".join("%.17g" % v for v in np.atleast_1d(p.theta))
            buf.write(f"{th},{'%.17g' % p.mu},{'%.17g' % p.rate},{p.method}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _same(a, b):
    return np.array_equal(np.asarray(a), np.asarray(b))


def _routes(model):
    out = []
    if model.closed_rate is not None:
        out.append("closed")
    if (model.iid and model.obs_law is not None and model.per_obs_contrast is not None) or (
        model.increment_law is not None
    ):
        out.append("quadrature")
    out.append("monte_carlo")
    return out


def _scale(model, spec):
    return spec.n if model.iid else 1


def evaluate_log_mgf(model, mu, theta, theta0, spec=EvalSpec()):
    """Rate with its standard error and dominance share (the latter two only for Monte Carlo)."""
    if not mu > 0:
        raise DomainError("mu must be positive")
    theta, theta0 = model.check(theta), model.check(theta0)
    method = spec.method
    if method == "auto":
        method = _routes(model)[0]
    elif method not in _routes(model):
        raise CapabilityError(f"{model.name}: no {method} route for the rate")
    if _same(theta, theta0):
        return RateEstimate(0.0, 0.0, 0.0, method)
    k = _scale(model, spec)
    if method == "closed":
        return RateEstimate(k * float(model.closed_rate(mu, theta, theta0)), 0.0, 0.0, "closed")
    if method == "quadrature":
        return RateEstimate(k * _quad_rate(model, mu, theta, theta0, spec.rtol), 0.0, 0.0,
                            "quadrature")
    return _mc_rate(model, mu, theta, theta0, spec)


def log_mgf(model, mu, theta, theta0, spec=EvalSpec()):
    return evaluate_log_mgf(model, mu, theta, theta0, spec).value


def _vec(f):
    def g(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(f(x), dtype=float)
    return g


def _quad_rate(model, mu, theta, theta0, rtol):
    if model.iid and model.obs_law is not None:
        law = model.obs_law(theta0)
        pc = model.per_obs_contrast

        def logg(y):
            return mu * (pc(y, theta) - pc(y, theta0)) + law.logpdf(y)
        kinks = list(model.kinks(theta, theta0)) if model.kinks is not None else []
    elif model.increment_law is not None:
        law = model.increment_law(theta, theta0)

        def logg(x):
            return mu * x + law.logpdf(x)
        kinks = []
    else:
        raise CapabilityError(f"{model.name}: no density declared for quadrature")
    lo, hi = (float(v) for v in law.support())
    try:
        return -log_integral_exp(_vec(logg), lo, hi, kinks, rtol, _law_anchors(law))
    except DivergenceError:
        return -math.inf


def _law_anchors(law):
    if hasattr(law, "anchors"):
        return list(law.anchors())
    pts = []
    try:
        m, s = float(law.mean()), float(law.std())
        if math.isfinite(m) and math.isfinite(s):
            pts += [m - 12 * s, m, m + 12 * s]
    except Exception:
        pass
    return pts


DROP = math.log(1e16)


def _nudge(x, lo, hi):
    # keep probes strictly inside a finite support boundary
    if x <= lo:
        return lo + 1e-12 * max(1.0, abs(lo))
    if x >= hi:
        return hi - 1e-12 * max(1.0, abs(hi))
    return x


def log_integral_exp(logg, lo, hi, kinks=(), rtol=1e-9, anchors=()):
    """log of the integral of exp(logg) over (lo, hi).

    The peak is located on a window that grows until it contains the argmax.
    Each unbounded side is probed at doubling distances until the integrand
    drops 1e-16 below the peak; if it never does, DivergenceError names the
    side. The outer pieces use QUADPACK's infinite-range rule, so slowly
    decaying tails are integrated rather than cut.
    """
    pts = [p for p in list(kinks) + list(anchors) if lo < p < hi]
    pts += [x for x in (lo, hi) if math.isfinite(x)]
    if lo < 0.0 < hi:
        pts.append(0.0)
    a, b = max(min(pts) - 1.0, lo), min(max(pts) + 1.0, hi)

    def val(x):
        v = logg(x)
        return np.where(np.isnan(v), -np.inf, v)

    for _ in range(200):
        grid = np.linspace(a, b, 2049)
        grid[0], grid[-1] = _nudge(a, lo, hi), _nudge(b, lo, hi)
        v = val(grid)
        j = int(np.argmax(v))
        w = b - a
        moved = False
        if j == 0 and a > lo:
            a, moved = max(lo, a - w), True
        if j == grid.size - 1 and b < hi:
            b, moved = min(hi, b + w), True
        if not moved:
            break
    else:
        raise DivergenceError("integrand keeps increasing while the window grows")
    peak_x, lp = float(grid[j]), float(v[j])
    if lp == math.inf:
        raise DivergenceError(f"integrand is infinite at x = {peak_x}")
    if lp == -math.inf:
        raise QuadratureError("integrand vanishes on the probe window")
    l_n, r_n = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
    if r_n > l_n:
        x, fx = golden_max(lambda t: float(val(t)), l_n, r_n, tol=1e-12 * max(1.0, abs(peak_x)))
        if fx > lp:
            peak_x, lp = x, fx
    scale = max(b - a, 1.0)
    for sign, edge, side in ((-1.0, lo, "left"), (1.0, hi, "right")):
        if math.isfinite(edge):
            continue
        for k in range(1, 400):
            if float(val(peak_x + sign * scale * 2.0 ** k)) < lp - DROP:
                break
        else:
            raise DivergenceError(f"integrand does not decay to the {side}")

    def integrand(x):
        return math.exp(float(val(x)) - lp)

    cuts = sorted({p for p in pts if lo < p < hi} | {peak_x})
    edges = [lo] + cuts + [hi]
    total = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        if x1 > x0:
            total += quad(integrand, x0, x1, rtol=rtol)[0]
    if not total > 0:
        raise QuadratureError("quadrature returned a non-positive mass")
    return lp + math.log(total)


def _mc_rate(model, mu, theta, theta0, spec):
    rng = np.random.Generator(np.random.Philox(spec.seed))
    m = spec.mc_samples
    if model.iid and model.per_obs_contrast is not None:
        y = model.sampler(theta0, m, rng)
        ell = model.per_obs_contrast(y, theta) - model.per_obs_contrast(y, theta0)
        k = spec.n
    else:
        n = model.fixed_n or spec.n
        ell = np.empty(m)
        for i in range(m):
            y = model.sampler(theta0, n, rng)
            ell[i] = model.total_contrast(y, theta) - model.total_contrast(y, theta0)
        k = 1
    lm, rse, dom = exp_moment_stats(mu * np.asarray(ell, dtype=float))
    return RateEstimate(-k * lm, k * rse, dom, "monte_carlo")


def _finite(model, mu, theta, theta0, spec):
    try:
        return math.isfinite(log_mgf(model, mu, theta, theta0, spec))
    except QuadratureError:
        return False


def mu_domain_probe(model, theta, theta0, spec=EvalSpec()):
    """Upper end of the interval of mu on which the rate is finite (doubling, then 12 bisections)."""
    if _same(model.check(theta), model.check(theta0)):
        raise DomainError("theta must differ from theta0")
    log = []
    if not _finite(model, 1e-8, theta, theta0, spec):
        raise ExponentialMomentError(f"{model.name}: exponential moment infinite at mu = 1e-8")
    lo, mu = 1e-8, 1.0
    while mu <= 2.0 ** 30:
        ok = _finite(model, mu, theta, theta0, spec)
        log.append((mu, ok))
        if not ok:
            break
        lo, mu = mu, mu * 2.0
    else:
        return MuDomain(theta, math.inf, tuple(log))
    hi = mu
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        ok = _finite(model, mid, theta, theta0, spec)
        log.append((mid, ok))
        if ok:
            lo = mid
        else:
            hi = mid
    return MuDomain(theta, hi, tuple(log))


def legendre(model, theta, theta0, spec=EvalSpec()):
    """(mu*, M*) by golden section over (0, upper); the objective is concave in mu."""
    theta, theta0 = model.check(theta), model.check(theta0)
    method = spec.method if spec.method != "auto" else _routes(model)[0]
    if _same(theta, theta0):
        return RatePoint(theta, float(model.mu_profile(theta)), 0.0, method)
    dom = mu_domain_probe(model, theta, theta0, spec)

    def f(mu):
        v = log_mgf(model, mu, theta, theta0, spec)
        return v if math.isfinite(v) else -math.inf

    a = 1e-12
    if math.isfinite(dom.upper):
        b = 0.999999 * dom.upper
    else:
        b = 1.0
        while b < 2.0 ** 40 and f(2.0 * b) > f(b):
            b *= 2.0
        b *= 2.0
    x, fx = golden_max(f, a, b, tol=1e-10)
    x, fx = parabolic_polish(f, x, fx, a, b, 1e-5 * max(x, 1e-3))
    flag = ""
    if b - x < 1e-8 * b:
        if f(b) - f(b * (1 - 1e-6)) > 0:
            flag = "boundary"
    return RatePoint(theta, float(x), max(float(fx), 0.0), method, flag)


def rate_profile(model, theta0, grid, mode="star", spec=EvalSpec(), threads=1):
    """Tabulate (mu*, M*) or the plug-in pair (mu(theta), M(mu(theta), theta, theta0)) over a grid."""
    if mode not in ("star", "plug_in"):
        raise DomainError(f"unknown mode {mode!r}")
    grid = list(grid)
    for t in grid:
        model.check(t)

    def one(t):
        if mode == "star":
            return legendre(model, t, theta0, spec)
        mu = float(model.mu_profile(model.param(t)))
        est = evaluate_log_mgf(model, mu, t, theta0, spec)
        return RatePoint(model.param(t), mu, est.value, est.method)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            pts = list(ex.map(one, grid))
    else:
        pts = [one(t) for t in grid]
    return RateProfile(model.param(theta0), tuple(pts), tuple(grid))


def identity_check(model, theta, theta0, spec=EvalSpec()):
    """|E exp{mu(theta) L(theta, theta0) + M(theta, theta0)} - 1| with the expectation taken by
    the EvalSpec's route and the rate by the best deterministic route. Returns (residual, stderr)."""
    theta, theta0 = model.check(theta), model.check(theta0)
    mu = float(model.mu_profile(theta))
    routes = _routes(model)
    ref_method = "closed" if "closed" in routes else ("quadrature" if "quadrature" in routes else None)
    if ref_method is None:
        raise CapabilityError(f"{model.name}: no deterministic route for the reference rate")
    ref = log_mgf(model, mu, theta, theta0, EvalSpec(ref_method, spec.n, rtol=spec.rtol))
    est = evaluate_log_mgf(model, mu, theta, theta0, spec)
    # E exp{mu L} = exp(-est.value); residual of exp(ref - est)
    d = ref - est.value
    return abs(math.expm1(d)), math.exp(d) * est.stderr
