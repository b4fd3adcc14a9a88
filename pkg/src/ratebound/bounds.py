"""Theoretical constants for exponential bounds on the minimum contrast.

Everything here is deterministic except `ed_checker`, which estimates the
gradient log-MGF by Monte Carlo. Bounds on log Omega(rho, s) are assembled into
a BoundReport that serializes to key: value text or `component,value` CSV.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ._numerics import bisect_root, exp_moment_stats, golden_max, unit_ball_volume
from .errors import (BracketError, CapabilityError, DivergenceError, DomainError,
                     ExponentialMomentError, StepConstraintError)
from .models import cp_ball_bounds, cp_d, exp_h
from .rate import log_integral_exp

FORMS = ("discrete", "general", "smooth", "iid", "root_n")


def _check_rho_s(rho, s):
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0, 1)")
    if not 0.0 <= s < 1.0:
        raise DomainError("s must lie in [0, 1)")


# ------------------------------------------------------------------ report

@dataclass(frozen=True)
class BoundReport:
    form: str
    rho: float
    s: float
    log_omega_upper: float
    eps: Optional[float] = None
    nu0: Optional[float] = None
    nu1: Optional[float] = None
    step_bound: Optional[float] = None
    entropy: Optional[float] = None
    h_eps: Optional[float] = None
    components: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def omega_upper(self):
        return math.exp(self.log_omega_upper) if self.log_omega_upper < 700 else math.inf

    def _rows(self):
        rows = [("form", self.form), ("rho", self.rho), ("s", self.s)]
        for k in ("eps", "nu0", "nu1", "step_bound", "entropy", "h_eps"):
            v = getattr(self, k)
            if v is not None:
                rows.append((k, v))
        rows += [(f"term.{k}", v) for k, v in self.components.items()]
        rows += list(self.extras.items())
        rows += [("log_omega_upper", self.log_omega_upper), ("omega_upper", self.omega_upper)]
        return rows

    @staticmethod
    def _fmt(v):
        if isinstance(v, bool) or v is None or isinstance(v, str):
            return str(v)
        return "%.17g" % v

    def to_text(self):
        lines = [f"{k}: {self._fmt(v)}" for k, v in self._rows()]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        buf.write("component,value\n")
        for k, v in self._rows():
            buf.write(f"{k},{self._fmt(v)}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


# ----------------------------------------------------------- discrete sums

def discrete_omega_bound(rates, s, tail_closure=False):
    """Sum of exp{-(1-s) rate}: an upper bound on the rho = 1 exponential moment.

    With tail_closure the rates are read as an ordered ray; the mass beyond the
    last entry is bounded by a geometric series using the smallest increment
    over the last half of the ray.
    """
    if not s < 1.0:
        raise DomainError("s must be < 1")
    r = np.asarray(list(rates.values()) if isinstance(rates, dict) else rates, dtype=float)
    if r.size == 0:
        raise DomainError("empty rate table")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("rates must be finite and nonnegative")
    total = float(np.sum(np.exp(-(1.0 - s) * r)))
    if not tail_closure:
        return total
    if r.size < 3:
        raise DivergenceError("tail closure needs at least three ordered rates")
    tail = r[r.size // 2:]
    c = float(np.min(np.diff(tail)))
    if not c > 0:
        raise DivergenceError(f"rates stop growing at the end of the range (min step {c:g})")
    q = math.exp(-(1.0 - s) * c)
    return total + math.exp(-(1.0 - s) * r[-1]) * q / (1.0 - q)


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class MetricSpec:
    """Metric used for local balls.

    smooth: sup over the segment of the quadratic form of V (V returns a p x p matrix
    or a positive scalar when p = 1). change_point: scale * sqrt(2 d(theta, theta')).
    custom: a user distance; covering numbers are not available for it.
    """

    kind: str
    V: Optional[Callable] = None
    dim: int = 1
    scale: float = 1.0
    constant: bool = False
    fn: Optional[Callable] = None
    t_grid_size: int = 65

    def __post_init__(self):
        if self.kind not in ("smooth", "change_point", "custom"):
            raise DomainError(f"unknown metric kind {self.kind!r}")
        if self.kind == "smooth" and self.V is None:
            raise DomainError("smooth metric needs V")
        if self.kind == "custom" and self.fn is None:
            raise DomainError("custom metric needs a distance function")
        if not self.scale > 0:
            raise DomainError("scale must be positive")

    @classmethod
    def euclidean(cls, p=1, scale=1.0):
        mat = scale * scale * np.eye(p)
        return cls("smooth", V=lambda theta: mat, dim=p, constant=True)

    @classmethod
    def smooth(cls, V, dim=1, constant=False):
        return cls("smooth", V=V, dim=dim, constant=constant)

    @classmethod
    def change_point(cls, scale=1.0):
        return cls("change_point", scale=scale)

    @classmethod
    def custom(cls, fn):
        return cls("custom", fn=fn)

    def distance(self, a, b):
        if self.kind == "smooth":
            return smooth_metric(self.V, a, b, self.t_grid_size)
        if self.kind == "change_point":
            return self.scale * math.sqrt(2.0 * cp_d(a, b))
        return float(self.fn(a, b))

    def log_halfwidth(self, eps):
        """Change-point balls are intervals |log t - log t0| <= R(eps); inf when they cover all."""
        if self.kind != "change_point":
            raise CapabilityError("log half-width only exists for the change-point metric")
        x = eps / self.scale
        if x * x >= 2.0:
            return math.inf
        return -2.0 * math.log1p(-x * x / 2.0)


def _as_matrix(v, p):
    m = np.asarray(v, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.shape != (p, p):
        raise DomainError(f"V must be {p} x {p}, got shape {m.shape}")
    return m


def smooth_metric(V, theta, theta_prime, t_grid_size=65):
    """sqrt of sup_t (theta - theta')' V(theta' + t (theta - theta')) (theta - theta')."""
    a = np.atleast_1d(np.asarray(theta, dtype=float))
    b = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    u = a - b
    p = u.size
    if not np.any(u):
        return 0.0

    def q(t):
        m = _as_matrix(V(b + t * u if p > 1 else float(b[0] + t * u[0])), p)
        if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) <= 0:
            raise DomainError(f"V is not positive definite at t = {t:.17g}")
        return float(u @ m @ u)

    ts = np.linspace(0.0, 1.0, t_grid_size)
    vals = np.array([q(t) for t in ts])
    j = int(np.argmax(vals))
    best = float(vals[j])
    lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, ts.size - 1)]
    if hi > lo:
        _, fx = golden_max(q, lo, hi, tol=1e-12)
        best = max(best, fx)
    return math.sqrt(best)


@dataclass(frozen=True)
class MagnitudeEstimate:
    value: float
    n_dirs: int
    n_radii: int
    lower_estimate: bool = True


def _ellipsoid_points(V, center, eps, n_dirs, n_radii):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    p = c.size
    m0 = _as_matrix(V(c if p > 1 else float(c[0])), p)
    w, vec = np.linalg.eigh(m0)
    if np.min(w) <= 0:
        raise DomainError("V is not positive definite at the center")
    inv_sqrt = vec @ np.diag(w ** -0.5) @ vec.T
    if p == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif p == 2:
        ang = 2 * math.pi * np.arange(n_dirs) / n_dirs
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        g = np.random.Generator(np.random.Philox(0)).standard_normal((n_dirs, p))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    radii = eps * np.arange(1, n_radii + 1) / n_radii
    pts = [c]
    for r in radii:
        pts.extend(c + r * (inv_sqrt @ d) for d in dirs)
    return np.array(pts)


def magnitude_V(V, center, eps, n_dirs=64, n_radii=8):
    """Sampled sup over pairs in the ellipsoid {(x-c)' V(c) (x-c) <= eps^2} of the
    largest generalized eigenvalue of (V(x), V(x')). A lower estimate of the true sup."""
    pts = _ellipsoid_points(V, center, eps, n_dirs, n_radii)
    p = pts.shape[1]
    mats = np.array([_as_matrix(V(x if p > 1 else float(x[0])), p) for x in pts])
    if p == 1:
        v = mats[:, 0, 0]
        if np.any(v <= 0):
            raise DomainError("V is not positive on the ellipsoid")
        return MagnitudeEstimate(float(v.max() / v.min()), n_dirs, n_radii)
    chol = np.linalg.cholesky(mats)
    linv = np.linalg.inv(chol)
    best = 1.0
    for j in range(len(mats)):
        m = linv[j] @ mats @ linv[j].T
        best = max(best, float(np.max(np.linalg.eigvalsh(m))))
    return MagnitudeEstimate(best, n_dirs, n_radii)


# --------------------------------------------------------- covering/entropy

def covering_number(metric, center, eps, eps_prime, nu1=None, max_count=None):
    """Covering number of the eps-ball by eps_prime-balls.

    Exact for 1-D constant-V metrics and for the change-point metric (intervals in
    log theta); the volumetric bound (nu1 eps/eps_prime)^p otherwise. max_count caps
    the count when the parameter set is finite.
    """
    if not 0 < eps_prime <= eps:
        raise DomainError("need 0 < eps_prime <= eps")
    if metric.kind == "custom":
        raise CapabilityError("covering numbers are not available for a custom metric")
    if metric.kind == "change_point":
        big, small = metric.log_halfwidth(eps), metric.log_halfwidth(eps_prime)
        if math.isinf(big):
            if max_count is None:
                raise CapabilityError("ball covers the whole half-line; pass max_count")
            return int(max_count)
        n = math.ceil(big / small * (1.0 - 1e-12))
    elif metric.dim == 1 and metric.constant:
        n = math.ceil(eps / eps_prime * (1.0 - 1e-12))
    else:
        if nu1 is None:
            raise CapabilityError("this metric needs nu1 for the volumetric covering bound")
        n = math.ceil((nu1 * eps / eps_prime) ** metric.dim * (1.0 - 1e-12))
    n = max(n, 1)
    return min(n, int(max_count)) if max_count is not None else n


def local_entropy(metric, center, eps, nu1=None, max_count=None, tol=1e-12, max_terms=400):
    """sum_k 2^{-k} log N(2^{-k} eps, eps); stops once 2^{-k} log N_{k+1} < tol."""
    total = 0.0
    for k in range(1, max_terms + 1):
        n_k = covering_number(metric, center, eps, eps * 2.0 ** -k, nu1, max_count)
        total += 2.0 ** -k * math.log(n_k)
        n_next = covering_number(metric, center, eps, eps * 2.0 ** -(k + 1), nu1, max_count)
        if 2.0 ** -k * math.log(n_next) < tol:
            return total
    return total


def q_p(p, tol=1e-12):
    """Entropy of the Euclidean unit ball: exact 2 log 2 for p = 1, an upper bound for p > 1
    from the volumetric count (1 + 2^{k+1})^p."""
    if p < 1:
        raise DomainError("dimension must be positive")
    if p == 1:
        return local_entropy(MetricSpec.euclidean(1), 0.0, 1.0, tol=tol)
    total, k = 0.0, 1
    while True:
        total += 2.0 ** -k * p * math.log1p(2.0 ** (k + 1))
        if 2.0 ** -k * p * math.log1p(2.0 ** (k + 2)) < tol:
            return total
        k += 1


# ---------------------------------------------------------------- (ED)

@dataclass(frozen=True)
class EdCheck:
    nu0: float
    delta_bar: float
    table: tuple
    mc_samples: int
    seed: int


def _directions(p):
    if p == 1:
        return np.array([[1.0], [-1.0]])
    eye = np.eye(p)
    g = np.random.Generator(np.random.Philox(1)).standard_normal((16, p))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([eye, -eye, g])


def _gradient_samples(model, theta, m, n, rng, theta0):
    if model.iid and model.per_obs_gradient is not None:
        y = model.sampler(theta0, m, rng)
        g = np.asarray(model.per_obs_gradient(y, theta), dtype=float).reshape(m, -1)
    elif model.gradient is not None:
        nn = model.fixed_n or n
        g = np.array([np.atleast_1d(model.gradient(model.sampler(theta0, nn, rng), theta))
                      for _ in range(m)], dtype=float)
    else:
        raise CapabilityError(f"{model.name}: no gradient declared")
    return float(model.mu_profile(theta)) * g


def ed_checker(model, theta_grid, delta_grid, mc_samples=20000, theta0=None, n=1, seed=0):
    """Monte Carlo estimate of (nu0, delta_bar) in h(delta, gamma; theta) <= 2 nu0^2 delta^2.

    Gradients are drawn under theta0 (default: the first grid point), centered
    and standardized by the empirical v(theta). delta_bar is the largest grid
    delta up to which every estimate is finite and not dominated by one draw;
    nu0 is the smallest value (at least 1) covering every probed point below it.
    The profile is treated as locally constant when differentiating.
    """
    deltas = np.sort(np.asarray(delta_grid, dtype=float))
    if deltas.size == 0 or deltas[0] <= 0:
        raise DomainError("delta grid must be positive")
    theta0 = model.param(theta_grid[0] if theta0 is None else theta0)
    rng = np.random.Generator(np.random.Philox(seed))
    ok = np.ones(deltas.size, dtype=bool)
    ratio = np.zeros(deltas.size)
    rows = []
    for theta in theta_grid:
        theta = model.param(theta)
        g = _gradient_samples(model, theta, mc_samples, n, rng, theta0)
        g = g - g.mean(axis=0)
        v = g.T @ g / g.shape[0]
        for gam in _directions(g.shape[1]):
            z = (g @ gam) / math.sqrt(float(gam @ v @ gam))
            for i, d in enumerate(deltas):
                h, _, dom = exp_moment_stats(2.0 * d * z)
                good = math.isfinite(h) and dom <= 0.5
                ok[i] &= good
                ratio[i] = max(ratio[i], h / (2.0 * d * d))
                rows.append((theta, tuple(gam), float(d), float(h), float(dom)))
    if not ok[0]:
        raise ExponentialMomentError("gradient exponential moment unreliable at the smallest delta")
    last = int(np.argmin(ok)) - 1 if not ok.all() else deltas.size - 1
    nu0 = math.sqrt(max(1.0, float(ratio[: last + 1].max())))
    return EdCheck(nu0, float(deltas[last]), tuple(rows), mc_samples, seed)


# ------------------------------------------------------------------ h_eps

def _range_table(values, op):
    levels = [np.asarray(values, dtype=float)]
    k = 1
    while 2 * k <= levels[0].size:
        prev = levels[-1]
        levels.append(op(prev[:-k], prev[k:]))
        k *= 2
    return levels


def range_reduce(values, lo, hi, op=np.minimum):
    """op over values[lo[i] : hi[i] + 1] for every i (sparse table, O(1) per query)."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    if np.any(hi < lo):
        raise DomainError("empty range")
    table = _range_table(values, op)
    length = hi - lo + 1
    lev = np.floor(np.log2(length)).astype(np.int64)
    out = np.empty(lo.size)
    for j in np.unique(lev):
        sel = lev == j
        row = table[j]
        out[sel] = op(row[lo[sel]], row[hi[sel] - (1 << j) + 1])
    return out


def h_epsilon_discrete(rates, ball_lo, ball_hi, rho, s, weights=None):
    """log sum_i w_i / pi(B_i) exp{-rho (1-s) min_{B_i} rate} for index-interval balls."""
    _check_rho_s(rho, s)
    r = np.asarray(rates, dtype=float)
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise DomainError("weights must be positive")
    lo, hi = np.asarray(ball_lo), np.asarray(ball_hi)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    mass = cw[hi + 1] - cw[lo]
    m_eps = range_reduce(r, lo, hi, np.minimum)
    return float(logsumexp(-rho * (1.0 - s) * m_eps, b=w / mass))


def h_epsilon_smooth(rate, V, lo, hi, rho, s, eps, center=None, ball_points=9, anchors=()):
    """log( (2 eps)^{-1} int sqrt(V(x)) exp{-rho (1-s) rate_eps(x)} dx ) for a 1-D parameter.

    rate_eps(x) is the minimum of the rate over the ellipsoid ball
    x +- eps / sqrt(V(x)) (a superset of the metric ball, so the result is an
    upper bound), evaluated at `ball_points` equispaced points plus `center`
    whenever the ball contains it. Divergent tails raise DivergenceError.
    """
    _check_rho_s(rho, s)
    if not eps > 0:
        raise DomainError("eps must be positive")
    if ball_points < 9:
        warnings.warn(f"ball grid spacing is coarser than eps/4 ({ball_points} points)")
    eta = rho * (1.0 - s)
    offs = np.linspace(-1.0, 1.0, ball_points)

    def logg(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        v = np.asarray(V(x), dtype=float) * np.ones_like(x)
        w = eps / np.sqrt(v)
        pts = np.clip(x[:, None] + w[:, None] * offs[None, :], np.nextafter(lo, hi),
                      np.nextafter(hi, lo))
        vals = np.asarray(rate(pts.ravel()), dtype=float).reshape(pts.shape)
        m = np.min(vals, axis=1)
        if center is not None:
            m = np.where(np.abs(x - center) <= w, 0.0, m)
        out = 0.5 * np.log(v) - eta * m
        return out if out.size > 1 else out[0]

    pts = list(anchors) + ([center] if center is not None else [])
    return log_integral_exp(logg, lo, hi, (), 1e-9, pts) - math.log(2.0 * eps)


def h_epsilon_iid(per_obs_rate, v, n, lo, hi, rho, s, eps, center=None, ball_points=9):
    """Smooth form with the n-scaled rate n m(theta) and V = n v(theta)."""
    return h_epsilon_smooth(lambda x: n * np.asarray(per_obs_rate(x)),
                            lambda x: n * np.asarray(v(x)), lo, hi, rho, s, eps,
                            center, ball_points)


def h_epsilon(source, rho, s, eps, mode, **kw):
    """Dispatch on mode: discrete_measure, smooth_lebesgue or iid_smooth."""
    if mode == "discrete_measure":
        return h_epsilon_discrete(source, kw["ball_lo"], kw["ball_hi"], rho, s,
                                  kw.get("weights"))
    if mode == "smooth_lebesgue":
        return h_epsilon_smooth(source, kw["V"], kw["lo"], kw["hi"], rho, s, eps,
                                kw.get("center"), kw.get("ball_points", 9))
    if mode == "iid_smooth":
        return h_epsilon_iid(source, kw["v"], kw["n"], kw["lo"], kw["hi"], rho, s, eps,
                             kw.get("center"), kw.get("ball_points", 9))
    raise DomainError(f"unknown mode {mode!r}")


# -------------------------------------------------------------- assembly

def omega_upper(form, rho, s, eps=None, nu0=None, nu1=1.0, entropy=None, h_eps=None,
                lam_bar=math.inf, delta_bar=None, n=None, p=1, discrete_sum=None):
    """Assemble an upper bound on log Omega(rho, s).

    discrete  rho * log(sum), the discrete sum lifted to rho < 1 by Jensen
    general   quadratic + (1-rho) entropy + log nu1 + h_eps, step bound lam_bar
    smooth    same with the unit-ball entropy (default q_p(p)) and 2 p log nu1
    iid       as smooth with step bound sqrt(n) delta_bar
    """
    _check_rho_s(rho, s)
    if form == "discrete":
        if discrete_sum is None or not discrete_sum > 0:
            raise DomainError("the discrete form needs a positive discrete sum")
        val = rho * math.log(discrete_sum)
        return BoundReport("discrete", rho, s, val, components={"rho_log_sum": val},
                           extras={"discrete_sum": discrete_sum},
                           notes=("rho < 1 via Omega(rho,s) <= Omega(1,s)^rho",))
    if form not in ("general", "smooth", "iid"):
        raise DomainError(f"omega_upper does not assemble {form!r}")
    if eps is None or not eps > 0:
        raise DomainError("eps must be positive")
    if nu0 is None or nu0 < 0 or (form != "general" and nu0 < 1):
        raise DomainError("nu0 must be >= 0 (>= 1 for the smooth forms)")
    if not nu1 >= 1:
        raise DomainError("nu1 must be >= 1")
    if h_eps is None:
        raise DomainError("h_eps is required")
    if form == "iid":
        if n is None or delta_bar is None:
            raise DomainError("the iid form needs n and delta_bar")
        step = math.sqrt(n) * delta_bar
    else:
        step = lam_bar
    if rho * eps / (1.0 - rho) > step * (1.0 + 1e-12):
        max_eps = step * (1.0 - rho) / rho
        raise StepConstraintError(
            f"step constraint rho eps/(1-rho) <= {step:.6g} fails; largest admissible eps "
            f"is {max_eps:.6g}", max_eps)
    if form == "general":
        if entropy is None:
            raise DomainError("the general form needs an entropy bound")
        ent, nu_term = entropy, math.log(nu1)
    else:
        ent = q_p(p) if entropy is None else entropy
        nu_term = 2.0 * p * math.log(nu1)
    quadr = 2.0 * nu0 ** 2 * eps ** 2 * rho ** 2 / (1.0 - rho)
    comps = {"quadratic": quadr, "entropy": (1.0 - rho) * ent, "nu1": nu_term, "h_eps": h_eps}
    total = quadr + (1.0 - rho) * ent + nu_term + h_eps
    return BoundReport(form, rho, s, total, eps, nu0, nu1, step, ent, h_eps, comps,
                       extras={"p": p} if form != "general" else {})


def gaussian_ball_integral(p, a_r, eps, eta):
    """a_r^{-p} (omega_p eps^p + (pi/eta)^{p/2})."""
    return a_r ** -p * (unit_ball_volume(p) * eps ** p + (math.pi / eta) ** (p / 2.0))


def h_asymptotic(p, a_r, eps, eta, pi_power=0.5):
    """log(1 + omega_p^{-1} pi^{p * pi_power} / |a_r^2 eps^2 eta|^{p/2}).

    pi_power = 0.5 is the form that follows from the Gaussian integral; pi_power = 1
    is the variant printed alongside it. Both are reported by root_n_constants.
    """
    return math.log1p(math.pi ** (p * pi_power) / unit_ball_volume(p)
                      / abs(a_r * a_r * eps * eps * eta) ** (p / 2.0))


def root_n_constants(p, rho, s, r, beta, a_r, C_r_beta, n, nu0=1.0, nu1=1.0, Qp=None):
    """b_r(n), the entropy integral bound and the assembled log Omega for the root-n bound.

    eps is fixed to sqrt((1-rho)/rho). The tail part of the integral is taken as
    C_r(beta) e^{-b_r} / (omega_p eps^p), valid for either sign of b_r; the
    verbatim closing display (with pi^p and e^{-b_r} <= 1) is reported beside it.
    """
    _check_rho_s(rho, s)
    if not (a_r > 0 and r > 0 and beta > 0 and C_r_beta >= 0 and n >= 1):
        raise DomainError("need a_r, r, beta > 0, C_r(beta) >= 0, n >= 1")
    eps = math.sqrt((1.0 - rho) / rho)
    eta = rho * (1.0 - s)
    om = unit_ball_volume(p)
    qp = q_p(p) if Qp is None else Qp
    b_r = eta * n * r - beta * r - eps / a_r - 0.5 * p * math.log(n)
    core = a_r ** -p * (1.0 + (math.pi / (eps * eps * eta)) ** (p / 2.0) / om)
    tail_log = math.log(C_r_beta) - b_r - math.log(om * eps ** p) if C_r_beta > 0 else -math.inf
    h = float(np.logaddexp(math.log(core), tail_log))
    fixed = (1.0 - rho) * qp + 2.0 * nu0 ** 2 * rho + 2.0 * p * math.log(nu1)
    log_omega = fixed + h
    verbatim = fixed + math.log1p(
        math.pi ** p * a_r ** -p / om / abs((1.0 - rho) * (1.0 - s)) ** (p / 2.0)
        + C_r_beta * rho ** (p / 2.0) / om / (1.0 - s) ** (p / 2.0))
    shift = 0.5 * p * math.log(1.0 / abs((1.0 - rho) * (1.0 - s)))
    extras = {
        "p": p, "r": r, "beta": beta, "a_r": a_r, "C_r_beta": C_r_beta, "n": n,
        "b_r": b_r, "b_r_nonpositive": b_r <= 0.0,
        "gaussian_ball_integral": gaussian_ball_integral(p, a_r, eps, eta),
        "h_asymptotic_pi_half": h_asymptotic(p, a_r, eps, eta, 0.5),
        "h_asymptotic_pi_full": h_asymptotic(p, a_r, eps, eta, 1.0),
        "log_omega_verbatim": verbatim,
        "C": (log_omega - shift) / p,
        "C_verbatim": (verbatim - shift) / p,
    }
    notes = ("b_r enters the tail term as e^{-b_r}; the stated condition b_r <= 0 is "
             "flagged, not asserted",)
    comps = {"entropy": (1.0 - rho) * qp, "quadratic": 2.0 * nu0 ** 2 * rho,
             "nu1": 2.0 * p * math.log(nu1), "h_eps": h}
    return BoundReport("root_n", rho, s, log_omega, eps, nu0, nu1, None, qp, h, comps, extras,
                       notes)


# ------------------------------------------------- moments from the MGF

def moment_from_exp(a, sigma2, r):
    """2 sigma sqrt(max(a, r/2)): bound on (E xi^r)^{1/r} when log E e^{lam xi} <= a + sigma^2 lam^2."""
    if a < 0 or not sigma2 > 0 or not r > 0:
        raise DomainError("need a >= 0, sigma^2 > 0, r > 0")
    return 2.0 * math.sqrt(sigma2) * math.sqrt(max(a, r / 2.0))


def moment_quadratic_exact(a, sigma2, r):
    """Exact inf over {a + sigma^2 lam^2 >= r} of (a + sigma^2 lam^2)/lam."""
    if a < 0 or not sigma2 > 0 or not r > 0:
        raise DomainError("need a >= 0, sigma^2 > 0, r > 0")
    sig = math.sqrt(sigma2)
    if a >= r / 2.0:
        return 2.0 * sig * math.sqrt(a)
    return sig * r / math.sqrt(r - a)


def moment_from_exp_variational(phi, r, lam_min=1e-8, lam_max=1e6, n_grid=4000):
    """inf over {lam > 0 : phi(lam) >= r} of phi(lam)/lam, by grid, bisection and golden section."""
    if not r > 0:
        raise DomainError("r must be positive")
    lam = np.geomspace(lam_min, lam_max, n_grid)
    ph = np.array([float(phi(x)) for x in lam])
    feas = ph >= r
    if not feas.any():
        raise BracketError(f"phi never reaches r = {r:g}; sup over the probe range is "
                           f"{np.nanmax(ph):.6g}", (lam_min, lam_max), float(np.nanmax(ph)))
    i0 = int(np.argmax(feas))
    edge = lam[0] if i0 == 0 else bisect_root(lambda x: float(phi(x)) - r, lam[i0 - 1],
                                              lam[i0], tol=1e-15)
    if float(phi(edge)) < r:
        edge = np.nextafter(edge, math.inf)
        while float(phi(edge)) < r:
            edge = edge * (1.0 + 1e-15) + 1e-300
    obj = np.where(feas, ph / lam, np.inf)
    j = int(np.argmin(obj))
    best = min(float(obj[j]), float(phi(edge)) / edge)
    a = max(lam[j - 1] if j > 0 else lam[j], edge)
    b = lam[j + 1] if j + 1 < lam.size else lam[j]

    def neg(x):
        v = float(phi(x))
        return -v / x if v >= r else -math.inf

    if b > a:
        _, fx = golden_max(neg, a, b, tol=1e-14 * b)
        best = min(best, -fx)
    return best


# --------------------------------------------------- inequality checks

@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    nu: float = 1.0

    @property
    def holds(self):
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300


def neighborhood_sup_check(f, neighborhoods, weights=None):
    """sup f versus nu * sum_i w_i f*(i)/pi(U_i) on a finite set, with nu from the weights."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise DomainError("f must be nonnegative")
    m = f.size
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    nbr = [np.unique(np.asarray(u, dtype=np.int64)) for u in neighborhoods]
    if len(nbr) != m or any(u.size == 0 for u in nbr):
        raise DomainError("one nonempty neighborhood per point required")
    members = [set(u.tolist()) for u in nbr]
    for i, u in enumerate(members):
        for j in u:
            if i not in members[j]:
                raise DomainError(f"neighborhoods are not symmetric: {j} in U({i}) but not back")
    mass = np.array([w[u].sum() for u in nbr])
    fstar = np.array([f[u].max() for u in nbr])
    nu = max(float(mass[u].max() / mass[i]) for i, u in enumerate(nbr))
    rhs = nu * float(np.sum(w * fstar / mass))
    return InequalityCheck(float(f.max()), rhs, nu)


def mixed_mgf_check(lams, atoms, probs=None):
    """log E exp(sum lam_k xi_k) versus sum lam_k log E e^{xi_k}.

    atoms is an (N, K) array of joint outcomes with probabilities probs (uniform when
    omitted, which also covers Monte Carlo samples: the inequality holds for the
    empirical law itself).
    """
    lam = np.asarray(lams, dtype=float)
    if np.any(lam < 0):
        raise DomainError("weights must be nonnegative")
    if lam.sum() > 1.0 + 1e-12:
        raise DomainError("weights must sum to at most 1")
    x = np.asarray(atoms, dtype=float)
    x = x.reshape(x.shape[0], -1)
    lp = (np.full(x.shape[0], -math.log(x.shape[0])) if probs is None
          else np.log(np.asarray(probs, dtype=float)))
    lhs = float(logsumexp(lp + x @ lam))
    rhs = float(sum(lam[k] * logsumexp(lp + x[:, k]) for k in range(lam.size)))
    return InequalityCheck(lhs, rhs)


def mixed_mgf_gaussian(lams, cov):
    """Closed form for a centered Gaussian vector: lam' C lam / 2 versus sum lam_k C_kk / 2."""
    lam = np.asarray(lams, dtype=float)
    if lam.sum() > 1.0 + 1e-12 or np.any(lam < 0):
        raise DomainError("weights must be nonnegative and sum to at most 1")
    c = np.asarray(cov, dtype=float)
    return InequalityCheck(float(lam @ c @ lam) / 2.0, float(lam @ np.diag(c)) / 2.0)


@dataclass(frozen=True)
class QuadraticMgfResult:
    C1: float
    lam2: float
    curvature: float
    lam2_probe_max: float


def quadratic_mgf_check(h, lam1, rho, lam2_max=None, n_grid=2000, step=1e-4):
    """Smallest C1 with h(lam) <= C1 lam^2/2 on (0, rho lam1] and largest lam2 with
    h(lam) >= rho lam^2/2 on (0, lam2] (up to lam2_max, default lam1)."""
    if not 0 < rho < 1 or not lam1 > 0:
        raise DomainError("need 0 < rho < 1 and lam1 > 0")
    h0 = float(h(0.0))
    d1 = (float(h(step)) - float(h(-step))) / (2 * step)
    d2 = (float(h(step)) - 2 * h0 + float(h(-step))) / step ** 2
    if abs(h0) > 1e-12 or abs(d1) > 1e-6 or abs(d2 - 1.0) > 1e-6:
        raise DomainError(f"h must satisfy h(0)=0, h'(0)=0, h''(0)=1 (got {h0:.3g}, {d1:.3g}, "
                          f"{d2:.9g})")
    top = rho * lam1
    grid = top * np.arange(1, n_grid + 1) / n_grid

    def ratio(x):
        return 2.0 * float(h(x)) / (x * x)

    vals = np.array([ratio(x) for x in grid])
    j = int(np.argmax(vals))
    c1 = float(vals[j])
    if 0 < j < n_grid - 1:
        _, fx = golden_max(ratio, grid[j - 1], grid[j + 1], tol=1e-12 * top)
        c1 = max(c1, fx)
    lim = lam1 if lam2_max is None else lam2_max
    g2 = lim * np.arange(1, n_grid + 1) / n_grid
    good = np.array([float(h(x)) >= rho * x * x / 2.0 for x in g2])
    if good.all():
        lam2 = lim
    elif not good[0]:
        lam2 = 0.0
    else:
        k = int(np.argmin(good))
        lam2 = bisect_root(lambda x: float(h(x)) - rho * x * x / 2.0, g2[k - 1], g2[k])
    return QuadraticMgfResult(c1, float(lam2), d2, float(lim))


def taylor_mgf_constant(kappa, lam1, rho):
    """kappa / (lam1^2 (1 - rho)^2), the constant produced by the Taylor argument."""
    return kappa / (lam1 * lam1 * (1.0 - rho) ** 2)


# ------------------------------------------------------- change point

def cp_ball_counts(n_last, eps, scale=1.0):
    """Index-interval balls on {1, ..., n_last} for the change-point metric with given scale.

    Returns (lo, hi) as 1-based integer arrays. scale is the factor multiplying
    sqrt(2 d), so a metric radius eps is a D-radius eps / scale.
    """
    x = eps / scale
    t = np.arange(1, n_last + 1)
    if x * x >= 2.0:
        return np.ones_like(t), np.full_like(t, n_last)
    return cp_ball_bounds(t, x, 1, n_last)


def cp_nu1(lo, hi):
    """max over centers c and members t of B(c) of |B(t)| / |B(c)| (counting measure)."""
    count = (hi - lo + 1).astype(float)
    top = range_reduce(count, lo - 1, hi - 1, np.maximum)
    return float(np.max(top / count))


def cp_entropy(eps, scale=1.0, max_count=None, tol=1e-12):
    """Upper bound on the local entropy valid for every center: log-interval coverings capped
    by the largest ball cardinality."""
    return local_entropy(MetricSpec.change_point(scale), 1, eps, max_count=max_count, tol=tol)


def cp_unknown_bound(spec, theta0, rho, s, eps=None):
    """General-set bound for the unknown-amplitude change point with metric D = sqrt(2 d).

    The centered increment with mu = a/2 is Gaussian with standard deviation (a/2) D,
    so the local condition holds with nu0 = a/2 for every lam. Balls are integer
    intervals clipped to {1, ..., n-1}; counting measure. eps = None minimizes over a
    log grid of 25 radii.
    """
    _check_rho_s(rho, s)
    if eps is None:
        reps = [cp_unknown_bound(spec, theta0, rho, s, float(e))
                for e in np.geomspace(1e-3, 1.0, 25)]
        return min(reps, key=lambda r: r.log_omega_upper)
    n_last = spec.n - 1
    a = spec.amplitude(theta0)
    lo, hi = cp_ball_counts(n_last, eps)
    t = np.arange(1, n_last + 1)
    rates = a * a * (1.0 - np.sqrt(np.minimum(t, theta0) / np.maximum(t, theta0))) / 4.0
    h = h_epsilon_discrete(rates, lo - 1, hi - 1, rho, s)
    nu1 = cp_nu1(lo, hi)
    ent = cp_entropy(eps, 1.0, max_count=int(np.max(hi - lo + 1)))
    rep = omega_upper("general", rho, s, eps=eps, nu0=a / 2.0, nu1=nu1, entropy=ent, h_eps=h)
    return rep


def cp_known_discrete_bound(spec, theta0, rho, s):
    """Discrete-sum bound for the known-amplitude change point with mu = 1/2 (rate M/4)."""
    t = np.arange(1, spec.n)
    rates = spec.A ** 2 * np.abs(t - theta0) / (8.0 * spec.sigma ** 2)
    total = discrete_omega_bound(rates, s)
    return omega_upper("discrete", rho, s, discrete_sum=total)


# ---------------------------------------------------------- exponential

def exp_nu0(delta_bar, n_grid=400):
    """sqrt(max(1, sup over 0 < delta <= delta_bar, gamma = +-1 of h(delta, gamma)/(2 delta^2)))."""
    if not 0 < delta_bar < 0.5:
        raise DomainError("delta_bar must lie in (0, 1/2) for the exponential model")
    d = delta_bar * np.arange(1, n_grid + 1) / n_grid
    worst = max(max(exp_h(x, 1.0), exp_h(x, -1.0)) / (2 * x * x) for x in d)
    return math.sqrt(max(1.0, worst))


def _exp_plugin_vec(u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log1p(u * u / (4.0 * (1.0 + u)))


def exp_h_eps(n, rho, s, eps, theta0=1.0):
    v = 1.0 / (4.0 * theta0 * theta0)
    return h_epsilon_iid(lambda th: _exp_plugin_vec(th / theta0 - 1.0), lambda th: v, n,
                         0.0, math.inf, rho, s, eps, center=theta0)


def exp_model_bound(n, rho, s, eps=None, theta0=1.0):
    """Smooth i.i.d. bound for the exponential model with mu = 1/2.

    v(theta) = 1/(4 theta0^2) is constant so nu1 = 1; delta_bar is the smallest value the
    step constraint allows. When eps is None it is chosen from a grid to minimize the bound.
    """
    _check_rho_s(rho, s)
    eps_max = 0.5 * math.sqrt(n) * (1.0 - rho) / rho * (1.0 - 1e-9)

    def build(e):
        db = e * rho / ((1.0 - rho) * math.sqrt(n))
        return omega_upper("iid", rho, s, eps=e, nu0=exp_nu0(db), nu1=1.0, entropy=q_p(1),
                           h_eps=exp_h_eps(n, rho, s, e, theta0), delta_bar=db, n=n, p=1)

    if eps is not None:
        return build(eps)
    grid = np.linspace(0.05, 1.0, 20) * min(eps_max, 4.0)
    reps = [build(float(e)) for e in grid]
    return min(reps, key=lambda r: r.log_omega_upper)
