from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import QuadratureError

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, a, b, tol=1e-10, max_iter=500):
    """Maximize a unimodal f on [a, b]. Returns (x, f(x)); endpoints are never evaluated."""
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while abs(b - a) > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        it += 1
    if fc >= fd:
        return c, fc
    return d, fd


def parabolic_polish(f, x, fx, lo, hi, h):
    """One vertex step of a three-point parabola around x, kept only if it improves f.

    Golden section alone resolves a smooth maximizer to roughly sqrt(machine eps);
    the vertex step recovers the remaining digits for near-quadratic objectives.
    """
    h = min(h, 0.5 * (x - lo), 0.5 * (hi - x))
    if not h > 0:
        return x, fx
    fl, fr = f(x - h), f(x + h)
    den = fl - 2.0 * fx + fr
    if not (den < 0 and math.isfinite(den)):
        return x, fx
    xv = x + 0.5 * h * (fl - fr) / den
    if not (lo < xv < hi):
        return x, fx
    fv = f(xv)
    # ties within rounding favour the vertex, which is the more accurate location
    if fv >= fx - 8.0 * np.finfo(float).eps * max(abs(fx), 1e-300):
        return xv, max(fv, fx)
    return x, fx


def bisect_root(g, lo, hi, tol=1e-12, max_iter=200):
    """Root of g on [lo, hi] with g(lo), g(hi) of opposite sign (or zero)."""
    glo = g(lo)
    if glo == 0:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def log_mean_exp(x):
    """log of the sample mean of exp(x), computed stably."""
    x = np.asarray(x, dtype=float)
    return float(logsumexp(x) - math.log(x.size))


def exp_moment_stats(x):
    """Summary of exp(x) samples in the log domain.

    Returns (log_mean, rel_se, dominance): rel_se is the standard error of the
    mean divided by the mean, dominance the share of the largest summand.
    """
    x = np.asarray(x, dtype=float)
    m = x.max()
    w = np.exp(x - m)
    tot = w.sum()
    mean = tot / w.size
    sd = w.std(ddof=1) if w.size > 1 else 0.0
    return (math.log(mean) + m, sd / math.sqrt(w.size) / mean, float(w.max() / tot))


def quad(f, a, b, rtol=1e-9, points=None, limit=400):
    """scipy QUADPACK wrapper that raises QuadratureError instead of warning."""
    kw = {}
    if points is not None and math.isfinite(a) and math.isfinite(b):
        kw["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=limit, full_output=1, **kw)
    val, err, info = out[:3]
    if len(out) > 3 and out[3]:
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not reach rtol={rtol}: {out[3].splitlines()[0]}",
            trace={"interval": (a, b), "neval": info.get("neval"), "last": info.get("last"),
                   "message": out[3]},
        )
    if not math.isfinite(val):
        raise QuadratureError(f"non-finite quadrature value on [{a}, {b}]",
                              trace={"interval": (a, b), "neval": info.get("neval")})
    return val, err


def unit_ball_volume(p):
    return math.pi ** (p / 2.0) / math.gamma(p / 2.0 + 1.0)
