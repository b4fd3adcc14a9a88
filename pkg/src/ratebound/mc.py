"""Seeded Monte Carlo harness for exponential moments, tails and coverage.

Replication i draws from Philox keyed by SeedSequence(seed, spawn_key=(i,)), so
every replication has its own stream and results do not depend on how the
work is split across threads. Aggregation always runs in replication order.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import exp_moment_stats
from .bounds import BoundReport
from .core import fit
from .errors import CapabilityError, DomainError
from .models import ChangePointSpec, cp_known_geometric_bound, cp_model

QUANTITIES = ("omega", "tail", "coverage", "moment_r")
GENERATOR = "numpy.random.Philox(SeedSequence(seed, spawn_key=(rep,)))"


def rep_rng(seed, i):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(i,))))


@dataclass(frozen=True)
class McConfig:
    model: object
    theta0: object
    n: int
    reps: int = 1000
    seed: int = 0
    rho: float = 0.5
    s: float = 0.0
    quantities: tuple = ("omega",)
    r_grid: tuple = ()
    z_grid: tuple = ()
    moment_r: tuple = (1.0, 2.0)
    mu_star_lower: Optional[float] = None
    distance: Optional[Callable] = None
    exp_moments: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.reps < 100:
            raise DomainError("reps must be at least 100")
        if not 0.0 < self.rho < 1.0:
            raise DomainError("rho must lie in (0, 1)")
        if not 0.0 <= self.s < 1.0:
            raise DomainError("s must lie in [0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        bad = [q for q in self.quantities if q not in QUANTITIES]
        if bad:
            raise DomainError(f"unknown quantities {bad}")
        if "tail" in self.quantities and not self.r_grid:
            raise DomainError("tail needs an r grid")
        if "coverage" in self.quantities and not self.z_grid:
            raise DomainError("coverage needs a z grid")
        if self.threads < 1:
            raise DomainError("threads must be positive")


@dataclass(frozen=True)
class McRow:
    quantity: str
    estimate: float
    stderr: float
    reps: int
    seed: int
    dominance: float = 0.0
    flag: str = ""


@dataclass(frozen=True)
class McResult:
    rows: tuple
    samples: dict = field(default_factory=dict, compare=False, repr=False)
    config: Optional[McConfig] = field(default=None, compare=False, repr=False)

    def row(self, quantity):
        for r in self.rows:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        buf.write("quantity,estimate,stderr,reps,seed,dominance,flag\n")
        for r in self.rows:
            buf.write("%s,%.17g,%.17g,%d,%d,%.17g,%s\n" % (r.quantity, r.estimate, r.stderr,
                                                          r.reps, r.seed, r.dominance, r.flag))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _model_rate(model, mu, theta, theta0, n):
    if np.array_equal(np.asarray(theta), np.asarray(theta0)):
        return 0.0
    k = n if model.iid else 1
    return k * float(model.closed_rate(mu, theta, theta0))


def _one(cfg, i):
    m = cfg.model
    rng = rep_rng(cfg.seed, i)
    y = m.sampler(cfg.theta0, cfg.n, rng)
    tt = fit(m, y)
    mu = float(m.mu_profile(tt))
    L = float(m.total_contrast(y, tt) - m.total_contrast(y, cfg.theta0))
    rate = _model_rate(m, mu, tt, cfg.theta0, cfg.n)
    extra = tuple(float(f(tt, y)) for f in cfg.exp_moments.values())
    return tt, mu, L, rate, extra


def simulate(cfg):
    """Per-replication arrays: theta_tilde, mu, L, rate and any extra log-integrands."""
    if cfg.model.closed_rate is None:
        raise CapabilityError(f"{cfg.model.name}: no deterministic rate; Monte Carlo inside "
                              "Monte Carlo is refused")
    cfg.model.check(cfg.theta0)
    idx = range(cfg.reps)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            out = list(ex.map(lambda i: _one(cfg, i), idx, chunksize=64))
    else:
        out = [_one(cfg, i) for i in idx]
    tt = np.array([np.asarray(o[0], dtype=float) for o in out])
    data = {
        "theta_tilde": tt,
        "mu": np.array([o[1] for o in out]),
        "L": np.array([o[2] for o in out]),
        "rate": np.array([o[3] for o in out]),
    }
    for j, name in enumerate(cfg.exp_moments):
        data["x:" + name] = np.array([o[4][j] for o in out])
    return data


def median_of_means(v, blocks=32):
    parts = np.array_split(np.asarray(v, dtype=float), blocks)
    return float(np.median([p.mean() for p in parts]))


def _exp_rows(name, logs, cfg):
    lm, rel, dom = exp_moment_stats(logs)
    est = math.exp(lm) if lm < 700 else math.inf
    flag = "dominance" if dom > 0.5 else ""
    rows = [McRow(name, est, rel * est, cfg.reps, cfg.seed, dom, flag)]
    if flag:
        mom = median_of_means(np.exp(logs - lm)) * est
        rows.append(McRow(name + ":median_of_means", mom, math.nan, cfg.reps, cfg.seed, dom,
                          flag))
    return rows


def _mean_row(name, v, cfg):
    v = np.asarray(v, dtype=float)
    return McRow(name, float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), cfg.reps,
                 cfg.seed)


def _distance(cfg, tt):
    if cfg.distance is not None:
        return np.array([cfg.distance(t, cfg.theta0) for t in tt])
    d = tt - np.asarray(cfg.theta0, dtype=float)
    return np.sqrt(np.sum(d.reshape(d.shape[0], -1) ** 2, axis=1))


def run(cfg):
    data = simulate(cfg)
    rho, s = cfg.rho, cfg.s
    rows = []
    if "omega" in cfg.quantities:
        data["log_omega"] = rho * (data["mu"] * data["L"] + s * data["rate"])
        rows += _exp_rows(f"omega(rho={rho:g},s={s:g})", data["log_omega"], cfg)
    if "tail" in cfg.quantities:
        # strict inequality: a replication with rate exactly r is inside A(r)
        for r in cfg.r_grid:
            rows.append(_mean_row(f"tail(r={r:g})", data["rate"] > r, cfg))
    if "coverage" in cfg.quantities:
        for z in cfg.z_grid:
            rows.append(_mean_row(f"noncoverage(z={z:g})", data["L"] > z, cfg))
    if "moment_r" in cfg.quantities:
        dist = _distance(cfg, data["theta_tilde"])
        for r in cfg.moment_r:
            rows.append(_mean_row(f"moment(r={r:g})", dist ** r, cfg))
    for name in cfg.exp_moments:
        rows += _exp_rows(name, data["x:" + name], cfg)
    return McResult(tuple(rows), data, cfg)


# ------------------------------------------------------------------ verdicts

@dataclass(frozen=True)
class Verdict:
    quantity: str
    estimate: float
    bound: float
    stderr: float
    verdict: str

    def line(self):
        return (f"{self.verdict} {self.quantity}: estimate {self.estimate:.6g} "
                f"(se {self.stderr:.3g}) vs bound {self.bound:.6g}")


def judge(quantity, estimate, stderr, bound, flagged=False):
    if flagged:
        v = "WARN"
    elif estimate <= bound + 3.0 * stderr:
        v = "PASS"
    else:
        v = "FAIL"
    return Verdict(quantity, estimate, bound, stderr, v)


def compare(result, bounds):
    """PASS when estimate <= bound + 3 SE, WARN when the estimate is dominance-flagged, else FAIL.

    `bounds` maps quantity names to upper bounds, or is a BoundReport for the omega row.
    """
    if isinstance(bounds, BoundReport):
        cfg = result.config
        if cfg is not None and (abs(cfg.rho - bounds.rho) > 1e-12 or abs(cfg.s - bounds.s) > 1e-12):
            raise DomainError("rho and s of the run and the bound differ")
        name = [r.quantity for r in result.rows if r.quantity.startswith("omega(")]
        if not name:
            raise DomainError("result has no omega row")
        bounds = {name[0]: bounds.omega_upper}
    out = []
    for q, b in bounds.items():
        r = result.row(q)
        out.append(judge(q, r.estimate, r.stderr, b, bool(r.flag)))
    return out


def _joint(name, event, x, factor):
    d = event.astype(float) - x * factor
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    lm, rel, dom = exp_moment_stats(np.log(np.maximum(x, 1e-300)))
    return Verdict(name, float(event.mean()), float(x.mean() * factor), se,
                   "WARN" if dom > 0.5 else ("PASS" if d.mean() <= 3.0 * se else "FAIL"))


def implication_checks(result):
    """Tail and non-coverage frequencies against the empirical Omega times the exponential factor.

    The differences are taken replication by replication, so the standard error is joint.
    """
    cfg, data = result.config, result.samples
    rho, s = cfg.rho, cfg.s
    out = []
    if "tail" in cfg.quantities:
        if not s > 0:
            raise DomainError("tail implication needs s > 0")
        x = np.exp(rho * (data["mu"] * data["L"] + s * data["rate"]))
        for r in cfg.r_grid:
            out.append(_joint(f"tail(r={r:g})", data["rate"] > r, x, math.exp(-rho * s * r)))
    if "coverage" in cfg.quantities:
        if cfg.mu_star_lower is None:
            raise DomainError("coverage implication needs mu_star_lower")
        if np.any(data["mu"] < cfg.mu_star_lower):
            raise DomainError("mu_star_lower exceeds a replicated plug-in mu")
        x = np.exp(rho * data["mu"] * data["L"])
        for z in cfg.z_grid:
            out.append(_joint(f"noncoverage(z={z:g})", data["L"] > z, x,
                              math.exp(-rho * cfg.mu_star_lower * z)))
    return out


# ----------------------------------------------------------- change point

@dataclass(frozen=True)
class SweepRow:
    n: int
    theta0: int
    estimate: float
    stderr: float
    ratio: float
    dominance: float
    moment1: float
    moment2: float
    known_estimate: float
    known_stderr: float
    known_bound: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple
    seed: int
    reps: int
    rho: float

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        cols = ("n", "theta0", "estimate", "stderr", "estimate_over_log_n", "dominance",
                "moment_d_1", "moment_d_2", "known_estimate", "known_stderr", "known_bound")
        buf.write(",".join(cols) + "\n")
        for r in self.rows:
            buf.write("%d,%d,%s\n" % (r.n, r.theta0, ",".join(
                "%.17g" % v for v in (r.estimate, r.stderr, r.ratio, r.dominance, r.moment1,
                                      r.moment2, r.known_estimate, r.known_stderr,
                                      r.known_bound))))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _cp_sweep_rep(spec, theta0, seed, i, rho):
    rng = rep_rng(seed, i)
    k = np.arange(1, spec.n)
    y = spec.A * (np.arange(1, spec.n + 1) <= theta0) + spec.sigma * rng.standard_normal(spec.n)
    cs = np.cumsum(y)[: spec.n - 1]
    t_unknown = int(np.argmax(cs / np.sqrt(k))) + 1
    t_known = int(np.argmax(spec.A * cs - spec.A ** 2 * k / 2.0)) + 1
    d = 1.0 - math.sqrt(min(t_unknown, theta0) / max(t_unknown, theta0))
    return d, abs(t_known - theta0)


def cp_loglog_sweep(A, sigma, theta0_fraction, n_list, reps, seed=0, rho=0.5, threads=1):
    """For each n: E exp{rho a^2 d/8} under the unknown-amplitude estimator, its ratio to log n,
    E d and E d^2, and the known-amplitude moment E exp{rho^2 A^2 |theta_A - theta0| / (4 sigma^2)}."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError("n_list must be increasing")
    if reps < 100:
        raise DomainError("reps must be at least 100")
    rows = []
    for n in n_list:
        spec = ChangePointSpec(int(n), A, sigma)
        t0 = int(round(theta0_fraction * n))
        if not 1 <= t0 <= n - 1:
            raise DomainError(f"theta0 = {t0} outside 1..{n - 1}")
        a = spec.amplitude(t0)

        def one(i, spec=spec, t0=t0):
            return _cp_sweep_rep(spec, t0, seed, i, rho)

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                out = list(ex.map(one, range(reps), chunksize=64))
        else:
            out = [one(i) for i in range(reps)]
        d = np.array([o[0] for o in out])
        jump = np.array([o[1] for o in out], dtype=float)
        lm, rel, dom = exp_moment_stats(rho * a * a * d / 8.0)
        est = math.exp(lm)
        klm, krel, _ = exp_moment_stats(rho * rho * A * A * jump / (4.0 * sigma * sigma))
        kest = math.exp(klm)
        rows.append(SweepRow(int(n), t0, est, rel * est, est / math.log(n), dom,
                             float(d.mean()), float((d ** 2).mean()), kest, krel * kest,
                             cp_known_geometric_bound(rho, A, sigma)[1]))
    return SweepTable(tuple(rows), seed, reps, rho)


def cp_unknown_model(n, A, sigma, theta0):
    spec = ChangePointSpec(n, A, sigma)
    return cp_model(spec, "unknown_A", theta0)
