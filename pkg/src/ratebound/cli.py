"""Command line runner: ratebound <rate|bound|simulate|coverage> --config PATH.

Each run writes config.resolved, one or more CSV tables and report.txt into the
output directory. Exit codes: 0 ok, 2 config error, 3 step constraint violated,
4 a bound comparison failed, 1 any other package error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .bounds import (BoundReport, cp_known_discrete_bound, cp_unknown_bound, exp_model_bound,
                     omega_upper, root_n_constants)
from .config import MODEL_KINDS, ExperimentConfig
from .errors import ConfigError, RateboundError, StepConstraintError
from .inference import noncoverage_bound
from .mc import (GENERATOR, McConfig, compare, cp_loglog_sweep, implication_checks, judge, run)
from .models import (ChangePointSpec, GaussianLinearSpec, LadSpec, cp_d,
                     cp_known_geometric_bound, cp_model, exp_model, gauss_sup_moment,
                     gaussian_linear_model, lad_model)
from .rate import EvalSpec, rate_profile

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_CONSTRAINT, EXIT_FAIL = 0, 1, 2, 3, 4


class Setup:
    """Model and its parameters as read from the [model] section."""

    def __init__(self, cfg):
        self.kind = cfg.get_str("model", "kind", choices=MODEL_KINDS)
        k = self.kind
        if k == "gaussian":
            self.n = cfg.get_int("model", "n", 1, lo=1)
            self.p = cfg.get_int("model", "p", 1, lo=1)
            if self.p > self.n:
                raise ConfigError("p must not exceed n", "model.p")
            self.sigma = cfg.get_float("model", "sigma", 1.0, lo=0.0, lo_open=True)
            X = np.tile(np.eye(self.p), (-(-self.n // self.p), 1))[: self.n]
            self.spec = GaussianLinearSpec(X, self.sigma)
            self.model = gaussian_linear_model(self.spec)
            t0 = cfg.get_float("model", "theta0", 0.0)
            self.theta0 = np.full(self.p, t0) if self.p > 1 else t0
        elif k == "exponential":
            self.n = cfg.get_int("model", "n", 50, lo=1)
            self.theta0 = cfg.get_float("model", "theta0", 1.0, lo=0.0, lo_open=True)
            self.model = exp_model()
        elif k == "lad":
            self.n = cfg.get_int("model", "n", 50, lo=1)
            tail = cfg.get_str("model", "tail", "laplace", choices=("laplace", "pareto"))
            self.spec = LadSpec.laplace() if tail == "laplace" else LadSpec.pareto()
            self.theta0 = cfg.get_float("model", "theta0", 0.0)
            self.model = lad_model(self.spec, self.theta0)
        else:
            self.n = cfg.get_int("model", "n", 200, lo=3)
            A = cfg.get_float("model", "A", 1.0, lo=0.0, lo_open=True)
            sigma = cfg.get_float("model", "sigma", 1.0, lo=0.0, lo_open=True)
            self.variant = cfg.get_str("model", "variant", "known_A",
                                       choices=("known_A", "unknown_A"))
            self.theta0 = cfg.get_int("model", "theta0", self.n // 2, lo=1)
            if self.theta0 > self.n - 1:
                raise ConfigError(f"theta0 must lie in 1..{self.n - 1}", "model.theta0")
            self.spec = ChangePointSpec(self.n, A, sigma)
            self.model = cp_model(self.spec, self.variant, self.theta0)


# ----------------------------------------------------------------- commands

def cmd_rate(cfg, setup, out, threads):
    grid = cfg.grid("rate")
    mode = cfg.get_str("rate", "mode", "star", choices=("star", "plug_in"))
    method = cfg.get_str("rate", "method", "auto",
                         choices=("auto", "closed", "quadrature", "monte_carlo"))
    spec = EvalSpec(method=method, n=setup.n if setup.model.iid else 1)
    if setup.model.domain.is_discrete:
        grid = np.round(grid).astype(int)
    prof = rate_profile(setup.model, setup.theta0, grid, mode, spec, threads)
    prof.to_csv(os.path.join(out, "rate.csv"))
    flagged = sum(1 for p in prof.points if p.flag)
    lines = [f"command: rate", f"model: {setup.model.name}", f"mode: {mode}",
             f"points: {len(prof.points)}", f"boundary_flags: {flagged}",
             f"max_rate: {'%.17g' % float(np.max(prof.rates()))}"]
    return lines, EXIT_OK


def assemble_bound(cfg, setup):
    """BoundReport for the [bound] section; `form = model` picks the model's own assembly."""
    form = cfg.get_str("bound", "form", "model",
                       choices=("model", "exact", "discrete", "general", "smooth", "iid", "root_n"))
    rho = cfg.get_float("bound", "rho", 0.5, lo=0.0, hi=1.0, lo_open=True)
    s = cfg.get_float("bound", "s", 0.5, lo=0.0)
    if not rho < 1 or not s < 1:
        raise ConfigError("rho and s must be < 1", "bound.rho")
    if form == "root_n":
        return root_n_constants(
            cfg.get_int("bound", "p", 1, lo=1), rho, s,
            cfg.get_float("bound", "r", lo=0.0, lo_open=True),
            cfg.get_float("bound", "beta", lo=0.0, lo_open=True),
            cfg.get_float("bound", "a_r", lo=0.0, lo_open=True),
            cfg.get_float("bound", "C_r_beta", lo=0.0),
            cfg.get_int("bound", "n", setup.n, lo=1),
            cfg.get_float("bound", "nu0", 1.0, lo=1.0),
            cfg.get_float("bound", "nu1", 1.0, lo=1.0))
    if form in ("general", "smooth", "iid"):
        return omega_upper(
            form, rho, s, eps=cfg.get_float("bound", "eps", lo=0.0, lo_open=True),
            nu0=cfg.get_float("bound", "nu0", lo=0.0),
            nu1=cfg.get_float("bound", "nu1", 1.0, lo=1.0),
            entropy=cfg.get_float("bound", "entropy", None, lo=0.0),
            h_eps=cfg.get_float("bound", "h_eps"),
            lam_bar=cfg.get_float("bound", "lam_bar", 1e300, lo=0.0, lo_open=True),
            delta_bar=cfg.get_float("bound", "delta_bar", None, lo=0.0, lo_open=True),
            n=cfg.get_int("bound", "n", setup.n, lo=1), p=cfg.get_int("bound", "p", 1, lo=1))
    if setup.kind == "gaussian" and form in ("model", "exact"):
        val = gauss_sup_moment(s, setup.spec.rank, rho)
        return BoundReport("exact", rho, s, math.log(val), extras={"rank": setup.spec.rank})
    if setup.kind == "exponential" and form in ("model", "iid"):
        eps = cfg.get_float("bound", "eps", None, lo=0.0, lo_open=True)
        return exp_model_bound(setup.n, rho, s, eps, setup.theta0)
    if setup.kind == "change_point" and setup.variant == "known_A" and form in ("model", "discrete"):
        rep = cp_known_discrete_bound(setup.spec, setup.theta0, rho, s)
        c, geo = cp_known_geometric_bound(rho, setup.spec.A, setup.spec.sigma)
        extras = dict(rep.extras, geometric_C=c, geometric_bound=geo)
        return BoundReport(rep.form, rho, s, rep.log_omega_upper,
                           components=rep.components, extras=extras, notes=rep.notes)
    if setup.kind == "change_point" and setup.variant == "unknown_A" and form == "model":
        eps = cfg.get_float("bound", "eps", None, lo=0.0, lo_open=True)
        return cp_unknown_bound(setup.spec, setup.theta0, rho, s, eps)
    raise ConfigError(f"form {form} has no automatic assembly for this model",
                      "bound.form")


def cmd_bound(cfg, setup, out, threads):
    rep = assemble_bound(cfg, setup)
    with open(os.path.join(out, "bound.txt"), "w", newline="\n") as fh:
        fh.write(rep.to_text())
    rep.to_csv(os.path.join(out, "bound.csv"))
    return ["command: bound", f"model: {setup.model.name}"] + rep.to_text().splitlines(), EXIT_OK


def _mc_config(cfg, setup, seed, threads, quantities=None, section="mc"):
    q = quantities or cfg.get_names(section, "quantities", ("omega",),
                                    choices=("omega", "tail", "coverage", "moment_r"))
    dist = None
    if setup.kind == "change_point" and setup.variant == "unknown_A":
        dist = cp_d
    return McConfig(
        setup.model, setup.theta0, setup.n,
        reps=cfg.get_int(section, "reps", 1000, lo=100), seed=seed,
        rho=cfg.get_float(section, "rho", 0.5, lo=0.0, hi=1.0, lo_open=True),
        s=cfg.get_float(section, "s", 0.5 if "tail" in q else 0.0, lo=0.0, hi=1.0),
        quantities=tuple(q),
        r_grid=cfg.get_list(section, "r_grid", ()) if "tail" in q else (),
        z_grid=cfg.get_list(section, "z_grid", ()) if "coverage" in q else (),
        moment_r=cfg.get_list(section, "moment_r", (1.0, 2.0)) if "moment_r" in q else (1.0, 2.0),
        mu_star_lower=cfg.get_float(section, "mu_star_lower", None, lo=0.0, lo_open=True),
        distance=dist, threads=threads)


def cmd_simulate(cfg, setup, out, threads, seed):
    lines = ["command: simulate", f"model: {setup.model.name}", f"seed: {seed}",
             f"generator: {GENERATOR}"]
    code = EXIT_OK
    sweep = cfg.get_list("mc", "sweep_n", None)
    if sweep is not None:
        if setup.kind != "change_point":
            raise ConfigError("sweep_n applies to the change_point model only", "mc.sweep_n")
        tab = cp_loglog_sweep(setup.spec.A, setup.spec.sigma,
                              cfg.get_float("mc", "theta0_fraction", 0.5, lo=0.0, hi=1.0),
                              [int(x) for x in sweep], cfg.get_int("mc", "reps", 1000, lo=100),
                              seed, cfg.get_float("mc", "rho", 0.5, lo=0.0, hi=1.0, lo_open=True),
                              threads)
        tab.to_csv(os.path.join(out, "sweep.csv"))
        ratios = [r.ratio for r in tab.rows]
        lines.append(f"sweep_ratio_spread: {'%.17g' % (max(ratios) / min(ratios))}")
        for r in tab.rows:
            v = judge(f"known_moment(n={r.n})", r.known_estimate, r.known_stderr, r.known_bound)
            lines.append(v.line())
            if v.verdict == "FAIL":
                code = EXIT_FAIL
        return lines, code
    mc = _mc_config(cfg, setup, seed, threads)
    res = run(mc)
    res.to_csv(os.path.join(out, "mc.csv"))
    verdicts = []
    if cfg.has("bound"):
        rep = assemble_bound(cfg, setup)
        verdicts += compare(res, rep)
    if ("tail" in mc.quantities and mc.s > 0) or ("coverage" in mc.quantities
                                                   and mc.mu_star_lower is not None):
        verdicts += implication_checks(res)
    for v in verdicts:
        lines.append(v.line())
        if v.verdict == "FAIL":
            code = EXIT_FAIL
    return lines, code


def cmd_coverage(cfg, setup, out, threads, seed):
    """Replicated confidence sets: theta0 lies outside E(z) exactly when L(theta_tilde, theta0) > z."""
    z = cfg.get_list("coverage", "z_grid")
    mu_low = cfg.get_float("coverage", "mu_star_lower", 0.5, lo=0.0, lo_open=True)
    mc = McConfig(setup.model, setup.theta0, setup.n,
                  reps=cfg.get_int("coverage", "reps", 1000, lo=100), seed=seed,
                  rho=cfg.get_float("coverage", "rho", 0.5, lo=0.0, hi=1.0, lo_open=True),
                  s=0.0, quantities=("omega", "coverage"), z_grid=z, mu_star_lower=mu_low,
                  threads=threads)
    res = run(mc)
    omega = res.rows[0]
    if cfg.has("bound"):
        rep = assemble_bound(cfg, setup)
        if rep.s != 0.0:
            raise ConfigError("coverage needs a bound at s = 0", "bound.s")
        omega_val, source = rep.omega_upper, rep.form
    else:
        omega_val, source = omega.estimate, "empirical"
    code = EXIT_OK
    lines = ["command: coverage", f"model: {setup.model.name}", f"seed: {seed}",
             f"omega_source: {source}", f"omega: {'%.17g' % omega_val}"]
    path = os.path.join(out, "coverage.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("z,noncoverage,stderr,bound,reps\n")
        for zz, row in zip(z, res.rows[1:]):
            b = noncoverage_bound(omega_val, mc.rho, mu_low, zz)
            fh.write("%.17g,%.17g,%.17g,%.17g,%d\n" % (zz, row.estimate, row.stderr, b, mc.reps))
            v = judge(f"noncoverage(z={zz:g})", row.estimate, row.stderr, b)
            lines.append(v.line())
            if v.verdict == "FAIL":
                code = EXIT_FAIL
    return lines, code


# --------------------------------------------------------------------- main

def _parser():
    ap = argparse.ArgumentParser(prog="ratebound", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("rate", "bound", "simulate", "coverage"))
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--version", action="version", version=__version__)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.read(args.config)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "--seed")
        if args.threads < 1:
            raise ConfigError("threads must be positive", "--threads")
        # read the config seed even when overridden so the resolved key order is stable
        seed = cfg.get_int("mc", "seed", 0, lo=0)
        if args.seed is not None:
            seed = args.seed
        out = args.out or cfg.get_str("output", "dir", "ratebound_out")
        os.makedirs(out, exist_ok=True)
        setup = Setup(cfg)
        if args.command == "rate":
            lines, code = cmd_rate(cfg, setup, out, args.threads)
        elif args.command == "bound":
            lines, code = cmd_bound(cfg, setup, out, args.threads)
        elif args.command == "simulate":
            lines, code = cmd_simulate(cfg, setup, out, args.threads, seed)
        else:
            lines, code = cmd_coverage(cfg, setup, out, args.threads, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepConstraintError as exc:
        print(f"constraint violated: {exc}", file=sys.stderr)
        print(f"max_eps: {'%.17g' % exc.max_eps}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except RateboundError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg.resolved.setdefault("mc", {})["seed"] = seed
    with open(os.path.join(out, "config.resolved"), "w", newline="\n") as fh:
        fh.write(cfg.resolved_text())
    with open(os.path.join(out, "report.txt"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
