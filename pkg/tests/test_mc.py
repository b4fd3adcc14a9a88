import math

import numpy as np
import pytest

from ratebound.bounds import omega_upper
from ratebound.core import ContrastModel, ParameterDomain
from ratebound.errors import CapabilityError, DomainError
from ratebound.mc import (GENERATOR, McConfig, McResult, McRow, compare, cp_loglog_sweep,
                          implication_checks, judge, median_of_means, rep_rng, run)
from ratebound.models import GaussianLinearSpec, exp_model, gaussian_linear_model

GAUSS = gaussian_linear_model(GaussianLinearSpec(np.ones((5, 1)), 1.0))
EXP = exp_model()


def test_streams_are_keyed_by_seed_and_index():
    a = rep_rng(7, 3).random(4)
    assert np.array_equal(a, rep_rng(7, 3).random(4))
    assert not np.array_equal(a, rep_rng(7, 4).random(4))
    assert not np.array_equal(a, rep_rng(8, 3).random(4))
    assert "Philox" in GENERATOR


def test_gaussian_estimand():
    # rho mu* L = chi2_1 / 8 pathwise; E exp = (1 - 1/4)^{-1/2}
    res = run(McConfig(GAUSS, np.zeros(1), 5, reps=20000, seed=11))
    row = res.row("omega(rho=0.5,s=0)")
    assert abs(row.estimate - (1 - 0.25) ** -0.5) <= 4 * row.stderr
    var = (1 - 0.5) ** -0.5 - (1 - 0.25) ** -1
    assert row.stderr == pytest.approx(math.sqrt(var / 20000), rel=0.15)
    assert np.allclose(0.5 * 0.5 * res.samples["L"], res.samples["log_omega"])


def test_tail_at_zero_counts_every_untied_replication():
    res = run(McConfig(EXP, 1.0, 20, reps=200, seed=1, s=0.5, quantities=("tail",),
                       r_grid=(0.0,)))
    assert res.row("tail(r=0)").estimate == 1.0


def test_run_is_deterministic_across_threads():
    cfg = dict(model=EXP, theta0=1.0, n=30, reps=300, seed=5, s=0.3,
               quantities=("omega", "tail", "coverage", "moment_r"), r_grid=(0.5, 2.0),
               z_grid=(1.0,))
    a = run(McConfig(**cfg)).to_csv()
    assert a == run(McConfig(**cfg)).to_csv()
    assert a == run(McConfig(**cfg, threads=4)).to_csv()
    assert a.splitlines()[0] == "quantity,estimate,stderr,reps,seed,dominance,flag"


def test_config_validation():
    with pytest.raises(DomainError):
        McConfig(EXP, 1.0, 10, reps=99)
    with pytest.raises(DomainError):
        McConfig(EXP, 1.0, 10, quantities=("tail",))
    with pytest.raises(DomainError):
        McConfig(EXP, 1.0, 10, rho=1.0)
    with pytest.raises(DomainError):
        McConfig(EXP, 1.0, 10, quantities=("nonsense",))


def test_nested_monte_carlo_is_refused():
    m = ContrastModel("no_rate", 1, ParameterDomain.box([-5.0], [5.0]),
                      lambda y, t: -float(np.sum((y - t) ** 2)),
                      lambda t, n, rng: t + rng.standard_normal(n), lambda t: 0.5)
    with pytest.raises(CapabilityError):
        run(McConfig(m, 0.0, 10, reps=100))


def test_verdict_logic():
    assert judge("q", 1.15, 0.001, 0.5).verdict == "FAIL"
    assert judge("q", 1.15, 0.001, 2.0).verdict == "PASS"
    assert judge("q", 1.15, 0.001, 2.0, flagged=True).verdict == "WARN"
    res = McResult((McRow("x", 1.15, 0.001, 100, 0, 0.8, "dominance"),))
    assert compare(res, {"x": 0.5})[0].verdict == "WARN"
    assert compare(res, {"x": 0.5})[0].line().startswith("WARN x:")


def test_compare_against_report():
    res = run(McConfig(GAUSS, np.zeros(1), 5, reps=2000, seed=3))
    good = omega_upper("discrete", 0.5, 0.0, discrete_sum=10.0)
    assert compare(res, good)[0].verdict == "PASS"
    bad = omega_upper("discrete", 0.5, 0.0, discrete_sum=1.0001)
    assert compare(res, bad)[0].verdict == "FAIL"
    with pytest.raises(DomainError):
        compare(res, omega_upper("discrete", 0.4, 0.0, discrete_sum=10.0))


def test_heavy_tail_rows_get_median_of_means():
    def heavy(tt, y):
        return 40.0 * float(np.max(y))
    res = run(McConfig(EXP, 1.0, 20, reps=400, seed=2, exp_moments={"heavy": heavy}))
    row = res.row("heavy")
    assert row.flag == "dominance" and row.dominance > 0.5
    mom = res.row("heavy:median_of_means")
    assert math.isnan(mom.stderr) and mom.estimate > 0
    assert median_of_means(np.arange(64.0), blocks=32) == pytest.approx(31.5)


def test_exponential_implications_hold():
    res = run(McConfig(EXP, 1.0, 50, reps=4000, seed=9, s=0.5, quantities=("omega", "tail",
                       "coverage"), r_grid=(0.5, 1.0, 2.0, 4.0), z_grid=(0.5, 1.0, 2.0, 4.0),
                       mu_star_lower=0.5))
    checks = implication_checks(res)
    assert len(checks) == 8 and all(c.verdict == "PASS" for c in checks)
    with pytest.raises(DomainError):
        implication_checks(run(McConfig(EXP, 1.0, 50, reps=100, quantities=("coverage",),
                                        z_grid=(1.0,), mu_star_lower=0.9)))


def test_exponential_estimator_is_root_n():
    res = run(McConfig(EXP, 2.0, 10 ** 4, reps=10 ** 4, seed=21, quantities=("moment_r",)))
    z = math.sqrt(10 ** 4) * (res.samples["theta_tilde"].ravel() / 2.0 - 1.0)
    assert abs(z.mean()) <= 4 * z.std(ddof=1) / math.sqrt(z.size)
    assert z.var(ddof=1) == pytest.approx(1.0, rel=0.1)


def test_sweep_noiseless_limit_and_validation():
    tab = cp_loglog_sweep(50.0, 1.0, 0.5, [100, 200], reps=100, seed=0)
    for r in tab.rows:
        assert r.estimate == 1.0 and r.moment1 == 0.0 and r.known_estimate == 1.0
    with pytest.raises(DomainError):
        cp_loglog_sweep(1.0, 1.0, 0.5, [200, 100], reps=100)
    assert tab.to_csv().splitlines()[0].startswith("n,theta0,estimate,stderr,estimate_over_log_n")


def test_sweep_threads_match():
    a = cp_loglog_sweep(1.0, 1.0, 0.5, [100, 300], reps=200, seed=4).to_csv()
    b = cp_loglog_sweep(1.0, 1.0, 0.5, [100, 300], reps=200, seed=4, threads=4).to_csv()
    assert a == b
