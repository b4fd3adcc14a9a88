import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratebound.errors import CapabilityError, DivergenceError, ExponentialMomentError
from ratebound.models import (GaussianLinearSpec, LadSpec, exp_model, exp_mu_star, exp_rate,
                              gaussian_contrast_model, gaussian_linear_model, lad_model,
                              lad_rate)
from ratebound.rate import (EvalSpec, evaluate_log_mgf, identity_check, legendre,
                            log_integral_exp, log_mgf, mu_domain_probe, rate_profile)

EXP = exp_model()


def gauss_contrast(M, D2):
    return gaussian_contrast_model(lambda t, t0: M * abs(t - t0), lambda t, t0: D2 * abs(t - t0))


def test_closed_value_and_identity():
    assert log_mgf(EXP, 0.5, 2.0, 1.0) == pytest.approx(0.058891, abs=1e-6)
    assert log_mgf(EXP, 0.7, 1.0, 1.0) == 0.0


def test_monte_carlo_route_agrees_with_closed():
    est = evaluate_log_mgf(EXP, 0.5, 2.0, 1.0, EvalSpec("monte_carlo", mc_samples=10 ** 6, seed=3))
    assert abs(est.value - exp_rate(0.5, 1.0)) <= 3 * est.stderr
    assert not est.flagged


def test_quadrature_route_agrees_with_closed_grid():
    for mu in (0.1, 0.3, 0.5, 0.9, 1.7):
        for u in (-0.5, -0.2, 0.4, 1.0, 5.0):
            if 1 + mu * u <= 0:
                continue
            q = log_mgf(EXP, mu, 1 + u, 1.0, EvalSpec("quadrature"))
            assert q == pytest.approx(exp_rate(mu, u), abs=1e-8)


def test_iid_scaling():
    assert log_mgf(EXP, 0.5, 2.0, 1.0, EvalSpec(n=7)) == pytest.approx(7 * exp_rate(0.5, 1.0))


def test_divergent_quadrature_returns_minus_inf():
    # mu u < -1: E exp{mu L} diverges for the exponential law
    assert log_mgf(EXP, 3.0, 0.5, 1.0, EvalSpec("quadrature")) == -math.inf


def test_missing_route_is_a_capability_error():
    m = gauss_contrast(1.0, 1.0)
    with pytest.raises(CapabilityError):
        log_mgf(EXP.__class__(**{**EXP.__dict__, "obs_law": None, "closed_rate": None,
                                 "per_obs_contrast": None}), 0.5, 2.0, 1.0,
                EvalSpec("quadrature"))
    assert log_mgf(m, 0.5, 1.0, 0.0, EvalSpec("quadrature")) == pytest.approx(0.5 - 0.125)


def test_mu_domain_probe_examples():
    assert mu_domain_probe(EXP, 2.0, 1.0).upper == math.inf
    up = mu_domain_probe(EXP, 0.5, 1.0).upper
    assert 2.0 <= up <= 2.0 + 2.0 / 2 ** 12
    assert mu_domain_probe(gauss_contrast(1.0, 1.0), 1.0, 0.0).upper == math.inf


def test_mu_domain_probe_reports_violation():
    heavy = gaussian_contrast_model(lambda t, t0: 1.0, lambda t, t0: 1.0)
    heavy = heavy.__class__(**{**heavy.__dict__, "closed_rate": lambda mu, t, t0: -math.inf})
    with pytest.raises(ExponentialMomentError):
        mu_domain_probe(heavy, 1.0, 0.0)


def test_legendre_examples():
    pt = legendre(gauss_contrast(1.0, 1.0), 1.0, 0.0)
    assert pt.mu == pytest.approx(1.0, abs=1e-9) and pt.rate == pytest.approx(0.5, abs=1e-12)
    assert legendre(EXP, 2.0, 1.0).mu == pytest.approx(0.442695, abs=5e-7)
    assert legendre(EXP, 1.0, 1.0).rate == 0.0


@pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 3.0, 10.0])
def test_exponential_mu_star_cross_check(u):
    assert legendre(EXP, 1 + u, 1.0).mu == pytest.approx(exp_mu_star(u), abs=1e-6)


@pytest.mark.parametrize("M", [0.3, 1.0, 4.0])
def test_gaussian_likelihood_limit(M):
    pt = legendre(gauss_contrast(M, 2 * M), 1.0, 0.0)
    assert pt.mu == pytest.approx(0.5, abs=1e-9)
    assert pt.rate == pytest.approx(M / 4, abs=1e-9)


def test_boundary_flag_when_domain_is_finite():
    # theta < theta0 caps mu at 1/|u|; the maximizer stays interior here
    pt = legendre(EXP, 0.5, 1.0)
    assert pt.flag == "" and 0 < pt.mu < 2


def test_rate_profile_examples():
    prof = rate_profile(EXP, 1.0, [1.0, 2.0], mode="plug_in")
    assert list(prof.rates()) == [0.0, pytest.approx(0.5 * math.log(9 / 8), abs=1e-15)]
    g = gaussian_linear_model(GaussianLinearSpec(np.eye(1), 1.0))
    assert rate_profile(g, 0.0, [2.0]).rates()[0] == pytest.approx(0.5, abs=1e-9)
    single = rate_profile(EXP, 1.0, [1.0])
    assert len(single.points) == 1 and single.rates()[0] == 0.0
    assert prof.to_csv().splitlines()[0] == "theta,mu,rate,method"


def test_rate_profile_threads_match():
    grid = np.linspace(0.3, 5, 13)
    a = rate_profile(EXP, 1.0, grid, threads=1).to_csv()
    b = rate_profile(EXP, 1.0, grid, threads=4).to_csv()
    assert a == b


def test_identity_check_routes():
    r, se = identity_check(EXP, 2.0, 1.0)
    assert r == 0.0 and se == 0.0
    r, se = identity_check(EXP, 2.0, 1.0, EvalSpec("monte_carlo", mc_samples=10 ** 6, seed=5))
    assert r < 4 * se
    r, _ = identity_check(gauss_contrast(1.0, 1.0), 1.0, 0.0, EvalSpec("quadrature"))
    assert r < 1e-8


def test_lad_quadrature_route_matches_identity():
    spec = LadSpec.pareto()
    m = lad_model(spec)
    for t in (0.5, 2.0):
        mu = float(spec.lam(t))
        q = log_mgf(m, mu, t, 0.0, EvalSpec("quadrature"))
        assert q == pytest.approx(lad_rate(spec, mu, t), abs=1e-8)


def test_log_integral_exp_gaussian_and_divergence():
    v = log_integral_exp(lambda x: -0.5 * np.asarray(x) ** 2, -math.inf, math.inf)
    assert v == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-10)
    with pytest.raises(DivergenceError, match="right"):
        log_integral_exp(lambda x: 0.0 * np.asarray(x), 0.0, math.inf)


@given(st.floats(-0.9, 8), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_rate_is_concave_in_mu(u, m1, m2):
    if 1 + max(m1, m2) * u <= 0:
        return
    mid = exp_rate(0.5 * (m1 + m2), u)
    assert mid >= 0.5 * exp_rate(m1, u) + 0.5 * exp_rate(m2, u) - 1e-9


@given(st.floats(0.05, 8).filter(lambda t: abs(t - 1) > 1e-3), st.floats(0.01, 3))
def test_legendre_dominance(theta, mu):
    pt = legendre(EXP, theta, 1.0)
    assert pt.rate >= 0
    val = log_mgf(EXP, mu, theta, 1.0)
    if math.isfinite(val):
        assert pt.rate >= val - 1e-12


@given(st.floats(0.01, 5))
def test_zero_rate_at_truth(mu):
    assert log_mgf(EXP, mu, 1.0, 1.0, EvalSpec("quadrature")) == 0.0
