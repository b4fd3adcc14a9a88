import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratebound.core import Dataset, FitOptions, ParameterDomain, contrast_diff, fit
from ratebound.errors import DomainError, FitError
from ratebound.models import (ChangePointSpec, GaussianLinearSpec, LadSpec, cp_model,
                              exp_model, gaussian_linear_model, lad_model)


def test_domain_validation():
    with pytest.raises(DomainError):
        ParameterDomain.box([1.0], [0.0])
    with pytest.raises(DomainError):
        ParameterDomain.discrete_range(5, 2)
    with pytest.raises(DomainError):
        ParameterDomain.finite_set([])
    box = ParameterDomain.box([0.0], [math.inf])
    assert box.contains(1.0) and not box.contains(0.0) and not box.contains(-1.0)
    assert ParameterDomain.box([0.0], [1.0], closed=True).contains(0.0)
    r = ParameterDomain.discrete_range(1, 9)
    assert r.contains(3) and not r.contains(3.5) and not r.contains(10)
    assert list(r.enumerate()) == list(range(1, 10))


def test_dataset_rejects_bad_input():
    with pytest.raises(DomainError):
        Dataset([1.0, math.nan])
    with pytest.raises(DomainError):
        Dataset(np.array([]))


def test_dataset_csv_roundtrip(tmp_path):
    y = Dataset([0.1, 1.0 / 3.0, -2.5e-17, 12345.678])
    p = tmp_path / "y.csv"
    y.write_csv(p)
    z = Dataset.read_csv(p)
    assert np.array_equal(y.observations, z.observations)
    assert p.read_bytes().count(b"\r") == 0


def test_contrast_diff_examples():
    g = gaussian_linear_model(GaussianLinearSpec(np.eye(1), 1.0))
    assert contrast_diff(g, [1.0], 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    e = exp_model()
    assert contrast_diff(e, [1.0, 2.0], 1.0, 2.0) == pytest.approx(3 - 2 * math.log(2), abs=1e-12)
    assert contrast_diff(e, [1.0, 2.0], 1.5, 1.5) == 0.0
    with pytest.raises(DomainError):
        contrast_diff(e, [1.0], -1.0, 1.0)


def test_fit_examples():
    assert fit(exp_model(), [1.0, 2.0, 3.0, 2.0]) == 0.5
    y = np.array([2.0, 2.0, 2.0, 0.0, 0.0, 0.0])
    assert fit(cp_model(ChangePointSpec(6, 2.0, 1.0)), y) == 3
    assert fit(lad_model(LadSpec.laplace()), [0.0, 1.0, 5.0]) == 1.0


def test_discrete_ties_take_smallest_index():
    m = cp_model(ChangePointSpec(5, 1.0, 1.0))
    # the profile A cs - A^2 k/2 is flat when every observation equals A/2
    assert fit(m, np.full(5, 0.5)) == 1


@given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=30))
def test_generic_optimizer_matches_closed_form(ys):
    m = exp_model()
    y = np.array(ys)
    closed = fit(m, y)
    generic = fit(m, y, FitOptions(use_closed=False, tol=1e-12))
    assert abs(generic - closed) <= 1e-6 * max(1.0, closed)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=25))
def test_lad_generic_fit_attains_the_median_objective(ys):
    m = lad_model(LadSpec.laplace())
    y = np.array(ys)
    g = fit(m, y, FitOptions(use_closed=False, tol=1e-12))
    best = m.total_contrast(y, float(np.median(y)))
    assert m.total_contrast(y, g) >= best - 1e-6 * (1 + abs(best))


def test_gaussian_coordinate_fit_matches_least_squares():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 3))
    spec = GaussianLinearSpec(X, 1.0)
    m = gaussian_linear_model(spec)
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.standard_normal(30)
    a = fit(m, y)
    b = fit(m, y, FitOptions(use_closed=False, tol=1e-12, max_sweeps=2000))
    assert np.max(np.abs(a - b)) < 1e-6


def test_fit_error_carries_grid():
    from ratebound.core import ContrastModel
    m = ContrastModel("ramp", 1, ParameterDomain.box([-math.inf], [math.inf]),
                      lambda y, t: t, lambda t, n, r: np.zeros(n), lambda t: 0.5)
    with pytest.raises(FitError) as exc:
        fit(m, [0.0])
    assert exc.value.grid is not None


@given(st.lists(st.floats(0.1, 10.0), min_size=2, max_size=10),
       st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5))
def test_contrast_telescopes(ys, a, b, c):
    m = exp_model()
    y = np.array(ys)
    lhs = contrast_diff(m, y, a, b) + contrast_diff(m, y, b, c)
    assert lhs == pytest.approx(contrast_diff(m, y, a, c), abs=1e-10 * len(ys) * (1 + abs(lhs)))
    assert contrast_diff(m, y, a, b) == -contrast_diff(m, y, b, a)


@given(st.lists(st.floats(0.1, 10.0), min_size=1, max_size=20), st.floats(0.1, 5))
def test_per_observation_sum(ys, theta):
    m = exp_model()
    y = np.array(ys)
    total = m.total_contrast(y, theta)
    assert total == pytest.approx(float(np.sum(m.per_obs_contrast(y, theta))),
                                  abs=1e-10 * len(ys) * (1 + abs(total)))
