import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratebound._numerics import (bisect_root, exp_moment_stats, golden_max, log_mean_exp,
                                 parabolic_polish, quad, unit_ball_volume)
from ratebound.errors import QuadratureError


@given(st.floats(-5, 5))
def test_golden_max_finds_parabola_vertex(c):
    x, fx = golden_max(lambda t: -(t - c) ** 2, -10, 10, tol=1e-10)
    assert abs(x - c) < 1e-8 and fx <= 0


def test_polish_recovers_digits():
    f = lambda t: -(t - 0.3) ** 2
    x, fx = golden_max(f, 0, 1, tol=1e-4)
    x2, _ = parabolic_polish(f, x, fx, 0, 1, 1e-3)
    assert abs(x2 - 0.3) < 1e-12


def test_bisect_root():
    assert bisect_root(lambda t: t * t - 2, 0, 2, tol=1e-15) == pytest.approx(math.sqrt(2), abs=1e-14)


def test_log_domain_stats():
    x = np.array([0.0, math.log(3.0)])
    assert log_mean_exp(x) == pytest.approx(math.log(2.0))
    lm, rel, dom = exp_moment_stats(np.array([1000.0, 1000.0]))
    assert lm == pytest.approx(1000.0) and rel == 0 and dom == 0.5


def test_quad_error_is_raised():
    with pytest.raises(QuadratureError):
        quad(lambda t: math.sin(1.0 / t), 1e-6, 1, rtol=1e-13, limit=5)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0, abs=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
