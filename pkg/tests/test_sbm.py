import math

import numpy as np
import pytest

from icsbm import oracles as closed
from icsbm.errors import QuadratureError, ValidationError
from icsbm.sbm import default_tol, icsbm_moment, sb_exp_moment, sbm_moment


def test_order_one_closed_form():
    v = sbm_moment(1, (2.0,), [[0.5, 1.0]])
    assert v.value == math.exp(-(0.25 + 1.0) * 2.0 / 4)
    assert v.error == 0.0


@pytest.mark.parametrize("k", [0.0, 1.0, 2.0])
def test_two_point_against_closed_integral(k):
    v = sbm_moment(2, (1.0, 1.0), [[k], [-k]])
    assert abs(v.value - closed.m2_closed(1.0, 1.0, k, -k)) <= 1e-6


def test_two_point_generic_times():
    v = sbm_moment(2, (1.3, 0.4), [[0.2, -0.5], [1.1, 0.3]])
    assert v.value == pytest.approx(closed.m2_closed(1.3, 0.4, [0.2, -0.5], [1.1, 0.3]), abs=1e-9)


@pytest.mark.parametrize("l", [2, 3, 4])
def test_tower_at_zero(l):
    for t in (0.5, 1.5):
        v = sbm_moment(l, (t,) * l, np.zeros((l, 1)))
        assert abs(v.value - closed.tower_value(l, t)) <= default_tol(l)
        assert v.error <= default_tol(l)


def test_symmetric_in_labels():
    a = sbm_moment(3, (1.0, 0.6, 0.8), [[0.3], [1.2], [-0.7]]).value
    b = sbm_moment(3, (0.8, 1.0, 0.6), [[-0.7], [0.3], [1.2]]).value
    assert a == pytest.approx(b, abs=1e-9)


def test_icsbm_values():
    assert icsbm_moment(1, (1.0,), [[0.0]]).value == pytest.approx(1.0, abs=1e-12)
    assert icsbm_moment(2, (1.0, 1.0), [[0.0], [0.0]]).value == pytest.approx(1.5, abs=1e-10)
    s, k = 1.7, 0.9
    assert icsbm_moment(1, (s,), [[k]]).value == pytest.approx(s * math.exp(-k * k * s / 2), abs=1e-10)
    assert icsbm_moment(2, (1.0, 0.7), [[0.8], [-0.3]]).value == pytest.approx(
        closed.mm2_closed(1.0, 0.7, 0.8, -0.3), abs=1e-9)


def test_icsbm_total_mass_is_size_biased_exponential():
    for l in (1, 2, 3):
        v = icsbm_moment(l, (1.0,) * l, np.zeros((l, 1))).value
        assert v == pytest.approx(sb_exp_moment(l, 1.0), abs=default_tol(l + 1))


def test_unreachable_tolerance():
    with pytest.raises(QuadratureError):
        sbm_moment(3, (1.0, 1.0, 1.0), [[3.0], [-1.0], [2.0]], tol=1e-30)


def test_validation():
    with pytest.raises(ValidationError):
        sbm_moment(2, (1.0,), [[0.0]])
    with pytest.raises(ValidationError):
        sbm_moment(2, (1.0, -1.0), [[0.0], [0.0]])
    with pytest.raises(ValidationError):
        sb_exp_moment(1, 0.0)
