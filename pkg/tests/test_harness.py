import math

import numpy as np
import pytest

from icsbm.errors import ValidationError
from icsbm.harness import compare_to_moments, fit_exponent, fit_exponent_samples, rescale, sb_exp_limit, sb_exp_test
from icsbm.rng import stream
from icsbm.stats import bootstrap_ratio, mean_estimate


def test_rescale_floor_buckets():
    pops = [{(0,): 1}, {(-1,): 1, (1,): 1}, {(-3,): 2, (2,): 1, (3,): 1}]
    X = rescale(pops, 2, 1.0, 2.0)
    # side sqrt(4) = 2: -3 -> -2, 2 -> 1, 3 -> 1
    assert X.masses == {(-2,): 1.0, (1,): 1.0}
    assert X.total_mass == 2.0
    with pytest.raises(ValidationError):
        rescale(pops, 2, 2.0, 1.0)


def test_sb_exp_limits():
    assert sb_exp_limit(1, 1.0) == 1.0
    assert sb_exp_limit(2, 1.0) == 1.5
    assert sb_exp_limit(3, 2.0) == 8 * 24 / 8


def test_sb_exp_test_on_exact_law():
    # size-biased exponential with mean sigma_p^2 = 1: Gamma(2, 1/2)
    x = stream(1, "t").gamma(2.0, 0.5, size=40000)
    rep = sb_exp_test(x, 1.0, rng=stream(2, "t"), B=200)
    assert rep.passed
    assert "limits" in rep.note
    with pytest.raises(ValidationError):
        sb_exp_test(x[:10], 1.0)


def test_fit_recovers_power():
    R = np.array([2, 4, 8, 16, 32])
    f = fit_exponent(R, 3.0 * R**4.0)
    assert f.slope == pytest.approx(4.0, abs=1e-12)
    rng = np.random.default_rng(0)
    rows = (R**2.0)[None, :] * rng.gamma(4.0, 0.25, size=(3000, 1))
    g = fit_exponent_samples(R, rows, stream(3, "t"), B=200)
    assert g.slope == pytest.approx(2.0, abs=1e-9)
    assert g.se > 0


def test_fit_needs_scale_range():
    with pytest.raises(ValidationError):
        fit_exponent([4, 5, 6, 7], [1, 2, 3, 4])
    with pytest.raises(ValidationError):
        fit_exponent([4, 8, 16], [1, 2, 3])


def test_fit_excludes_nonpositive():
    f = fit_exponent([1, 2, 4, 8, 16], [0.0, 4, 16, 64, 256])
    assert f.excluded == [1.0]
    assert f.slope == pytest.approx(2.0)


def test_compare_with_amplitude():
    targets = [1.0, 2.0, 4.0]
    est = [(2.5 * t, 0.1) for t in targets]
    rep = compare_to_moments(est, targets, fit_amplitude=True)
    assert rep.amplitude == pytest.approx(2.5)
    assert rep.passed
    rep = compare_to_moments(est, targets)
    assert not rep.passed


def test_compare_degenerate_variance():
    assert compare_to_moments([(1.0, 0.0)], [1.0]).passed
    with pytest.raises(ValidationError):
        compare_to_moments([(1.5, 0.0)], [1.0])


def test_bootstrap_se_close_to_plain():
    x = stream(4, "t").normal(size=5000)
    a = mean_estimate(x, stream(5, "t"), 500)
    b = mean_estimate(x, B=0)
    assert a.se == pytest.approx(b.se, rel=0.15)
    num, den = x**2, np.ones_like(x)
    r = bootstrap_ratio(num, den, stream(6, "t"), 300)
    assert r.value == pytest.approx(np.mean(x**2))
    assert math.isfinite(r.se)
