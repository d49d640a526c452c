import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from kinetic_brw.stats import (
    EstimateWithError,
    Moments,
    NonFinite,
    chisquare_gof,
    count_homogeneity,
    energy_test,
    ks_two_sample,
    merge_all,
)

samples = arrays(float, st.integers(2, 60), elements=st.floats(-1e3, 1e3))


@given(samples, st.integers(1, 59))
def test_moment_merge_matches_direct(x, cut):
    cut = min(cut, x.size - 1)
    whole = Moments.of(x[:, None]).estimates()[0]
    merged = merge_all([Moments.of(x[:cut, None]), Moments.of(x[cut:, None])]).estimates()[0]
    direct = EstimateWithError.from_samples(x)
    assert np.isclose(merged.mean, direct.mean, atol=1e-9)
    assert np.isclose(merged.std_error, direct.std_error, rtol=1e-6, atol=1e-9)
    assert np.isclose(whole.std_error, direct.std_error, rtol=1e-9, atol=1e-12)


def test_complex_errors_are_componentwise(rng):
    z = rng.normal(size=5000) + 2j * rng.normal(size=5000)
    e = EstimateWithError.from_samples(z)
    assert np.isclose(e.std_error_imag / e.std_error, 2.0, rtol=0.1)
    assert e.se == pytest.approx(np.hypot(e.std_error, e.std_error_imag))


def test_non_finite_samples_raise():
    with pytest.raises(NonFinite):
        EstimateWithError.from_samples([1.0, np.inf])


def test_energy_test_power_and_size(rng):
    a = rng.normal(size=(300, 3))
    b = rng.normal(size=(300, 3))
    c = rng.normal(size=(300, 3)) + 0.5
    assert energy_test(a, b, rng=rng).p_value > 0.01
    assert energy_test(a, c, rng=rng).p_value < 0.01


def test_chisquare_and_homogeneity(rng):
    x = rng.geometric(0.4, 5000)
    p = np.r_[0.0, 0.4 * 0.6 ** np.arange(30)]
    assert chisquare_gof(x, p).p_value > 1e-3
    assert count_homogeneity(x, rng.geometric(0.4, 5000)).p_value > 1e-3
    assert count_homogeneity(x, rng.geometric(0.3, 5000)).p_value < 1e-3


def test_ks_identical_samples():
    x = np.arange(10.0)
    assert ks_two_sample(x, x[::-1]).p_value == 1.0
