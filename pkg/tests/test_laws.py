import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from kinetic_brw import charfn, laws
from kinetic_brw.group import default_grid
from oracles import stable_tail_series


@pytest.mark.parametrize("law", [laws.gaussian_law(0.7), laws.stable_law(1.5, 1.0), laws.stable_law(0.5, 0.3), laws.stable_law(1.0)])
def test_sampler_matches_char_fn(law):
    gap, budget = laws.sampler_cf_gap(law, default_grid(), 100_000, np.random.default_rng(4))
    assert gap <= budget


def test_positive_stable_laplace_transform(rng):
    # E exp(-s A) = exp(-s^beta) for the standard positive beta-stable law
    for beta in (0.25, 0.5, 0.9):
        a = laws.positive_stable(beta, rng, 200_000)
        for s in (0.5, 1.0, 3.0):
            emp = np.exp(-s * a)
            assert abs(emp.mean() - np.exp(-(s**beta))) < 4 * emp.std() / np.sqrt(a.size)
    assert np.all(laws.positive_stable(1.0, rng, 5) == 1.0)


def test_half_stable_is_levy(rng):
    # beta = 1/2: A = 1 / (2 G^2) with G standard normal
    a = laws.positive_stable(0.5, rng, 50_000)
    assert stats.kstest(1 / np.sqrt(2 * a), stats.halfnorm.cdf).pvalue > 1e-3


def test_stable_norm_tail_matches_series(rng):
    x = np.linalg.norm(laws.isotropic_stable(0.5, 1.0, rng, 400_000), axis=1)
    for t in (3.0, 10.0, 100.0):
        p = stable_tail_series(t, 0.5)[0]
        assert abs((x > t).mean() - p) < 4 * np.sqrt(p * (1 - p) / x.size)


@given(st.floats(0.1, 2.0), st.floats(0.0, 5.0))
def test_char_fn_constructors_at_zero_and_range(alpha, r):
    for phi in (charfn.stable(alpha, 1.0), charfn.gaussian(alpha)):
        assert phi(np.zeros(3)) == 1
        v = phi(np.array([0.0, 0.0, r]))
        assert 0 <= v.real <= 1 and v.imag == 0


def test_missing_sampler(rng):
    law = laws.VelocityLaw(charfn.gaussian(), None)
    with pytest.raises(laws.MissingSampler):
        law.sample(rng, 3)
