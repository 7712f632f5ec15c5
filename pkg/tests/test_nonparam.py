import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from survdiag.nonparam import cumhaz_of_cs, kaplan_meier


def brute_km(times, status, t):
    """Product over distinct event times <= t of (1 - d_j / n_j)."""
    s = 1.0
    for u in sorted(set(x for x, d in zip(times, status) if d == 1)):
        if u > t:
            break
        n_risk = sum(1 for x in times if x >= u)
        d = sum(1 for x, e in zip(times, status) if x == u and e == 1)
        s *= 1 - d / n_risk
    return s


def test_hand_computed_product_limit():
    km = kaplan_meier([1, 2, 3], [1, 0, 1])
    assert km.points == [(1.0, pytest.approx(2 / 3)), (3.0, 0.0)]
    np.testing.assert_array_equal(km.n_risk, [3, 1])
    assert km(2.5) == pytest.approx(2 / 3)
    assert km(0.5) == 1.0


def test_ties():
    km = kaplan_meier([1, 1, 2], [1, 1, 1])
    assert km(1.0) == pytest.approx(1 / 3)
    np.testing.assert_array_equal(km.n_event, [2, 1])


def test_all_censored_is_flat():
    km = kaplan_meier([1, 2, 3], [0, 0, 0])
    assert km.times.size == 0
    assert km(2.0) == 1.0


def test_beyond_last_observation_is_undefined():
    km = kaplan_meier([1, 2, 3], [1, 1, 0])
    assert math.isnan(km(3.5))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.integers(0, 1)), min_size=1, max_size=5))
def test_matches_brute_force_on_small_data(rows):
    times = [float(t) for t, _ in rows]
    status = [s for _, s in rows]
    km = kaplan_meier(times, status)
    for t in np.arange(0.5, max(times) + 0.01, 0.5):
        assert km(t) == pytest.approx(brute_km(times, status, t), abs=1e-12)
    assert np.all(np.diff(km.survival) <= 0)


def test_cumhaz_of_exponential_residuals_follows_identity():
    rng = np.random.default_rng(1)
    cs = rng.standard_exponential(10_000)
    curve = cumhaz_of_cs(cs, np.ones_like(cs))
    keep = curve.residuals <= 2.0
    assert np.max(np.abs(curve.cumhaz[keep] - curve.residuals[keep])) < 0.05


def test_single_event_jump():
    n = 5
    cs = np.array([0.2, 0.5, 0.9, 1.3, 2.0])
    status = np.array([0, 1, 0, 0, 0])
    curve = cumhaz_of_cs(cs, status)
    np.testing.assert_allclose(curve.residuals, [0.5])
    np.testing.assert_allclose(curve.cumhaz, [-math.log(1 - 1 / (n - 1))])


def test_single_event_among_all_at_risk():
    n = 4
    curve = cumhaz_of_cs(np.array([0.1, 0.2, 0.3, 0.4]), np.array([1, 0, 0, 0]))
    np.testing.assert_allclose(curve.cumhaz, [-math.log(1 - 1 / n)])


def test_all_censored_residuals_give_zero_curve():
    curve = cumhaz_of_cs(np.array([0.1, 0.5]), np.array([0, 0]))
    assert curve.residuals.size == 0 and not curve.truncated


def test_truncation_flag():
    curve = cumhaz_of_cs(np.array([0.1, 0.5]), np.array([1, 1]))
    assert curve.truncated
    assert np.all(np.isfinite(curve.cumhaz))


def test_rejects_other_residual_kinds():
    from survdiag.residuals import ResidualSet
    with pytest.raises(ValueError):
        cumhaz_of_cs(ResidualSet("usp", np.array([0.5]), np.array([1])))
