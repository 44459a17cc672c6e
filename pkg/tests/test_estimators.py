import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvplace.estimators import (MleResult, OrientationHistogram, expected_orientations,
                                fit_lambda, model_pmf, sample_histogram, simulate_orientation_counts,
                                stirling2, subtract_control, systematic_uncertainty,
                                truncation_for)


@pytest.mark.parametrize("n,l,value", [
    (0, 0, 1), (4, 2, 7), (5, 3, 25), (10, 4, 34105), (6, 6, 1), (6, 0, 0), (7, 5, 140),
])
def test_stirling_known_values(n, l, value):
    assert stirling2(n, l) == value


@given(st.integers(1, 60), st.integers(1, 8))
def test_stirling_recurrence(n, l):
    if l > n:
        return
    assert stirling2(n, l) == l * stirling2(n - 1, l) + stirling2(n - 1, l - 1)


def test_stirling_exact_for_large_n():
    # S(n, 2) = 2^(n-1) - 1, beyond float precision
    assert stirling2(200, 2) == 2 ** 199 - 1


def test_pmf_closed_form_single_orientation():
    lam = 1.0
    assert model_pmf(lam, 1) == pytest.approx(4 * math.exp(-lam) * (math.exp(lam / 4) - 1), rel=1e-12)
    assert model_pmf(lam, 0) == pytest.approx(math.exp(-lam), rel=1e-12)


@given(st.floats(0.0, 60.0))
def test_pmf_normalised(lam):
    p = model_pmf(lam)
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(p >= 0)


@given(st.floats(0.01, 40.0))
def test_truncation_adequate(lam):
    n = truncation_for(lam)
    full = model_pmf(lam, truncation=n + 50)
    np.testing.assert_allclose(model_pmf(lam), full, atol=1e-11)


@given(st.floats(0.0, 30.0), st.floats(0.01, 5.0))
def test_expected_orientations_increasing(lam, step):
    assert expected_orientations(lam + step) > expected_orientations(lam)


def test_expected_orientations_limits():
    assert expected_orientations(0.0) == 0.0
    assert expected_orientations(200.0) == pytest.approx(4.0)


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_pmf_against_sampler(lam):
    rng = np.random.default_rng(7)
    n = 200_000
    obs = np.bincount(simulate_orientation_counts(lam, n, rng), minlength=5) / n
    p = model_pmf(lam)
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(obs - p) <= 4 * se + 1e-12)


def test_fit_all_empty_sites():
    res = fit_lambda([121, 0, 0, 0, 0])
    assert res.lambda_hat == 0.0
    assert res.ci95[0] == 0.0 and 0 < res.ci95[1] < 0.05
    assert "one_sided" in res.flags


def test_fit_all_saturated_sites():
    res = fit_lambda([0, 0, 0, 0, 121])
    assert "at_ceiling" in res.flags
    assert res.ci95[1] == 100.0


@given(st.lists(st.integers(0, 40), min_size=5, max_size=5))
def test_fit_scale_invariance(counts):
    """Doubling every count keeps the estimate and narrows the interval."""
    counts = np.array(counts)
    if counts.sum() == 0 or counts[1:].sum() == 0 or counts[:4].sum() == 0:
        return
    a = fit_lambda(counts)
    b = fit_lambda(2 * counts)
    assert b.lambda_hat == pytest.approx(a.lambda_hat, rel=1e-5, abs=1e-6)
    assert b.ci95[1] - b.ci95[0] <= a.ci95[1] - a.ci95[0] + 1e-9


def test_fit_is_maximum():
    counts = np.array([20, 47, 38, 14, 2])
    res = fit_lambda(counts)
    from nvplace.estimators import log_likelihood
    for d in (-1e-3, 1e-3):
        assert log_likelihood(res.lambda_hat + d, counts) < res.log_likelihood
    # interval ends sit 1.92 below the maximum
    for end in res.ci95:
        assert res.log_likelihood - log_likelihood(end, counts) == pytest.approx(1.9207, abs=1e-3)


def test_expected_counts_reproduce_lambda():
    lam = 5.9
    expected = model_pmf(lam) * 1e6
    assert fit_lambda(np.round(expected).astype(int)).lambda_hat == pytest.approx(lam, rel=1e-3)


def test_fixture_recovered(data_dir):
    import csv
    with open(data_dir / "orientation_hist_lambda2.csv") as fh:
        rows = list(csv.DictReader(fh))
    counts = [int(r["count"]) for r in rows]
    res = fit_lambda(counts)
    assert res.ci95[0] <= 2.0 <= res.ci95[1]


@pytest.mark.parametrize("bad", [[1, 2, 3], [-1, 0, 0, 0, 5], [0, 0, 0, 0, 0]])
def test_histogram_validation(bad):
    with pytest.raises(ValueError):
        OrientationHistogram(bad)


def test_systematic_uncertainty_deterministic():
    a = systematic_uncertainty(2.0, n_sets=20, seed=3)
    b = systematic_uncertainty(2.0, n_sets=20, seed=3)
    assert a == b
    assert 0.05 < a < 0.6


def test_subtract_control():
    irr = MleResult(3.0, (2.5, 3.6), 0.0)
    ctrl = MleResult(0.5, (0.3, 0.9), 0.0)
    net = subtract_control(irr, ctrl)
    assert net["lambda_net"] == pytest.approx(2.5)
    assert net["ci95"][0] == pytest.approx(2.5 - math.hypot(0.5, 0.4))
    assert net["ci95"][1] == pytest.approx(2.5 + math.hypot(0.6, 0.2))


def test_sample_histogram_size(rng):
    h = sample_histogram(2.0, 121, rng)
    assert h.n_sites == 121
