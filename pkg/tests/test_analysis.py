import numpy as np
import pytest

from satinsim.analysis import allan_deviation, bootstrap_ci, white_noise_fit


def overlapping_adev(y, m):
    # direct textbook sum for one averaging factor
    x = np.concatenate([[0.0], np.cumsum(y)])
    d = x[2 * m:] - 2 * x[m:-m] + x[:-2 * m]
    return np.sqrt(np.sum(d**2) / (2 * m**2 * len(d)))


def test_allan_constant_record():
    taus, adev = allan_deviation(np.full(100, 3.2), 0.5)
    assert np.all(adev == 0)
    assert taus[0] == 0.5


def test_allan_matches_direct_sum():
    y = np.random.default_rng(5).normal(size=500)
    taus, adev = allan_deviation(y, 1.0)
    for t, a in zip(taus, adev):
        assert a == pytest.approx(overlapping_adev(y, int(t)), rel=1e-10)


def test_allan_white_noise_slope():
    y = np.random.default_rng(17).normal(size=10_000)
    taus, adev = allan_deviation(y, 1.0)
    slope, _ = white_noise_fit(taus, adev, len(y))
    assert slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("bad", [np.ones(3), np.ones((4, 4)), np.array([1.0, np.nan, 2.0, 3.0, 4.0])])
def test_allan_rejects_bad_records(bad):
    with pytest.raises(ValueError):
        allan_deviation(bad, 1.0)
    with pytest.raises(ValueError):
        allan_deviation(np.ones(10), 0.0)


def test_bootstrap_constant():
    est, lo, hi = bootstrap_ci(np.full(20, 2.0), "variance", 100, 1)
    assert est == lo == hi == 0.0
    est, lo, hi = bootstrap_ci(np.full(20, 2.0), "mean", 100, 1)
    assert est == lo == hi == 2.0


def test_bootstrap_deterministic():
    x = np.random.default_rng(0).normal(size=150)
    assert bootstrap_ci(x, "mean", 500, 42) == bootstrap_ci(x, "mean", 500, 42)
    assert bootstrap_ci(x, "mean", 500, 42) != bootstrap_ci(x, "mean", 500, 43)


def test_bootstrap_errors():
    with pytest.raises(ValueError):
        bootstrap_ci([1.0], "mean")
    with pytest.raises(ValueError):
        bootstrap_ci([1.0, 2.0], "median")


def test_bootstrap_variance_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    for trial in range(1000):
        x = rng.normal(0.0, 1.0, 150)
        _, lo, hi = bootstrap_ci(x, "variance", 300, trial)
        hits += lo <= 1.0 <= hi
    assert hits / 1000 >= 0.60
