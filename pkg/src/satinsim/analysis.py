"""Record statistics: Allan deviation and bootstrap intervals."""
from __future__ import annotations

import allantools
import numpy as np
from scipy import stats

ONE_SIGMA = 0.6826894921370859


def allan_deviation(phase_record, sample_period: float):
    """Overlapping Allan deviation at octave-spaced averaging times.

    Each entry of phase_record is one independent per-cycle phase estimate,
    so white estimator noise falls off as tau^-1/2.
    """
    y = np.asarray(phase_record, dtype=float)
    if y.ndim != 1 or y.size < 4:
        raise ValueError(f"need a 1-D record of length >= 4, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("record contains non-finite values")
    if not sample_period > 0:
        raise ValueError(f"sample_period must be > 0, got {sample_period}")
    taus, adev, _, _ = allantools.oadev(y, rate=1.0 / sample_period, data_type="freq", taus="octave")
    return np.asarray(taus), np.asarray(adev)


def white_noise_fit(taus, adev, record_span=None, min_averages=10):
    """Log-log slope and tau=1 intercept of an Allan curve.

    With record_span (length times sample period) given, taus with fewer than
    min_averages independent averages are left out of the fit.
    """
    taus, adev = np.asarray(taus), np.asarray(adev)
    ok = adev > 0
    if record_span is not None:
        ok &= taus * min_averages <= record_span
    if ok.sum() < 2:
        raise ValueError("need at least two positive points")
    slope, icpt = np.polyfit(np.log(taus[ok]), np.log(adev[ok]), 1)
    return float(slope), float(np.exp(icpt))


_STATS = {
    "mean": lambda x, axis=-1: np.mean(x, axis=axis),
    "variance": lambda x, axis=-1: np.var(x, axis=axis, ddof=1),
}


def bootstrap_ci(values, statistic: str = "mean", n_resamples: int = 1000, seed: int = 0):
    """Percentile bootstrap 1-sigma interval; returns (estimate, lo, hi)."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise ValueError(f"need at least 2 values, got {x.size}")
    if statistic not in _STATS:
        raise ValueError(f"statistic must be one of {sorted(_STATS)}")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    fn = _STATS[statistic]
    est = float(fn(x))
    if np.ptp(x) == 0:
        return est, est, est
    res = stats.bootstrap(
        (x,), fn, n_resamples=n_resamples, confidence_level=ONE_SIGMA,
        method="percentile", vectorized=True, random_state=np.random.default_rng(seed),
    )
    ci = res.confidence_interval
    return est, float(ci.low), float(ci.high)
