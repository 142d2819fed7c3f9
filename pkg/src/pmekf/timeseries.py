"""Uniformly sampled time series container used across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled scalar or 3-vector channel.

    values has shape (n,) for scalar channels or (n, 3) for triaxial ones.
    start_time is in seconds since session start, rate in Hz.
    """

    start_time: float
    rate: float
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[1] not in (2, 3)):
            raise ValueError(f"values must be (n,), (n, 2) or (n, 3), got shape {v.shape}")
        if len(v) < 1:
            raise ValueError("series must contain at least one sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite samples")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration(self) -> float:
        return (len(self.values) - 1) / self.rate

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.values)) / self.rate

    def with_values(self, values: np.ndarray, unit: str | None = None) -> "TimeSeries":
        return TimeSeries(self.start_time, self.rate, values,
                          self.unit if unit is None else unit)


def resample_to_1hz(ts: TimeSeries) -> TimeSeries:
    """Resample by averaging over each 1 s bin anchored at start_time.

    Averaging anti-aliases and matches the breath-data treatment; trailing
    part-bins are kept (mean of available samples).
    """
    if ts.rate == 1.0:
        return ts
    rel = np.arange(len(ts)) / ts.rate
    bins = np.floor(rel).astype(np.int64)
    n_bins = int(bins[-1]) + 1
    counts = np.bincount(bins, minlength=n_bins)
    if ts.values.ndim == 1:
        sums = np.bincount(bins, weights=ts.values, minlength=n_bins)
        out = sums / counts
    else:
        cols = [np.bincount(bins, weights=ts.values[:, j], minlength=n_bins)
                for j in range(ts.values.shape[1])]
        out = np.stack(cols, axis=1) / counts[:, None]
    return TimeSeries(ts.start_time, 1.0, out, ts.unit)


def align_lengths(*series: TimeSeries) -> list[TimeSeries]:
    """Trim series sharing a rate to their common length."""
    rates = {s.rate for s in series}
    if len(rates) != 1:
        raise ValueError(f"cannot align series with mixed rates {sorted(rates)}")
    n = min(len(s) for s in series)
    return [s.with_values(s.values[:n]) for s in series]
