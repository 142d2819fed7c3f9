"""Metrics, paired statistics, the accelerometry regression baseline, and the
leave-one-subject-out harness."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .signals import savgol_smooth
from .timeseries import TimeSeries, resample_to_1hz

INTENSITY_ORDER = ("low", "moderate", "moderate-high")


@dataclass(frozen=True)
class ActivitySegment:
    label: str
    intensity: str
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError(f"segment {self.label!r}: t_end must exceed t_start")
        if self.intensity not in INTENSITY_ORDER:
            raise ValueError(f"segment {self.label!r}: unknown intensity "
                             f"{self.intensity!r}")


@dataclass
class EvalReport:
    r2_overall: float
    nrmse_by_intensity: dict[str, tuple[float, float, float]]
    violation_rate: float
    wilcoxon: dict[str, float] = field(default_factory=dict)


def r_squared(y_true, y_pred) -> float:
    """Explained variance, 1 - SSE/SST; negative when worse than the mean."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if len(y_true) != len(y_pred) or len(y_true) < 2:
        raise ValueError("need two equal-length series of at least 2 samples")
    sst = np.sum((y_true - y_true.mean()) ** 2)
    if sst == 0:
        raise ValueError("reference series is constant; explained variance undefined")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / sst)


def nrmse(y_true, y_pred) -> float:
    """Root-mean-squared error normalized by the reference mean."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if len(y_true) != len(y_pred) or len(y_true) < 1:
        raise ValueError("need two equal-length non-empty series")
    mean = y_true.mean()
    if mean == 0:
        raise ValueError("reference mean is zero; NRMSE undefined")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)) / mean)


def per_intensity_nrmse(y_true, y_pred, segments: list[ActivitySegment],
                        rate: float = 1.0, start_time: float = 0.0
                        ) -> dict[str, tuple[float, float, float]]:
    """Per-segment NRMSE grouped by intensity as (median, min, max)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    groups: dict[str, list[float]] = {}
    for seg in segments:
        i0 = max(0, int(math.ceil((seg.t_start - start_time) * rate)))
        i1 = min(len(y_true), int(math.floor((seg.t_end - start_time) * rate)) + 1)
        if i1 - i0 < 2:
            warnings.warn(f"segment {seg.label!r} has fewer than 2 samples; skipped")
            continue
        if y_true[i0:i1].mean() == 0:
            warnings.warn(f"segment {seg.label!r} has zero reference mean; skipped")
            continue
        groups.setdefault(seg.intensity, []).append(
            nrmse(y_true[i0:i1], y_pred[i0:i1]))
    return {k: (float(np.median(v)), float(np.min(v)), float(np.max(v)))
            for k, v in groups.items()}


def violation_rate(y_pred, bound: float = 0.0) -> float:
    """Fraction of predictions below the physiological lower bound."""
    y_pred = np.asarray(y_pred, dtype=float)
    if len(y_pred) == 0:
        raise ValueError("empty prediction series")
    return float(np.mean(y_pred < bound))


def _exact_wilcoxon_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided exact p over all sign assignments, via the rank-sum
    distribution (doubled ranks keep tied half-ranks integral)."""
    r2 = np.round(2.0 * ranks).astype(int)
    total = int(r2.sum())
    # distribution of 2*W+ as polynomial coefficients
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in r2:
        new = dist.copy()
        new[r:] += dist[:total + 1 - r]
        dist = new
    w2 = int(round(2.0 * w_plus))
    lo = min(w2, total - w2)
    hi = total - lo
    count = dist[:lo + 1].sum() + dist[hi:].sum()
    if lo == hi:
        count -= dist[lo]
    return float(min(1.0, count / 2.0 ** len(r2)))


def wilcoxon_signed_rank(a, b, exact_threshold: int = 25) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped. Exact enumeration of the rank-sum
    distribution up to exact_threshold pairs, then a normal approximation
    with continuity and tie corrections.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("all paired differences are zero")
    if n < 5:
        raise ValueError(f"need at least 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_threshold:
        return _exact_wilcoxon_p(ranks, w_plus)
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts ** 3 - counts) / 48.0
    dev = w_plus - mean
    cc = 0.5 * np.sign(dev)
    z = (dev - cc) / math.sqrt(var)
    return float(min(1.0, math.erfc(abs(z) / math.sqrt(2.0))))


def bonferroni(p_values) -> list[float]:
    """Multiply by the comparison count, capped at 1."""
    ps = list(p_values)
    return [min(1.0, p * len(ps)) for p in ps]


def fit_linear_baseline(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ordinary least squares with intercept; minimum-norm on rank deficiency."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least 2 training rows")
    design = np.column_stack([x, np.ones(len(x))])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        warnings.warn("rank-deficient design matrix; using minimum-norm solution")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def predict_linear_baseline(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.column_stack([x, np.ones(len(x))]) @ coef


def iaa_windows(free_accels: list[np.ndarray], rate: float,
                window_s: float = 30.0) -> np.ndarray:
    """Integrated absolute acceleration per non-overlapping window.

    One feature per sensor: the sum of absolute accelerations over all axes
    and samples in the window.
    """
    win = int(round(window_s * rate))
    n_win = min(len(a) for a in free_accels) // win
    feats = np.empty((n_win, len(free_accels)))
    for j, a in enumerate(free_accels):
        a = np.abs(np.asarray(a, dtype=float))
        flat = a.sum(axis=1) if a.ndim == 2 else a
        feats[:, j] = flat[:n_win * win].reshape(n_win, win).sum(axis=1)
    return feats


def window_means(series: np.ndarray, rate: float, window_s: float = 30.0,
                 n_win: int | None = None) -> np.ndarray:
    """Mean of a 1 Hz-aligned series per non-overlapping window."""
    win = int(round(window_s * rate))
    k = len(series) // win if n_win is None else n_win
    return np.asarray(series, dtype=float)[:k * win].reshape(k, win).mean(axis=1)


def window_last(series: np.ndarray, rate: float, window_s: float = 30.0,
                n_win: int | None = None) -> np.ndarray:
    """Instantaneous value at the last sample of each window."""
    win = int(round(window_s * rate))
    k = len(series) // win if n_win is None else n_win
    return np.asarray(series, dtype=float)[win - 1:k * win:win]


@dataclass
class SubjectData:
    """Per-subject material consumed by the LOSO harness."""

    subject_id: str
    iaa_features: np.ndarray       # (n_win, 3)
    hr_window: np.ndarray          # (n_win,) instantaneous HR at window end
    paee_window: np.ndarray        # (n_win,) reference mean per window
    pmekf_paee: np.ndarray         # (n,) 1 Hz model estimate
    reference_paee: np.ndarray     # (n,) 1 Hz reference
    segments: list[ActivitySegment] = field(default_factory=list)


@dataclass
class FoldResult:
    subject_id: str
    r2: dict[str, float]
    violation: dict[str, float]
    nrmse: dict[str, dict[str, tuple[float, float, float]]]
    skipped: str | None = None


def loso_harness(subjects: list[SubjectData], include_hr: bool = True
                 ) -> list[FoldResult]:
    """One fold per subject: regression baseline trained on the others,
    the physiological filter needs no training. Subjects are evaluated on
    their own reference only."""
    if len(subjects) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    results = []
    for held in subjects:
        train = [s for s in subjects if s.subject_id != held.subject_id]
        x_tr = np.vstack([_lr_features(s, include_hr) for s in train])
        y_tr = np.concatenate([s.paee_window for s in train])
        coef = fit_linear_baseline(x_tr, y_tr)
        lr_pred = predict_linear_baseline(coef, _lr_features(held, include_hr))

        r2 = {"pmekf": r_squared(held.reference_paee, held.pmekf_paee),
              "lr": r_squared(held.paee_window, lr_pred)}
        viol = {"pmekf": violation_rate(held.pmekf_paee),
                "lr": violation_rate(lr_pred)}
        nr = {}
        if held.segments:
            nr["pmekf"] = per_intensity_nrmse(held.reference_paee,
                                              held.pmekf_paee, held.segments)
            nr["lr"] = per_intensity_nrmse(
                held.paee_window, lr_pred, held.segments, rate=1.0 / 30.0)
        results.append(FoldResult(held.subject_id, r2, viol, nr))
    return results


def _lr_features(s: SubjectData, include_hr: bool) -> np.ndarray:
    if include_hr:
        return np.column_stack([s.iaa_features, s.hr_window])
    return s.iaa_features


def subtract_rmr(reference_gas: tuple[TimeSeries, TimeSeries],
                 rmr_recording: tuple[TimeSeries, TimeSeries],
                 discard_s: float = 300.0,
                 smooth_window_s: float = 20.0
                 ) -> tuple[TimeSeries, TimeSeries]:
    """Remove the resting metabolic contribution from reference gas rates.

    The first discard_s of the resting recording are dropped as onset
    transient; the remaining means define the resting O2/CO2 rates, which
    are subtracted from the smoothed, 1 Hz-resampled activity series.
    """
    out = []
    for adl, rmr in zip(reference_gas, rmr_recording):
        if rmr.duration < discard_s + 60.0:
            raise ValueError(
                "resting recording must extend at least 1 min past the "
                f"{discard_s:.0f} s discard window")
        n_skip = int(round(discard_s * rmr.rate))
        rest_rate = float(rmr.values[n_skip:].mean())
        smooth = savgol_smooth(resample_to_1hz(adl), smooth_window_s)
        out.append(smooth.with_values(smooth.values - rest_rate))
    return out[0], out[1]
