"""Signal pipeline: raw HR and IMU recordings to 1 Hz model inputs.

Acceleration is gravity-corrected, low-pass filtered, integrated to velocity
with zero-velocity updates, and converted through the whole-body kinetic
energy relation into metabolic proxy rates. HR is smoothed and rescaled to
beats per second.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .params import SubjectProfile
from .timeseries import TimeSeries, align_lengths, resample_to_1hz

KJ_PER_L_O2 = 19.6
ZUPT_TOLERANCE = 0.05    # m/s^2 treated as "acceleration at zero"
ZUPT_MIN_RUN = 5
GRAVITY_CUTOFF_HZ = 0.25


@dataclass(frozen=True)
class ImuTriplet:
    """Accelerometer channels from pelvis and both thighs."""

    pelvis: TimeSeries
    thigh_left: TimeSeries
    thigh_right: TimeSeries

    def __post_init__(self):
        rates = {self.pelvis.rate, self.thigh_left.rate, self.thigh_right.rate}
        if len(rates) != 1:
            raise ValueError(f"IMU channels must share a rate, got {sorted(rates)}")

    def channels(self):
        return self.pelvis, self.thigh_left, self.thigh_right


def _window_samples(window_s: float, rate: float) -> int:
    half = int(round(window_s * rate)) // 2
    win = 2 * half + 1
    if win < 3:
        raise ValueError(
            f"window of {window_s} s covers fewer than 3 samples at {rate} Hz")
    return win


def savgol_smooth(x: TimeSeries, window_s: float = 20.0, order: int = 1) -> TimeSeries:
    """Least-squares polynomial smoothing over a centered window.

    Every output sample is the value at the center of a polynomial fitted to
    the surrounding window; windows are truncated near the edges.
    """
    win = _window_samples(window_s, x.rate)
    half = win // 2
    v = x.values if x.values.ndim == 2 else x.values[:, None]
    n = len(v)
    out = np.empty_like(v)

    # Weight vector per window shape (value at offset 0 of the fitted
    # polynomial); the interior shape repeats, edge shapes are truncated.
    weights: dict[tuple[int, int], np.ndarray] = {}
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        shape = (lo - i, hi - i)
        w = weights.get(shape)
        if w is None:
            offs = np.arange(shape[0], shape[1], dtype=float)
            a = np.vander(offs, min(order, len(offs) - 1) + 1, increasing=True)
            w = np.linalg.pinv(a)[0]
            weights[shape] = w
        out[i] = w @ v[lo:hi]
    if x.values.ndim == 1:
        out = out[:, 0]
    return x.with_values(out)


def butterworth_lowpass(x: TimeSeries, cutoff_hz: float = 6.0,
                        order: int = 4) -> TimeSeries:
    """Zero-phase Butterworth low-pass (forward-backward, unit DC gain)."""
    if cutoff_hz >= x.rate / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must be below Nyquist {x.rate / 2} Hz")
    sos = sp_signal.butter(order, cutoff_hz, fs=x.rate, output="sos")
    out = sp_signal.sosfiltfilt(sos, x.values, axis=0,
                                padtype="even", padlen=3 * order)
    return x.with_values(out)


def remove_gravity(accel: TimeSeries) -> TimeSeries:
    """Subtract the quasi-static field, estimated per axis as the 0.25 Hz
    low-pass component; avoids explicit orientation estimation."""
    gravity = butterworth_lowpass(accel, cutoff_hz=GRAVITY_CUTOFF_HZ, order=2)
    return accel.with_values(accel.values - gravity.values)


def _zero_runs(mask: np.ndarray, min_run: int) -> list[tuple[int, int]]:
    """Half-open [start, end) index ranges of True runs of at least min_run."""
    runs = []
    n = len(mask)
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            if j - i >= min_run:
                runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def integrate_velocity(free_accel: TimeSeries, zero_tol: float = ZUPT_TOLERANCE,
                       min_run: int = ZUPT_MIN_RUN,
                       resample_1hz: bool = True) -> TimeSeries:
    """Trapezoidal velocity with zero-velocity updates.

    Velocity is pinned to exactly zero across every run of at least min_run
    samples whose acceleration magnitude stays below zero_tol, and
    integration restarts from zero after each such run (drift cancellation).
    """
    a = free_accel.values
    if a.ndim != 2:
        raise ValueError("expected triaxial acceleration")
    dt = 1.0 / free_accel.rate
    mag = np.linalg.norm(a, axis=1)
    runs = _zero_runs(mag < zero_tol, min_run)

    inc = np.zeros_like(a)
    inc[1:] = 0.5 * (a[1:] + a[:-1]) * dt
    v = np.cumsum(inc, axis=0)
    for start, end in runs:
        # zero the run, offset-correct everything after it
        v[end:] -= v[end - 1]
        v[start:end] = 0.0
    out = TimeSeries(free_accel.start_time, free_accel.rate, v, "m/s")
    return resample_to_1hz(out) if resample_1hz else out


def velocity_magnitude(v: TimeSeries) -> TimeSeries:
    """Per-sample Euclidean norm of a triaxial velocity series."""
    if v.values.ndim != 2:
        raise ValueError("expected triaxial velocity")
    return TimeSeries(v.start_time, v.rate, np.linalg.norm(v.values, axis=1), "m/s")


def kinetic_power(v_p: TimeSeries, v_l: TimeSeries, v_r: TimeSeries,
                  profile: SubjectProfile, active_label: str = "") -> TimeSeries:
    """Whole-body kinetic power scaled by the activity efficiency, kJ/s.

    Upper-body mass rides the pelvis velocity and each leg its thigh
    velocity; the efficiency divisor converts segmental mechanical power to
    an estimate of the metabolic rate it demands.
    """
    mu = profile.efficiency_for(active_label)
    if mu <= 0:
        raise ValueError("efficiency must be positive")
    v_p, v_l, v_r = align_lengths(v_p, v_l, v_r)
    watts = 0.5 * (profile.upper_mass_kg * v_p.values ** 2
                   + profile.leg_mass_kg * v_l.values ** 2
                   + profile.leg_mass_kg * v_r.values ** 2) / mu
    return TimeSeries(v_p.start_time, v_p.rate, watts / 1000.0, "kJ/s")


def metabolic_proxy(e: TimeSeries, rq: float = 0.8) -> tuple[TimeSeries, TimeSeries]:
    """Convert kinetic power to (O2, CO2) metabolic proxy rates in L/s."""
    if np.any(e.values < 0):
        raise ValueError("kinetic power must be non-negative")
    rm_o2 = e.values / KJ_PER_L_O2
    return (TimeSeries(e.start_time, e.rate, rm_o2, "L/s"),
            TimeSeries(e.start_time, e.rate, rq * rm_o2, "L/s"))


def hr_to_input(hr: TimeSeries) -> TimeSeries:
    """Heart rate in bpm to the smoothed 1 Hz model input in beats/s.

    Non-positive samples are flagged and replaced by the previous valid one.
    """
    v = hr.values.copy()
    bad = v <= 0
    if bad.any():
        warnings.warn(f"{int(bad.sum())} non-positive HR samples replaced")
        valid_idx = np.where(~bad)[0]
        if len(valid_idx) == 0:
            raise ValueError("heart-rate series has no positive samples")
        fill = np.maximum.accumulate(np.where(bad, -1, np.arange(len(v))))
        fill[fill < 0] = valid_idx[0]
        v = v[fill]
    smoothed = savgol_smooth(TimeSeries(hr.start_time, hr.rate, v, hr.unit))
    at_1hz = resample_to_1hz(smoothed)
    return TimeSeries(at_1hz.start_time, 1.0, at_1hz.values / 60.0, "bps")


def imu_to_proxies(imu: ImuTriplet, profile: SubjectProfile,
                   labels_1hz: np.ndarray | None = None,
                   rq: float = 0.8) -> tuple[TimeSeries, TimeSeries]:
    """Full IMU chain: gravity removal, low-pass, velocity, kinetic power,
    metabolic proxies at 1 Hz. labels_1hz optionally assigns a per-second
    activity label controlling the efficiency factor."""
    mags = []
    for ch in imu.channels():
        free = butterworth_lowpass(remove_gravity(ch))
        vel = integrate_velocity(free)
        mags.append(velocity_magnitude(vel))
    v_p, v_l, v_r = align_lengths(*mags)

    if labels_1hz is None:
        e = kinetic_power(v_p, v_l, v_r, profile)
    else:
        n = min(len(v_p), len(labels_1hz))
        values = np.empty(n)
        for i in range(n):
            mu = profile.efficiency_for(str(labels_1hz[i]))
            values[i] = 0.5 * (profile.upper_mass_kg * v_p.values[i] ** 2
                               + profile.leg_mass_kg * v_l.values[i] ** 2
                               + profile.leg_mass_kg * v_r.values[i] ** 2) / mu / 1000.0
        e = TimeSeries(v_p.start_time, 1.0, values, "kJ/s")
    return metabolic_proxy(e, rq)
