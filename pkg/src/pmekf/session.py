"""Session loading and the end-to-end estimation pipeline.

A session directory holds the channel CSVs: heart rate plus either the IMU
triplet (raw accelerations) or precomputed metabolic proxies, optionally
reference gas-exchange, a resting recording, activity segments, and, for
simulator-generated sessions, the embedded truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ekf import FilterConfig, FilterOutput, run_filter
from .evaluation import (ActivitySegment, EvalReport, per_intensity_nrmse,
                         r_squared, subtract_rmr, violation_rate)
from .io_csv import read_channel, read_segments
from .model import weir_paee
from .params import ModelParams, SubjectProfile
from .signals import ImuTriplet, hr_to_input, imu_to_proxies
from .timeseries import TimeSeries


@dataclass
class SessionBundle:
    subject: SubjectProfile
    hr: TimeSeries
    imu: ImuTriplet | None = None
    proxies: tuple[TimeSeries, TimeSeries] | None = None
    reference_gas: tuple[TimeSeries, TimeSeries] | None = None
    rmr_recording: tuple[TimeSeries, TimeSeries] | None = None
    truth: dict[str, np.ndarray] | None = None
    segments: list[ActivitySegment] = field(default_factory=list)


def _gas_pair(path: Path) -> tuple[TimeSeries, TimeSeries]:
    ts = read_channel(path)
    return (ts.with_values(ts.values[:, 0]), ts.with_values(ts.values[:, 1]))


def load_session(session_dir: Path, subject: SubjectProfile | None = None
                 ) -> SessionBundle:
    """Load and validate a session directory."""
    d = Path(session_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"session directory {d} not found")
    hr_path = d / "hr.csv"
    if not hr_path.exists():
        raise FileNotFoundError(f"hr.csv not found in {d}")
    bundle = SessionBundle(subject or SubjectProfile(), read_channel(hr_path))

    imu_names = ("imu_pelvis.csv", "imu_thigh_l.csv", "imu_thigh_r.csv")
    have_imu = [(d / n).exists() for n in imu_names]
    if all(have_imu):
        bundle.imu = ImuTriplet(*(read_channel(d / n) for n in imu_names))
    elif any(have_imu):
        missing = [n for n, ok in zip(imu_names, have_imu) if not ok]
        raise FileNotFoundError(f"incomplete IMU triplet: {missing[0]} not found")

    if (d / "proxies.csv").exists():
        bundle.proxies = _gas_pair(d / "proxies.csv")
    if bundle.imu is None and bundle.proxies is None:
        raise FileNotFoundError(
            f"neither IMU channels nor proxies.csv found in {d}")

    if (d / "ref_gas.csv").exists():
        bundle.reference_gas = _gas_pair(d / "ref_gas.csv")
    if (d / "rmr.csv").exists():
        bundle.rmr_recording = _gas_pair(d / "rmr.csv")
    if (d / "segments.csv").exists():
        bundle.segments = read_segments(d / "segments.csv")
    if (d / "truth.csv").exists():
        from .io_csv import read_table
        data = read_table(d / "truth.csv",
                          ("t", "x1", "x2", "x3", "x4", "x5", "paee_kcals"))
        bundle.truth = {"t": data[:, 0], "states": data[:, 1:6],
                        "paee": data[:, 6]}
    return bundle


def labels_at_1hz(segments: list[ActivitySegment], n: int,
                  start_time: float = 0.0) -> np.ndarray:
    labels = np.array([""] * n, dtype=object)
    for seg in segments:
        i0 = max(0, int(np.ceil(seg.t_start - start_time)))
        i1 = min(n, int(np.floor(seg.t_end - start_time)) + 1)
        labels[i0:i1] = seg.label
    return labels


def session_inputs(bundle: SessionBundle, rq: float = 0.8
                   ) -> tuple[np.ndarray, np.ndarray]:
    """1 Hz filter inputs (u in beats/s, z as (n, 2) proxies) for a session."""
    u = hr_to_input(bundle.hr).values
    if bundle.proxies is not None:
        z = np.column_stack([p.values for p in bundle.proxies])
    else:
        n_hint = len(u)
        labels = None
        if bundle.segments:
            labels = labels_at_1hz(bundle.segments, n_hint,
                                   bundle.imu.pelvis.start_time)
        rm_o2, rm_co2 = imu_to_proxies(bundle.imu, bundle.subject,
                                       labels_1hz=labels, rq=rq)
        z = np.column_stack([rm_o2.values, rm_co2.values])
    n = min(len(u), len(z))
    return u[:n], z[:n]


def reference_paee(bundle: SessionBundle) -> np.ndarray | None:
    """1 Hz reference energy series, resting contribution removed if given."""
    if bundle.truth is not None:
        return bundle.truth["paee"]
    if bundle.reference_gas is None:
        return None
    vo2, vco2 = bundle.reference_gas
    if bundle.rmr_recording is not None:
        vo2, vco2 = subtract_rmr((vo2, vco2), bundle.rmr_recording)
    else:
        from .signals import savgol_smooth
        from .timeseries import resample_to_1hz
        vo2 = savgol_smooth(resample_to_1hz(vo2))
        vco2 = savgol_smooth(resample_to_1hz(vco2))
    return 3.9 * vo2.values + 1.1 * vco2.values


def estimate_session(bundle: SessionBundle, params: ModelParams,
                     cfg: FilterConfig) -> tuple[FilterOutput, EvalReport | None]:
    """Run the filter on a session; metrics when a reference is available."""
    params = params.with_subject(bundle.subject)
    u, z = session_inputs(bundle, rq=params.rq)
    out = run_filter(u, z, cfg, params, bundle.subject)

    ref = reference_paee(bundle)
    report = None
    if ref is not None:
        n = min(len(ref), len(out.paee.values))
        est = out.paee.values[:n]
        nrmse_map = (per_intensity_nrmse(ref[:n], est, bundle.segments)
                     if bundle.segments else {})
        report = EvalReport(r_squared(ref[:n], est), nrmse_map,
                            violation_rate(est))
    return out, report
