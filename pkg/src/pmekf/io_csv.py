"""CSV ingestion and emission with fixed schemas and deterministic output.

All channel files carry a `t` column in seconds since session start and one
row per sample; writers format floats with %.9g so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .evaluation import ActivitySegment
from .timeseries import TimeSeries

FLOAT_FMT = "%.9g"

CHANNEL_SCHEMAS = {
    "imu_pelvis.csv": ("t", "ax", "ay", "az"),
    "imu_thigh_l.csv": ("t", "ax", "ay", "az"),
    "imu_thigh_r.csv": ("t", "ax", "ay", "az"),
    "hr.csv": ("t", "bpm"),
    "ref_gas.csv": ("t", "vo2_lps", "vco2_lps"),
    "rmr.csv": ("t", "vo2_lps", "vco2_lps"),
    "proxies.csv": ("t", "rm_o2_lps", "rm_co2_lps"),
    "truth.csv": ("t", "x1", "x2", "x3", "x4", "x5", "paee_kcals"),
}

CHANNEL_UNITS = {
    "imu_pelvis.csv": "m/s^2",
    "imu_thigh_l.csv": "m/s^2",
    "imu_thigh_r.csv": "m/s^2",
    "hr.csv": "bpm",
    "ref_gas.csv": "L/s",
    "rmr.csv": "L/s",
    "proxies.csv": "L/s",
    "truth.csv": "",
}


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def read_table(path: Path, expected_header: tuple[str, ...]) -> np.ndarray:
    """Read a CSV with an exact expected header into a float array."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path.name}: empty file")
        if tuple(h.strip() for h in header) != expected_header:
            raise ValueError(
                f"{path.name}: header {header} does not match expected "
                f"{list(expected_header)}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path.name}: no data rows")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(expected_header):
        raise ValueError(f"{path.name}: ragged rows")
    return data


def _infer_rate(t: np.ndarray, name: str) -> float:
    if len(t) < 2:
        return 1.0
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError(f"{name}: time column must be strictly increasing")
    step = float(np.median(dt))
    if np.max(np.abs(dt - step)) > 1e-6 * max(step, 1.0):
        raise ValueError(f"{name}: sampling is not uniform")
    return 1.0 / step


def read_channel(path: Path) -> TimeSeries:
    """Read one of the known channel files into a TimeSeries."""
    path = Path(path)
    schema = CHANNEL_SCHEMAS.get(path.name)
    if schema is None:
        raise ValueError(f"unknown channel file {path.name}")
    data = read_table(path, schema)
    t = data[:, 0]
    values = data[:, 1] if data.shape[1] == 2 else data[:, 1:]
    return TimeSeries(float(t[0]), _infer_rate(t, path.name), values,
                      CHANNEL_UNITS[path.name])


def write_channel(path: Path, ts: TimeSeries, name: str | None = None) -> None:
    name = name or Path(path).name
    schema = CHANNEL_SCHEMAS[name]
    values = ts.values if ts.values.ndim == 2 else ts.values[:, None]
    t = ts.times()
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(schema) + "\n")
        for i in range(len(values)):
            row = [_fmt(t[i])] + [_fmt(v) for v in values[i]]
            fh.write(",".join(row) + "\n")


def read_segments(path: Path) -> list[ActivitySegment]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
                "t_start", "t_end", "label", "intensity"]:
            raise ValueError(f"{path.name}: expected header "
                             "t_start,t_end,label,intensity")
        segs = [ActivitySegment(row[2].strip(), row[3].strip(),
                                float(row[0]), float(row[1]))
                for row in reader if row]
    ordered = sorted(segs, key=lambda s: s.t_start)
    for a, b in zip(ordered, ordered[1:]):
        if b.t_start < a.t_end:
            raise ValueError(
                f"{path.name}: segments {a.label!r} and {b.label!r} overlap")
    return segs


def write_segments(path: Path, segments: list[ActivitySegment]) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("t_start,t_end,label,intensity\n")
        for s in segments:
            fh.write(f"{_fmt(s.t_start)},{_fmt(s.t_end)},{s.label},{s.intensity}\n")


def write_filter_output(path: Path, out) -> None:
    """Emit the filter trajectory: t,x1..x5,var1..var5,paee,innov1,innov2."""
    header = ("t,x1,x2,x3,x4,x5,var1,var2,var3,var4,var5,paee,innov1,innov2")
    with Path(path).open("w", newline="") as fh:
        fh.write(header + "\n")
        for k in range(len(out.times)):
            row = ([_fmt(out.times[k])]
                   + [_fmt(v) for v in out.states[k]]
                   + [_fmt(v) for v in out.cov_diag[k]]
                   + [_fmt(out.paee.values[k])]
                   + [_fmt(v) for v in out.innovations[k]])
            fh.write(",".join(row) + "\n")


def read_filter_output(path: Path) -> dict[str, np.ndarray]:
    expected = ("t", "x1", "x2", "x3", "x4", "x5", "var1", "var2", "var3",
                "var4", "var5", "paee", "innov1", "innov2")
    data = read_table(Path(path), expected)
    return {"t": data[:, 0], "states": data[:, 1:6], "cov_diag": data[:, 6:11],
            "paee": data[:, 11], "innovations": data[:, 12:14]}
