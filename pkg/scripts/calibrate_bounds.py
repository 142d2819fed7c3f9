#!/usr/bin/env python3
"""Search a parameter set and per-intensity operating points that place all
steady states inside the reference physiological bands.

Construction: pick alveolar targets on the gas-exchange line, extraction
fractions for the content states, and a ventilation profile; solve the
controller gains exactly through those points; refine with Nelder-Mead on
the true steady-state solver; confirm closed-loop stability by simulation.
Writes the result to src/pmekf/data/calibrated.params plus the operating
points used by the bounds check.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from pmekf.bounds import INTENSITIES, STATE_BANDS, OperatingPoint, check_state_bounds
from pmekf.params import ModelParams
from pmekf.simulator import steady_state_solve


def build_candidate(v):
    """Decode the search vector into (params, operating points)."""
    (k3, k4, g_o2, g_co2, c0,
     m_l, u_l, m_m, u_m, m_h, u_h) = v
    params = ModelParams().replace(
        k3=k3, k4=k4, g_p_o2=g_o2, g_p_co2=g_co2, c_a_o2_basal=c0)
    points = [OperatingPoint("low", m_l, u_l * 60.0),
              OperatingPoint("moderate", m_m, u_m * 60.0),
              OperatingPoint("moderate-high", m_h, u_h * 60.0)]
    return params, points


def min_margin(v) -> float:
    try:
        params, points = build_candidate(v)
        cells = check_state_bounds(params, points)
    except Exception:
        return -1.0
    margins = []
    for c in cells:
        width = c.hi - c.lo
        margins.append(c.margin / width)
    return min(margins)


def seed_vector():
    """Hand-constructed feasible-region seed (gas-line targets, controller
    gains solved through three operating points)."""
    lam, rq = 863.0, 0.8
    p_i_o2, p_i_co2 = 0.2094 * 713.0, 0.0004 * 713.0
    k2, k3, k4 = 0.2, 0.10, 0.0157
    ps = 0.024
    g_co2 = 0.002

    x2 = np.array([38.2, 37.4, 35.4])
    x1 = p_i_o2 - (x2 - p_i_co2) / rq
    extr = np.array([0.0442, 0.078, 0.119])
    x5 = np.array([0.12, np.nan, 0.344])

    ce = k2 * (1.0 - np.exp(-k3 * x1)) ** 2
    c_a = ce - ps / (1.0 - ps) * extr
    g_o2 = ((x5[2] - x5[0]) - g_co2 * (x2[2] - x2[0])) / (c_a[0] - c_a[2])
    x5[1] = x5[0] + g_co2 * (x2[1] - x2[0]) + g_o2 * (c_a[0] - c_a[1])
    k1 = x5[0] - g_co2 * x2[0] + g_o2 * c_a[0]
    c0 = (k1 + g_co2 * 40.0) / g_o2

    m = x5 * (p_i_o2 - x1) / lam
    sv = np.clip(0.02 * np.log(60.0 * m) + 0.08975, 0.04, 0.20)
    u = m / (extr * sv)
    print(f"seed: g_o2={g_o2:.2f} g_co2={g_co2} c0={c0:.6f} x5={x5}")
    print(f"seed: m={m}, hr={u * 60.0}")
    return np.array([k3, k4, g_o2, g_co2, c0,
                     m[0], u[0], m[1], u[1], m[2], u[2]])


def main() -> int:
    v0 = seed_vector()
    print(f"seed min normalized margin: {min_margin(v0):.4f}")

    res = minimize(lambda v: -min_margin(v), v0, method="Nelder-Mead",
                   options={"maxiter": 4000, "xatol": 1e-8, "fatol": 1e-6})
    v = res.x
    print(f"refined min normalized margin: {min_margin(v):.4f}")

    params, points = build_candidate(v)
    cells = check_state_bounds(params, points, confirm_dynamic=True)
    from pmekf.bounds import format_bounds_table
    print(format_bounds_table(cells))
    if not all(c.ok for c in cells):
        print("calibration failed to place every state in-band", file=sys.stderr)
        return 1

    data_dir = Path(__file__).resolve().parents[1] / "src" / "pmekf" / "data"
    data_dir.mkdir(exist_ok=True)
    out = data_dir / "calibrated.params"
    lines = [
        "# Calibrated constants placing model steady states inside the",
        "# reference physiological bands at all three activity intensities.",
        "# Regenerate with scripts/calibrate_bounds.py.",
        "[model]",
        f"k3 = {float(params.k3)!r}",
        f"k4 = {float(params.k4)!r}",
        f"g_p_o2 = {float(params.g_p_o2)!r}",
        f"g_p_co2 = {float(params.g_p_co2)!r}",
        f"c_a_o2_basal = {float(params.c_a_o2_basal)!r}",
    ]
    out.write_text("\n".join(lines) + "\n")
    pts = data_dir / "calibrated_points.csv"
    pt_lines = ["intensity,rm_o2,hr_bpm"]
    for pt in points:
        pt_lines.append(f"{pt.intensity},{float(pt.rm_o2)!r},{float(pt.hr_bpm)!r}")
    pts.write_text("\n".join(pt_lines) + "\n")
    print(f"wrote {out} and {pts}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
