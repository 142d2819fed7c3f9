"""Reference physiological state bands and the steady-state bounds check.

Bands are approximate healthy-adult ranges at sea level under submaximal
aerobic conditions, per activity intensity. The check drives the model to
steady state at a scripted operating point per intensity and verifies each
state against its band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import STATE_NAMES
from .params import ModelParams
from .simulator import Scenario, ScenarioSegment, simulate_forward, steady_state_solve

# state -> intensity -> (low, high); pressures mmHg, contents L/L, flow L/s
STATE_BANDS = {
    "p_a_o2": {"low": (90.0, 110.0), "moderate": (95.0, 120.0),
               "moderate-high": (100.0, 130.0)},
    "p_a_co2": {"low": (38.0, 45.0), "moderate": (34.0, 42.0),
                "moderate-high": (30.0, 38.0)},
    "c_v_o2": {"low": (0.13, 0.16), "moderate": (0.10, 0.14),
               "moderate-high": (0.07, 0.12)},
    "c_v_co2": {"low": (0.58, 0.64), "moderate": (0.62, 0.70),
                "moderate-high": (0.65, 0.75)},
    "vt_a": {"low": (0.04, 0.12), "moderate": (0.15, 0.40),
             "moderate-high": (0.30, 0.80)},
}

INTENSITIES = ("low", "moderate", "moderate-high")


@dataclass(frozen=True)
class OperatingPoint:
    """Constant metabolic drive and heart rate defining one intensity."""
    intensity: str
    rm_o2: float     # L/s
    hr_bpm: float


@dataclass
class BoundsCell:
    state: str
    intensity: str
    value: float
    lo: float
    hi: float

    @property
    def ok(self) -> bool:
        return self.lo <= self.value <= self.hi

    @property
    def margin(self) -> float:
        return min(self.value - self.lo, self.hi - self.value)


def check_state_bounds(params: ModelParams, points: list[OperatingPoint],
                       confirm_dynamic: bool = False,
                       settle_s: float = 20000.0,
                       settle_tol: float = 1e-4) -> list[BoundsCell]:
    """Per-state, per-intensity pass/fail table of steady-state values.

    With confirm_dynamic, a long constant-drive simulation must also settle
    onto the algebraic steady state (guards against limit cycles; the
    slowest coupled tissue mode can take thousands of seconds).
    """
    cells = []
    for pt in points:
        x = steady_state_solve(pt.rm_o2, pt.hr_bpm / 60.0, params)
        if confirm_dynamic:
            sc = Scenario((ScenarioSegment(settle_s, pt.intensity, pt.rm_o2,
                                           pt.hr_bpm),))
            res = simulate_forward(sc, params, dt_fine=0.005)
            gap = np.abs(res.states[-1] - x) / np.maximum(np.abs(x), 1e-9)
            if gap.max() > settle_tol:
                raise RuntimeError(
                    f"{pt.intensity}: simulation does not settle on the "
                    f"steady state (max relative gap {gap.max():.2e})")
        for i, name in enumerate(STATE_NAMES):
            lo, hi = STATE_BANDS[name][pt.intensity]
            cells.append(BoundsCell(name, pt.intensity, float(x[i]), lo, hi))
    return cells


def calibrated_setup() -> tuple[ModelParams, list[OperatingPoint]]:
    """The shipped calibrated parameter set and its operating points."""
    from importlib import resources

    from .config import load_model_params

    data = resources.files("pmekf").joinpath("data")
    with resources.as_file(data.joinpath("calibrated.params")) as p:
        params = load_model_params(p)
    points = []
    text = data.joinpath("calibrated_points.csv").read_text()
    for line in text.splitlines()[1:]:
        if line.strip():
            intensity, rm_o2, hr = line.split(",")
            points.append(OperatingPoint(intensity, float(rm_o2), float(hr)))
    return params, points


def format_bounds_table(cells: list[BoundsCell]) -> str:
    lines = [f"{'state':<9s} {'intensity':<14s} {'value':>10s} "
             f"{'band':>17s}  result"]
    for c in cells:
        band = f"[{c.lo:g}, {c.hi:g}]"
        lines.append(f"{c.state:<9s} {c.intensity:<14s} {c.value:>10.4f} "
                     f"{band:>17s}  {'pass' if c.ok else 'FAIL'}")
    n_ok = sum(c.ok for c in cells)
    lines.append(f"{n_ok}/{len(cells)} cells inside their bands")
    return "\n".join(lines)
