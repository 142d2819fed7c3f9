"""Gas-exchange model: dissociation curves, hemodynamics, five-state dynamics.

State vector: [alveolar O2 pressure (mmHg), alveolar CO2 pressure (mmHg),
venous O2 content (L/L), venous CO2 content (L/L), alveolar ventilation (L/s)].
Heart rate enters as an external input in beats per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .errors import NumericalFailure
from .params import ModelParams, basal_state

STATE_NAMES = ("p_a_o2", "p_a_co2", "c_v_o2", "c_v_co2", "vt_a")

# Hard physiological ranges used to project filter posteriors.
STATE_LOWER = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
STATE_UPPER = np.array([200.0, 100.0, 1.0, 1.0, np.inf])


def clamp_state(x: np.ndarray) -> np.ndarray:
    return np.clip(x, STATE_LOWER, STATE_UPPER)


def dissociation_o2(p, params: ModelParams):
    """End-capillary O2 content from alveolar O2 pressure (saturating curve)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("O2 partial pressure must be non-negative")
    out = params.k2 * (1.0 - np.exp(-params.k3 * p)) ** 2
    return out if out.ndim else float(out)


def dissociation_co2(p, params: ModelParams):
    """End-capillary CO2 content from alveolar CO2 pressure (linear)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("CO2 partial pressure must be non-negative")
    out = params.k4 * p
    return out if out.ndim else float(out)


def arterial_shunt(c_e, c_v, params: ModelParams):
    """Arterial content as the shunt-weighted mix of end-capillary and venous."""
    return (1.0 - params.p_s) * np.asarray(c_e, dtype=float) + params.p_s * np.asarray(c_v, dtype=float)


def stroke_volume(mp_o2: float, params: ModelParams) -> float:
    """Stroke volume from O2 uptake; log law with floor and output clamp."""
    arg = max(float(mp_o2), params.mp_o2_floor)
    sv = params.lambda1 * math.log(60.0 * arg) + params.lambda2
    return min(max(sv, params.sv_min), params.sv_max)


def cardiac_output(u: float, sv: float) -> float:
    """Cardiac output, L/s, from heart rate (beats/s) and stroke volume."""
    return u * sv


def controller_k1(params: ModelParams) -> float:
    """Ventilation-controller offset making basal ventilation exactly zero."""
    return params.k1


@dataclass
class GasExchangeOutput:
    mp_o2: float
    mp_co2: float
    vt_o2: float
    vt_co2: float
    sv: float
    q: float
    e_pa: float


def metabolic_rates(x, params: ModelParams) -> tuple[float, float, float, float]:
    """Alveolar gas fluxes (BTPS) and metabolic rates (STPD) from the state.

    Returns (mp_o2, mp_co2, vt_o2, vt_co2) in L/s.
    """
    x1, x2 = float(x[0]), float(x[1])
    x5 = float(x[4])
    vt_o2 = x5 * (params.f_i_o2 - x1 / params.p_denom)
    vt_co2 = -x5 * (params.f_i_co2 - x2 / params.p_denom)
    b = params.btps_to_stpd
    return b * vt_o2, b * vt_co2, vt_o2, vt_co2


def weir_paee(mp_o2: float, mp_co2: float) -> float:
    """Energy rate in kcal/s from gas metabolic rates, floored at zero."""
    return max(0.0, 3.9 * float(mp_o2) + 1.1 * float(mp_co2))


def gas_exchange_output(x, u: float, params: ModelParams) -> GasExchangeOutput:
    """Full physiological readout at a state."""
    mp_o2, mp_co2, vt_o2, vt_co2 = metabolic_rates(x, params)
    sv = stroke_volume(mp_o2, params)
    q = cardiac_output(u, sv)
    return GasExchangeOutput(mp_o2, mp_co2, vt_o2, vt_co2, sv, q,
                             weir_paee(mp_o2, mp_co2))


def process_derivative(x, u: float, delayed: tuple[float, float],
                       params: ModelParams,
                       external_mp: tuple[float, float] | None = None) -> np.ndarray:
    """Time derivative of the five states.

    delayed is the transport-delayed (arterial O2 content, alveolar CO2
    pressure) pair driving the ventilation controller. When external_mp is
    given, the tissue mass balance uses that injected (O2, CO2) metabolic
    rate instead of the state-derived one; the stroke-volume chain always
    uses the state-derived O2 uptake.
    """
    if u < 0:
        raise ValueError("heart-rate input must be non-negative")
    pvec = params.pack()
    if external_mp is None:
        dx = kernels.deriv(np.asarray(x, dtype=float), float(u),
                           float(delayed[0]), float(delayed[1]), pvec)
    else:
        dx = kernels.deriv(np.asarray(x, dtype=float), float(u),
                           float(delayed[0]), float(delayed[1]), pvec,
                           1, float(external_mp[0]), float(external_mp[1]))
    if not np.all(np.isfinite(dx)):
        raise NumericalFailure(
            f"non-finite process derivative at x={np.asarray(x)}, u={u}, "
            f"delayed={delayed}")
    return dx


def measurement(x, u: float, params: ModelParams) -> np.ndarray:
    """Observation function: blood-side (O2 uptake, CO2 release) fluxes, L/s."""
    if u < 0:
        raise ValueError("heart-rate input must be non-negative")
    return kernels.measurement(np.asarray(x, dtype=float), float(u), params.pack())


class DelayBuffer:
    """History of (arterial O2 content, alveolar CO2 pressure) at a fixed rate.

    Lookups before the recorded history return the basal pair. Single writer;
    capacity covers at least 60 s.
    """

    def __init__(self, params: ModelParams, rate: float = 1.0,
                 capacity_s: float = 120.0):
        self.rate = float(rate)
        self.basal = (params.c_a_o2_basal, params.p_a_co2_basal)
        n = max(int(capacity_s * rate) + 1, 61)
        self._ca = np.empty(n)
        self._p2 = np.empty(n)
        self._n = 0          # samples stored (grows to capacity, then slides)
        self._t_new = None   # timestamp of newest sample

    def append(self, t: float, c_a_o2: float, p_a_co2: float) -> None:
        if self._t_new is not None and t <= self._t_new:
            raise ValueError("timestamps must be strictly increasing")
        if self._n == len(self._ca):
            self._ca[:-1] = self._ca[1:]
            self._p2[:-1] = self._p2[1:]
            self._n -= 1
        self._ca[self._n] = c_a_o2
        self._p2[self._n] = p_a_co2
        self._n += 1
        self._t_new = t

    def lookup(self, t: float) -> tuple[float, float]:
        """Linearly interpolated pair at time t; basal before history."""
        if self._n == 0:
            return self.basal
        if t > self._t_new + 1e-9:
            raise ValueError("lookup time is ahead of the newest sample")
        t_old = self._t_new - (self._n - 1) / self.rate
        if t < t_old:
            return self.basal
        pos = (t - t_old) * self.rate
        j = int(pos)
        if j >= self._n - 1:
            return float(self._ca[self._n - 1]), float(self._p2[self._n - 1])
        frac = pos - j
        return (float(self._ca[j] * (1.0 - frac) + self._ca[j + 1] * frac),
                float(self._p2[j] * (1.0 - frac) + self._p2[j + 1] * frac))


def transport_delay(buffer: DelayBuffer, t: float, q: float,
                    params: ModelParams) -> tuple[float, float]:
    """Delayed controller inputs at time t for cardiac output q."""
    if q <= 0:
        raise ValueError("cardiac output must be positive for delay lookup")
    return buffer.lookup(t - params.k_t / q)


__all__ = [
    "STATE_NAMES", "clamp_state", "dissociation_o2", "dissociation_co2",
    "arterial_shunt", "stroke_volume", "cardiac_output", "controller_k1",
    "metabolic_rates", "weir_paee", "gas_exchange_output", "GasExchangeOutput",
    "process_derivative", "measurement", "DelayBuffer", "transport_delay",
    "basal_state",
]
