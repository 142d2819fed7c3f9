"""Forward closed-loop simulator: ground truth for filter validation.

A scenario scripts activity segments; each segment sets a target metabolic
drive (injected into the tissue mass balance) and a target heart rate, both
approached through a first-order onset response. The loop is integrated with
fixed-step RK4 at millisecond resolution, transport delay included, and
sampled to 1 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as _default_kernels
from .errors import NumericalFailure
from .model import STATE_NAMES, measurement, process_derivative
from .params import ModelParams, basal_state

INTENSITIES = ("rest", "low", "moderate", "moderate-high")
ONSET_TAU_S = 30.0


@dataclass(frozen=True)
class ScenarioSegment:
    duration_s: float
    intensity: str
    target_rm_o2: float     # L/s, activity-related O2 uptake drive
    hr_bpm: float

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("segment duration must be positive")
        if self.intensity not in INTENSITIES:
            raise ValueError(f"unknown intensity {self.intensity!r}")
        if self.target_rm_o2 < 0:
            raise ValueError("target_rm_o2 must be non-negative")
        if self.hr_bpm <= 0:
            raise ValueError("hr_bpm must be positive")


@dataclass(frozen=True)
class Scenario:
    segments: tuple[ScenarioSegment, ...]
    noise_sigma_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        if self.noise_sigma_frac < 0:
            raise ValueError("noise_sigma_frac must be non-negative")

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)


def parse_scenario(text: str, noise_sigma_frac: float = 0.0, seed: int = 0) -> Scenario:
    """Parse the scenario format: one `duration intensity rm_o2 hr_bpm` per line."""
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"scenario line {lineno}: expected 4 fields, got {len(parts)}")
        segments.append(ScenarioSegment(float(parts[0]), parts[1],
                                        float(parts[2]), float(parts[3])))
    return Scenario(tuple(segments), noise_sigma_frac, seed)


@dataclass
class SimulationResult:
    """1 Hz sampled truth: states, readout, clean proxies and inputs."""

    times: np.ndarray            # seconds, 0..N
    states: np.ndarray           # (N+1, 5)
    paee_true: np.ndarray        # kcal/s, state-derived readout
    proxies_clean: np.ndarray    # (N+1, 2) blood-side fluxes, L/s
    hr_bps: np.ndarray           # heart-rate input, beats/s
    drive_rm_o2: np.ndarray      # injected metabolic drive, L/s


def _segment_tables(scenario: Scenario, params: ModelParams, dt: float):
    """Step-index boundaries plus closed-form onset start values per segment."""
    n_seg = len(scenario.segments)
    seg_steps = np.empty(n_seg, dtype=np.int64)
    for i, seg in enumerate(scenario.segments):
        steps = int(round(seg.duration_s / dt))
        if steps < 1 or abs(steps * dt - seg.duration_s) > 1e-9 * max(1.0, seg.duration_s):
            raise ValueError(
                f"segment duration {seg.duration_s}s is not a multiple of dt={dt}")
        seg_steps[i] = steps
    seg_end = np.cumsum(seg_steps)

    t0 = np.empty(n_seg)
    m_tgt = np.array([s.target_rm_o2 for s in scenario.segments])
    u_tgt = np.array([s.hr_bpm / 60.0 for s in scenario.segments])
    m_start = np.empty(n_seg)
    u_start = np.empty(n_seg)
    m_cur, u_cur = 0.0, params.u_basal   # start at rest
    t_cur = 0.0
    for i, seg in enumerate(scenario.segments):
        t0[i] = t_cur
        m_start[i] = m_cur
        u_start[i] = u_cur
        decay = np.exp(-seg.duration_s / ONSET_TAU_S)
        m_cur = m_tgt[i] + (m_cur - m_tgt[i]) * decay
        u_cur = u_tgt[i] + (u_cur - u_tgt[i]) * decay
        t_cur += seg.duration_s
    return seg_end, t0, m_tgt, m_start, u_tgt, u_start


def simulate_forward(scenario: Scenario, params: ModelParams,
                     dt_fine: float = 0.001,
                     kernels=None) -> SimulationResult:
    """Integrate the closed loop and sample everything at integer seconds."""
    if dt_fine > 0.01:
        raise ValueError("dt_fine must be at most 0.01 s")
    steps_per_sec = int(round(1.0 / dt_fine))
    if abs(steps_per_sec * dt_fine - 1.0) > 1e-12:
        raise ValueError("1/dt_fine must be an integer (whole steps per second)")
    k = kernels or _default_kernels

    seg_end, t0, m_tgt, m_start, u_tgt, u_start = _segment_tables(
        scenario, params, dt_fine)
    n_steps = int(seg_end[-1])
    n_out = n_steps // steps_per_sec + 1

    states = np.empty((n_out, 5))
    u_out = np.empty(n_out)
    m_out = np.empty(n_out)
    z_out = np.empty((n_out, 2))
    paee = np.empty(n_out)

    code, bad_state, bad_step = k.simulate(
        params.pack(), dt_fine, n_steps, seg_end, t0, m_tgt, m_start,
        u_tgt, u_start, ONSET_TAU_S, basal_state(params), steps_per_sec,
        states, u_out, m_out, z_out, paee)
    if code != 0:
        reason = "non-finite value" if code == 2 else "divergence"
        raise NumericalFailure(
            f"{reason} in state {STATE_NAMES[bad_state]} at "
            f"t={bad_step * dt_fine:.3f} s")

    times = np.arange(n_out, dtype=float)
    return SimulationResult(times, states, paee, z_out, u_out, m_out)


def synthesize_measurements(proxies_clean: np.ndarray, noise_sigma_frac: float,
                            seed: int) -> np.ndarray:
    """Corrupt clean proxies with channel-RMS-scaled Gaussian noise.

    Deterministic under seed; values are floored at zero like real
    IMU-derived proxies.
    """
    if noise_sigma_frac < 0:
        raise ValueError("noise_sigma_frac must be non-negative")
    z = np.asarray(proxies_clean, dtype=float)
    if noise_sigma_frac == 0:
        return z.copy()
    rng = np.random.default_rng(seed)
    rms = np.sqrt(np.mean(z ** 2, axis=0))
    noisy = z + rng.standard_normal(z.shape) * (noise_sigma_frac * rms)
    return np.maximum(noisy, 0.0)


def steady_state_solve(mp_o2: float, u: float, params: ModelParams,
                       tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Equilibrium state for a constant metabolic drive and heart rate.

    Damped Newton iteration on the five balance equations with the delayed
    controller inputs set self-consistently to their current values.
    """
    if mp_o2 < 0:
        raise ValueError("mp_o2 must be non-negative")

    def residual(x):
        ce_o2 = params.k2 * (1.0 - np.exp(-params.k3 * x[0])) ** 2
        ca_o2 = (1.0 - params.p_s) * ce_o2 + params.p_s * x[2]
        return process_derivative(x, u, (ca_o2, x[1]), params,
                                  external_mp=(mp_o2, params.rq * mp_o2))

    x = basal_state(params)
    # warm start from the alveolar gas balance when a drive is present
    if mp_o2 > 0:
        x5_guess = max(params.lambda_conv * params.rq * mp_o2
                       / max(params.p_a_co2_basal - params.p_i_co2, 1.0), 1e-3)
        x = x.copy()
        x[4] = x5_guess
        x[0] = params.p_i_o2 - params.lambda_conv * mp_o2 / x5_guess
        x[1] = params.p_i_co2 + params.lambda_conv * params.rq * mp_o2 / x5_guess

    r = residual(x)
    for _ in range(max_iter):
        norm = float(np.max(np.abs(r)))
        if norm < tol:
            return x
        jac = np.empty((5, 5))
        for j in range(5):
            h = 1e-7 * max(abs(x[j]), 1e-3)
            xp = x.copy(); xp[j] += h
            xm = x.copy(); xm[j] -= h
            jac[:, j] = (residual(xp) - residual(xm)) / (2 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular Jacobian in steady-state solve") from exc
        lam = 1.0
        for _ in range(40):
            x_new = x + lam * step
            x_new[4] = max(x_new[4], 0.0)
            r_new = residual(x_new)
            if np.max(np.abs(r_new)) < norm:
                x, r = x_new, r_new
                break
            lam *= 0.5
        else:
            raise NumericalFailure("steady-state line search stalled")
    raise NumericalFailure(
        f"steady-state solve did not reach residual {tol} in {max_iter} iterations")
