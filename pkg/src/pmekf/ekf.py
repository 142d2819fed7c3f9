"""Discrete-time extended Kalman filter over the gas-exchange model.

Prediction integrates the process dynamics driven by heart rate with the
delayed controller inputs frozen from a buffer of past posteriors; the
correction step fuses the IMU-derived metabolic proxies. Covariance updates
use the Joseph form and are re-symmetrized every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import NumericalFailure
from .model import (DelayBuffer, cardiac_output, clamp_state, dissociation_o2,
                    measurement, metabolic_rates, stroke_volume, weir_paee)
from .params import ModelParams, basal_state
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

DEFAULT_Q_DIAG = (1e-2, 1e-2, 1e-6, 1e-6, 1e-4)


@dataclass
class FilterConfig:
    """Filter tuning; defaults target 1 Hz wearable data."""

    dt: float = 1.0
    substeps: int = 10
    q_proc: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_Q_DIAG))
    r_meas: np.ndarray | None = None   # fixed 2-vector diag; None = adaptive
    r_frac: float = 0.10               # adaptive noise: fraction of running proxy RMS
    x0: np.ndarray | None = None       # None = basal state
    p0: np.ndarray | None = None       # diag; None = 10 * q_proc
    jacobian_step: float = 1e-6
    constant_hr: bool = False
    constant_hr_bpm: float = 70.0
    cond_limit: float = 1e12

    def __post_init__(self):
        self.q_proc = np.asarray(self.q_proc, dtype=float)
        if self.dt <= 0 or self.substeps < 1:
            raise ValueError("need dt > 0 and substeps >= 1")
        if self.q_proc.shape != (5,) or np.any(self.q_proc < 0):
            raise ValueError("q_proc must be 5 non-negative diagonal entries")
        if self.r_meas is not None:
            self.r_meas = np.asarray(self.r_meas, dtype=float)
            if self.r_meas.shape != (2,) or np.any(self.r_meas < 0):
                raise ValueError("r_meas must be 2 non-negative diagonal entries")


def constant_hr_mode(cfg: FilterConfig, hr_bpm: float = 70.0) -> FilterConfig:
    """Config variant replacing the measured HR input with a fixed value."""
    out = FilterConfig(**{**cfg.__dict__})
    out.constant_hr = True
    out.constant_hr_bpm = hr_bpm
    return out


@dataclass
class FilterOutput:
    times: np.ndarray
    states: np.ndarray        # posterior means, (n, 5)
    cov_diag: np.ndarray      # posterior variances, (n, 5)
    innovations: np.ndarray   # (n, 2)
    paee: TimeSeries          # kcal/s at 1 Hz
    ci95: np.ndarray          # (n, 5), 1.96 * posterior std


def numeric_jacobian(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate relative steps."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    if not np.all(np.isfinite(f0)):
        raise NumericalFailure("function non-finite at the Jacobian base point")
    jac = np.empty((len(f0), len(x)))
    for j in range(len(x)):
        h = step * max(abs(x[j]), 1.0)
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NumericalFailure(f"function non-finite at perturbed point {j}")
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def predict(x: np.ndarray, p: np.ndarray, u: float, buffer: DelayBuffer,
            t: float, cfg: FilterConfig, params: ModelParams
            ) -> tuple[np.ndarray, np.ndarray]:
    """Time update: Euler sub-step state propagation, first-order covariance.

    The delayed controller inputs are read once from the posterior buffer at
    t - T(q) and treated as exogenous constants during the step, so the
    linearization stays five-dimensional.
    """
    pvec = params.pack()
    mp_o2 = metabolic_rates(x, params)[0]
    q_flow = cardiac_output(u, stroke_volume(mp_o2, params))
    ca_del, p2_del = buffer.lookup(t - params.k_t / max(q_flow, 1e-9))

    x_pred = kernels.predict_euler(x, u, ca_del, p2_del, pvec, cfg.dt, cfg.substeps)
    if not np.all(np.isfinite(x_pred)):
        raise NumericalFailure(f"prediction non-finite from x={x}, u={u}")

    def f_dyn(xx):
        return kernels.deriv(xx, u, ca_del, p2_del, pvec)

    jac_f = numeric_jacobian(f_dyn, x, cfg.jacobian_step)
    f_mat = np.eye(5) + cfg.dt * jac_f
    p_pred = _symmetrize(f_mat @ p @ f_mat.T + np.diag(cfg.q_proc))
    return x_pred, p_pred


def kalman_correct(x_pred: np.ndarray, p_pred: np.ndarray, z: np.ndarray,
                   h_fun, r_diag, jac_step: float = 1e-6,
                   cond_limit: float = 1e12
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generic Joseph-form correction; returns (x, P, innovation).

    A near-singular innovation covariance (condition number beyond
    cond_limit) skips the correction for this step with a warning.
    """
    x_pred = np.atleast_1d(np.asarray(x_pred, dtype=float))
    p_pred = np.atleast_2d(np.asarray(p_pred, dtype=float))
    r = np.diag(np.atleast_1d(np.asarray(r_diag, dtype=float)))
    z_pred = np.atleast_1d(np.asarray(h_fun(x_pred), dtype=float))
    innovation = np.atleast_1d(np.asarray(z, dtype=float)) - z_pred
    h_mat = numeric_jacobian(h_fun, x_pred, jac_step)
    s = h_mat @ p_pred @ h_mat.T + r
    if np.linalg.cond(s) > cond_limit:
        log.warning("innovation covariance ill-conditioned; skipping update")
        return x_pred.copy(), p_pred.copy(), innovation
    gain = p_pred @ h_mat.T @ np.linalg.inv(s)
    x_post = x_pred + gain @ innovation
    ikh = np.eye(len(x_pred)) - gain @ h_mat
    p_post = _symmetrize(ikh @ p_pred @ ikh.T + gain @ r @ gain.T)
    return x_post, p_post, innovation


def update(x_pred: np.ndarray, p_pred: np.ndarray, z: np.ndarray, u: float,
           cfg: FilterConfig, params: ModelParams,
           r_diag: np.ndarray | None = None
           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Measurement update against the gas-exchange observation function."""
    if r_diag is None:
        r_diag = cfg.r_meas if cfg.r_meas is not None else np.ones(2)

    def h_fun(xx):
        return measurement(xx, u, params)

    x_post, p_post, innovation = kalman_correct(
        x_pred, p_pred, z, h_fun, r_diag, cfg.jacobian_step, cfg.cond_limit)
    return clamp_state(x_post), p_post, innovation


def _running_rms(z: np.ndarray) -> np.ndarray:
    """Per-channel RMS over samples seen so far (expanding window)."""
    sq = np.cumsum(z ** 2, axis=0)
    n = np.arange(1, len(z) + 1)[:, None]
    return np.sqrt(sq / n)


def run_filter(u_series: np.ndarray, z_series: np.ndarray, cfg: FilterConfig,
               params: ModelParams, profile=None) -> FilterOutput:
    """Filter a session: per sample, predict over dt then correct.

    u_series is the heart-rate input in beats/s, z_series the (O2, CO2)
    metabolic proxies in L/s, both at 1 Hz and equal length. After each
    correction the posterior's arterial O2 content and alveolar CO2 pressure
    are appended to the delay buffer, and the energy readout is emitted.
    """
    u_series = np.asarray(u_series, dtype=float)
    z_series = np.asarray(z_series, dtype=float)
    if z_series.ndim != 2 or z_series.shape[1] != 2:
        raise ValueError("z_series must have shape (n, 2)")
    if len(u_series) != len(z_series):
        raise ValueError(
            f"input lengths differ: u has {len(u_series)}, z has {len(z_series)}")
    n = len(u_series)

    if cfg.constant_hr:
        u_series = np.full(n, cfg.constant_hr_bpm / 60.0)

    x = cfg.x0.copy() if cfg.x0 is not None else basal_state(params)
    p = (np.diag(cfg.p0) if cfg.p0 is not None
         else np.diag(10.0 * cfg.q_proc))

    if cfg.r_meas is None:
        rms = _running_rms(z_series)
        sigma = np.maximum(cfg.r_frac * rms, 1e-6)
        r_all = np.stack([sigma[:, 0] ** 2, (0.8 * sigma[:, 1]) ** 2], axis=1)
    else:
        r_all = np.tile(cfg.r_meas, (n, 1))

    buffer = DelayBuffer(params, rate=1.0 / cfg.dt)
    states = np.empty((n, 5))
    cov_diag = np.empty((n, 5))
    innovations = np.empty((n, 2))
    paee = np.empty(n)

    t = 0.0
    for k in range(n):
        if k > 0:
            x, p = predict(x, p, u_series[k], buffer, t, cfg, params)
            t += cfg.dt
        x, p, innovations[k] = update(x, p, z_series[k], u_series[k], cfg,
                                      params, r_all[k])
        states[k] = x
        cov_diag[k] = np.diag(p)
        mp_o2, mp_co2, _, _ = metabolic_rates(x, params)
        paee[k] = weir_paee(mp_o2, mp_co2)
        ca_o2 = ((1.0 - params.p_s) * dissociation_o2(float(x[0]), params)
                 + params.p_s * x[2])
        buffer.append(t, ca_o2, float(x[1]))

    times = np.arange(n, dtype=float) * cfg.dt
    ci95 = 1.96 * np.sqrt(np.maximum(cov_diag, 0.0))
    return FilterOutput(times, states, cov_diag, innovations,
                        TimeSeries(0.0, 1.0 / cfg.dt, paee, "kcal/s"), ci95)
