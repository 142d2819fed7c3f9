"""Local nonlinear observability along a state trajectory.

Stacks Jacobians of repeated Lie derivatives of the measurement map along
the process dynamics (input and delayed quantities frozen), then summarizes
rank and per-state column scores over the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ekf import numeric_jacobian
from .errors import NumericalFailure
from .model import measurement, process_derivative
from .params import ModelParams, basal_state

# Nominal state magnitudes used to make mixed-unit columns comparable
# (mmHg, mmHg, L/L, L/L, L/s). Scores are relative sensitivities.
DEFAULT_STATE_SCALES = (100.0, 40.0, 0.2, 0.5, 0.3)


@dataclass
class ObservabilityReport:
    rank_per_step: np.ndarray
    mean_rank: float
    per_state_scores: np.ndarray      # normalized to max 1
    matrix_condition: np.ndarray
    eval_indices: np.ndarray


def lie_observability_matrix(x0: np.ndarray, u0: float, order: int,
                             params: ModelParams,
                             delayed: tuple[float, float] | None = None,
                             couple_delays: bool = False,
                             jac_step: float = 1e-6,
                             dir_step: float = 1e-5) -> np.ndarray:
    """Stacked Jacobians of h, L_f h, ..., L_f^order h at a point.

    Lie derivatives are evaluated by nested directional central differences
    along f with the heart-rate input frozen at u0. The transport-delayed
    controller inputs are either frozen at the given pair (default) or, with
    couple_delays, follow the perturbed state as if the delay were locally
    negligible; coupling restores the controller's feedback pathway in the
    linearization, which otherwise leaves the ventilation row autonomous.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    if delayed is None:
        delayed = (params.c_a_o2_basal, params.p_a_co2_basal)

    if couple_delays:
        def f(x):
            ce = params.k2 * (1.0 - np.exp(-params.k3 * x[0])) ** 2
            ca = (1.0 - params.p_s) * ce + params.p_s * x[2]
            return process_derivative(x, u0, (ca, x[1]), params)
    else:
        def f(x):
            return process_derivative(x, u0, delayed, params)

    def lie(phi):
        # phi: R^5 -> R^2; returns x -> dphi(x) . f(x)
        def out(x):
            fx = f(x)
            scale = float(np.linalg.norm(fx))
            if scale == 0.0:
                return np.zeros(2)
            a = dir_step / scale
            val = (phi(x + a * fx) - phi(x - a * fx)) / (2.0 * a)
            if not np.all(np.isfinite(val)):
                raise NumericalFailure("non-finite Lie derivative")
            return val
        return out

    def h(x):
        return measurement(x, u0, params)

    blocks = []
    phi = h
    blocks.append(numeric_jacobian(phi, x0, jac_step))
    for _ in range(order):
        phi = lie(phi)
        blocks.append(numeric_jacobian(phi, x0, jac_step))
    return np.vstack(blocks)


def rank_with_tolerance(m: np.ndarray, tol: float = 1e-8) -> int:
    """Numerical rank: singular values above tol times the largest."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix must be finite")
    sv = np.linalg.svd(m, compute_uv=False)
    if len(sv) == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def per_state_scores(m: np.ndarray) -> np.ndarray:
    """Column 2-norms normalized so the strongest state scores 1."""
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=0)
    top = norms.max()
    if top == 0.0:
        raise ValueError("all-zero observability matrix has no score ordering")
    return norms / top


def trajectory_report(states: np.ndarray, u_series: np.ndarray,
                      params: ModelParams, order: int = 2, every: int = 10,
                      rank_tol: float = 1e-8,
                      state_scales=DEFAULT_STATE_SCALES,
                      couple_delays: bool = True,
                      delayed_series: np.ndarray | None = None
                      ) -> ObservabilityReport:
    """Evaluate rank and scores along a trajectory (every nth point).

    Columns are scaled by nominal state magnitudes before scoring so that
    pressure and content states contribute comparably; rank is unaffected
    by the scaling. Raw per-point column norms are averaged over the
    trajectory and then normalized to a max of 1. Delay coupling is on by
    default so the controller feedback participates in the local analysis.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    u_series = np.atleast_1d(np.asarray(u_series, dtype=float))
    scales = np.asarray(state_scales, dtype=float)
    idx = np.arange(0, len(states), max(int(every), 1))

    ranks = np.empty(len(idx), dtype=int)
    conds = np.empty(len(idx))
    norm_sum = np.zeros(5)
    for i, k in enumerate(idx):
        delayed = None
        if delayed_series is not None:
            delayed = (float(delayed_series[k, 0]), float(delayed_series[k, 1]))
        m = lie_observability_matrix(states[k], float(u_series[k]), order,
                                     params, delayed=delayed,
                                     couple_delays=couple_delays)
        m_scaled = m * scales[None, :]
        ranks[i] = rank_with_tolerance(m_scaled, rank_tol)
        sv = np.linalg.svd(m_scaled, compute_uv=False)
        conds[i] = np.inf if sv[-1] == 0.0 else sv[0] / sv[-1]
        norm_sum += np.linalg.norm(m_scaled, axis=0)

    mean_norms = norm_sum / len(idx)
    top = mean_norms.max()
    if top == 0.0:
        scores = np.zeros(5)
    else:
        scores = mean_norms / top
    return ObservabilityReport(ranks, float(ranks.mean()), scores, conds, idx)
