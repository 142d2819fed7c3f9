"""Pure-Python numeric kernels: process dynamics, measurement, integrators.

This is the fallback backend; pmekf._kernels is the compiled twin with the
same functions, argument conventions, and operation order. Keep both in sync
(tests cross-check them). Index constants below mirror params.PVEC_FIELDS.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

# Parameter-vector indices; order fixed by params.PVEC_FIELDS.
I_VA, I_VT, I_PS, I_RQ, I_L1, I_L2, I_TAU = 0, 1, 2, 3, 4, 5, 6
I_GO2, I_GCO2, I_K1, I_KT, I_K2, I_K3, I_K4 = 7, 8, 9, 10, 11, 12, 13
I_LCONV, I_PIO2, I_PICO2, I_FIO2, I_FICO2 = 14, 15, 16, 17, 18
I_PDEN, I_BTPS, I_CA0, I_PC0, I_MPFLOOR, I_SVMIN, I_SVMAX = 19, 20, 21, 22, 23, 24, 25

_ERR_OK = 0
_ERR_DIVERGED = 1
_ERR_NONFINITE = 2

# Divergence guard: 10x the state invariant bounds.
_GUARD = (2000.0, 1000.0, 10.0, 10.0, 50.0)


def _sv_q(pv, x1, x5, u):
    """State-derived O2 uptake, stroke volume and cardiac output."""
    mp_o2 = pv[I_BTPS] * x5 * (pv[I_FIO2] - x1 / pv[I_PDEN])
    arg = mp_o2 if mp_o2 > pv[I_MPFLOOR] else pv[I_MPFLOOR]
    sv = pv[I_L1] * math.log(60.0 * arg) + pv[I_L2]
    if sv < pv[I_SVMIN]:
        sv = pv[I_SVMIN]
    elif sv > pv[I_SVMAX]:
        sv = pv[I_SVMAX]
    return mp_o2, sv, u * sv


def _deriv(pv, x, u, ca_del, p2_del, mp_ext_o2, mp_ext_co2, use_ext):
    x1, x2, x3, x4, x5 = x
    ce_o2 = pv[I_K2] * (1.0 - math.exp(-pv[I_K3] * x1)) ** 2
    ce_co2 = pv[I_K4] * x2
    ca_o2 = (1.0 - pv[I_PS]) * ce_o2 + pv[I_PS] * x3
    ca_co2 = (1.0 - pv[I_PS]) * ce_co2 + pv[I_PS] * x4
    mp_o2, sv, q = _sv_q(pv, x1, x5, u)
    mp_co2 = pv[I_BTPS] * (-x5) * (pv[I_FICO2] - x2 / pv[I_PDEN])
    if use_ext:
        mp_o2_t = mp_ext_o2
        mp_co2_t = mp_ext_co2
    else:
        mp_o2_t = mp_o2
        mp_co2_t = mp_co2
    lam_q = pv[I_LCONV] * q * (1.0 - pv[I_PS])
    dx1 = (x5 * (pv[I_PIO2] - x1) + lam_q * (x3 - ce_o2)) / pv[I_VA]
    dx2 = (x5 * (pv[I_PICO2] - x2) + lam_q * (x4 - ce_co2)) / pv[I_VA]
    dx3 = (q * (ca_o2 - x3) - mp_o2_t) / pv[I_VT]
    dx4 = (q * (ca_co2 - x4) + mp_co2_t) / pv[I_VT]
    dx5 = (-pv[I_GO2] * ca_del + pv[I_GCO2] * p2_del + pv[I_K1] - x5) / pv[I_TAU]
    return (dx1, dx2, dx3, dx4, dx5)


def deriv(x, u, ca_del, p2_del, pvec, use_ext=0, mp_ext_o2=0.0, mp_ext_co2=0.0):
    """Process derivative f(x, u) with frozen delayed inputs."""
    pv = tuple(pvec)
    d = _deriv(pv, tuple(x), float(u), float(ca_del), float(p2_del),
               float(mp_ext_o2), float(mp_ext_co2), int(use_ext))
    return np.array(d)


def measurement(x, u, pvec):
    """Pulmonary gas-exchange fluxes observed through the metabolic proxies."""
    pv = tuple(pvec)
    x1, x2, x3, x4, x5 = (float(v) for v in x)
    _, _, q = _sv_q(pv, x1, x5, float(u))
    ce_o2 = pv[I_K2] * (1.0 - math.exp(-pv[I_K3] * x1)) ** 2
    z1 = q * (1.0 - pv[I_PS]) * (ce_o2 - x3)
    z2 = q * (1.0 - pv[I_PS]) * (x4 - pv[I_K4] * x2)
    return np.array([z1, z2])


def readout(x, pvec):
    """State-derived gas rates and energy readout: (mp_o2, mp_co2, paee)."""
    pv = tuple(pvec)
    x1, x2, _, _, x5 = (float(v) for v in x)
    mp_o2 = pv[I_BTPS] * x5 * (pv[I_FIO2] - x1 / pv[I_PDEN])
    mp_co2 = pv[I_BTPS] * (-x5) * (pv[I_FICO2] - x2 / pv[I_PDEN])
    paee = 3.9 * mp_o2 + 1.1 * mp_co2
    if paee < 0.0:
        paee = 0.0
    return mp_o2, mp_co2, paee


def predict_euler(x, u, ca_del, p2_del, pvec, dt, nsub):
    """Explicit-Euler propagation over dt with the ventilation state clamped."""
    pv = tuple(pvec)
    s = [float(v) for v in x]
    u = float(u)
    ca_del = float(ca_del)
    p2_del = float(p2_del)
    h = float(dt) / int(nsub)
    for _ in range(int(nsub)):
        d = _deriv(pv, s, u, ca_del, p2_del, 0.0, 0.0, 0)
        for k in range(5):
            s[k] += h * d[k]
        if s[4] < 0.0:
            s[4] = 0.0
    return np.array(s)


def _drive(t, t0, target, start, inv_tau):
    return target + (start - target) * math.exp(-(t - t0) * inv_tau)


def simulate(pvec, dt, n_steps, seg_end_step, seg_t0, seg_m_tgt, seg_m_start,
             seg_u_tgt, seg_u_start, onset_tau, x0, steps_per_sec,
             states_out, u_out, m_out, z_out, paee_out):
    """Closed-loop RK4 integration with transport delay; 1 Hz sampled outputs.

    The injected metabolic drive and the heart-rate input follow per-segment
    first-order onset trajectories evaluated in closed form at stage times.
    Delayed quantities are read from the full-resolution state history with
    linear interpolation; pre-history lookups return basal values.
    Returns (code, bad_state, bad_step); code 0 means success.
    """
    pv = tuple(pvec)
    n_steps = int(n_steps)
    sps = int(steps_per_sec)
    inv_tau = 1.0 / float(onset_tau)
    basal_ca = pv[I_CA0]
    basal_p2 = pv[I_PC0]
    one_m_ps = 1.0 - pv[I_PS]

    hist_ca = np.empty(n_steps + 1)
    hist_p2 = np.empty(n_steps + 1)

    s = [float(v) for v in x0]
    seg = 0
    n_seg = len(seg_end_step)

    def delayed(t_del, i_filled):
        if t_del <= 0.0:
            return basal_ca, basal_p2
        pos = t_del / dt
        j = int(pos)
        if j >= i_filled:
            return hist_ca[i_filled], hist_p2[i_filled]
        frac = pos - j
        return (hist_ca[j] * (1.0 - frac) + hist_ca[j + 1] * frac,
                hist_p2[j] * (1.0 - frac) + hist_p2[j + 1] * frac)

    def record(idx, t, x):
        u_t = _drive(t, seg_t0[seg], seg_u_tgt[seg], seg_u_start[seg], inv_tau)
        m_t = _drive(t, seg_t0[seg], seg_m_tgt[seg], seg_m_start[seg], inv_tau)
        u_out[idx] = u_t
        m_out[idx] = m_t
        states_out[idx, :] = x
        _, _, q = _sv_q(pv, x[0], x[4], u_t)
        ce_o2 = pv[I_K2] * (1.0 - math.exp(-pv[I_K3] * x[0])) ** 2
        z_out[idx, 0] = q * one_m_ps * (ce_o2 - x[2])
        z_out[idx, 1] = q * one_m_ps * (x[3] - pv[I_K4] * x[1])
        mp_o2, mp_co2, paee = readout(x, pv)
        paee_out[idx] = paee

    record(0, 0.0, s)
    out_idx = 1

    for i in range(n_steps):
        t = i * dt
        ce_o2 = pv[I_K2] * (1.0 - math.exp(-pv[I_K3] * s[0])) ** 2
        hist_ca[i] = one_m_ps * ce_o2 + pv[I_PS] * s[2]
        hist_p2[i] = s[1]

        if i >= seg_end_step[seg] and seg + 1 < n_seg:
            seg += 1

        t0 = seg_t0[seg]
        u_a = _drive(t, t0, seg_u_tgt[seg], seg_u_start[seg], inv_tau)
        u_b = _drive(t + 0.5 * dt, t0, seg_u_tgt[seg], seg_u_start[seg], inv_tau)
        u_c = _drive(t + dt, t0, seg_u_tgt[seg], seg_u_start[seg], inv_tau)
        m_a = _drive(t, t0, seg_m_tgt[seg], seg_m_start[seg], inv_tau)
        m_b = _drive(t + 0.5 * dt, t0, seg_m_tgt[seg], seg_m_start[seg], inv_tau)
        m_c = _drive(t + dt, t0, seg_m_tgt[seg], seg_m_start[seg], inv_tau)

        # Transport delay frozen over the step (cardiac output varies slowly);
        # the delayed values themselves are interpolated at each stage time.
        _, _, q0 = _sv_q(pv, s[0], s[4], u_a)
        tdel = pv[I_KT] / q0
        ca_a, p2_a = delayed(t - tdel, i)
        ca_b, p2_b = delayed(t + 0.5 * dt - tdel, i)
        ca_c, p2_c = delayed(t + dt - tdel, i)

        k1 = _deriv(pv, s, u_a, ca_a, p2_a, m_a, pv[I_RQ] * m_a, 1)
        xs = [s[j] + 0.5 * dt * k1[j] for j in range(5)]
        k2 = _deriv(pv, xs, u_b, ca_b, p2_b, m_b, pv[I_RQ] * m_b, 1)
        xs = [s[j] + 0.5 * dt * k2[j] for j in range(5)]
        k3 = _deriv(pv, xs, u_b, ca_b, p2_b, m_b, pv[I_RQ] * m_b, 1)
        xs = [s[j] + dt * k3[j] for j in range(5)]
        k4 = _deriv(pv, xs, u_c, ca_c, p2_c, m_c, pv[I_RQ] * m_c, 1)
        for j in range(5):
            s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if s[4] < 0.0:
            s[4] = 0.0

        for j in range(5):
            if not math.isfinite(s[j]):
                return _ERR_NONFINITE, j, i + 1
            if abs(s[j]) > _GUARD[j]:
                return _ERR_DIVERGED, j, i + 1

        if (i + 1) % sps == 0:
            hist_ca[i + 1] = (one_m_ps
                              * pv[I_K2] * (1.0 - math.exp(-pv[I_K3] * s[0])) ** 2
                              + pv[I_PS] * s[2])
            hist_p2[i + 1] = s[1]
            record(out_idx, t + dt, s)
            out_idx += 1

    return _ERR_OK, 0, 0
