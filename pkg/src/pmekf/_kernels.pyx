# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled numeric kernels; mirrors _kernels_py.py exactly.

Same parameter-vector layout, same operation order. Keep both in sync.
"""

import numpy as np

from libc.math cimport exp, log, fabs, isfinite

BACKEND_NAME = "compiled"

cdef enum:
    I_VA, I_VT, I_PS, I_RQ, I_L1, I_L2, I_TAU
    I_GO2, I_GCO2, I_K1, I_KT, I_K2, I_K3, I_K4
    I_LCONV, I_PIO2, I_PICO2, I_FIO2, I_FICO2
    I_PDEN, I_BTPS, I_CA0, I_PC0, I_MPFLOOR, I_SVMIN, I_SVMAX


cdef inline double c_q(const double* pv, double x1, double x5, double u) nogil:
    cdef double mp_o2 = pv[I_BTPS] * x5 * (pv[I_FIO2] - x1 / pv[I_PDEN])
    cdef double arg = mp_o2 if mp_o2 > pv[I_MPFLOOR] else pv[I_MPFLOOR]
    cdef double sv = pv[I_L1] * log(60.0 * arg) + pv[I_L2]
    if sv < pv[I_SVMIN]:
        sv = pv[I_SVMIN]
    elif sv > pv[I_SVMAX]:
        sv = pv[I_SVMAX]
    return u * sv


cdef void c_deriv(const double* pv, const double* x, double u,
                  double ca_del, double p2_del,
                  double mp_ext_o2, double mp_ext_co2, int use_ext,
                  double* dx) nogil:
    cdef double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3], x5 = x[4]
    cdef double ce_o2 = pv[I_K2] * (1.0 - exp(-pv[I_K3] * x1)) ** 2
    cdef double ce_co2 = pv[I_K4] * x2
    cdef double ca_o2 = (1.0 - pv[I_PS]) * ce_o2 + pv[I_PS] * x3
    cdef double ca_co2 = (1.0 - pv[I_PS]) * ce_co2 + pv[I_PS] * x4
    cdef double q = c_q(pv, x1, x5, u)
    cdef double mp_o2 = pv[I_BTPS] * x5 * (pv[I_FIO2] - x1 / pv[I_PDEN])
    cdef double mp_co2 = pv[I_BTPS] * (-x5) * (pv[I_FICO2] - x2 / pv[I_PDEN])
    cdef double mp_o2_t, mp_co2_t
    if use_ext:
        mp_o2_t = mp_ext_o2
        mp_co2_t = mp_ext_co2
    else:
        mp_o2_t = mp_o2
        mp_co2_t = mp_co2
    cdef double lam_q = pv[I_LCONV] * q * (1.0 - pv[I_PS])
    dx[0] = (x5 * (pv[I_PIO2] - x1) + lam_q * (x3 - ce_o2)) / pv[I_VA]
    dx[1] = (x5 * (pv[I_PICO2] - x2) + lam_q * (x4 - ce_co2)) / pv[I_VA]
    dx[2] = (q * (ca_o2 - x3) - mp_o2_t) / pv[I_VT]
    dx[3] = (q * (ca_co2 - x4) + mp_co2_t) / pv[I_VT]
    dx[4] = (-pv[I_GO2] * ca_del + pv[I_GCO2] * p2_del + pv[I_K1] - x5) / pv[I_TAU]


def deriv(x, u, ca_del, p2_del, pvec, use_ext=0, mp_ext_o2=0.0, mp_ext_co2=0.0):
    """Process derivative f(x, u) with frozen delayed inputs."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pvec, dtype=np.float64)
    out = np.empty(5)
    cdef double[::1] ov = out
    c_deriv(&pv[0], &xv[0], u, ca_del, p2_del, mp_ext_o2, mp_ext_co2,
            int(use_ext), &ov[0])
    return out


def measurement(x, u, pvec):
    """Pulmonary gas-exchange fluxes observed through the metabolic proxies."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pvec, dtype=np.float64)
    cdef double q = c_q(&pv[0], xv[0], xv[4], u)
    cdef double ce_o2 = pv[I_K2] * (1.0 - exp(-pv[I_K3] * xv[0])) ** 2
    out = np.empty(2)
    cdef double[::1] ov = out
    ov[0] = q * (1.0 - pv[I_PS]) * (ce_o2 - xv[2])
    ov[1] = q * (1.0 - pv[I_PS]) * (xv[3] - pv[I_K4] * xv[1])
    return out


cdef inline void c_readout(const double* pv, const double* x,
                           double* mp_o2, double* mp_co2, double* paee) nogil:
    mp_o2[0] = pv[I_BTPS] * x[4] * (pv[I_FIO2] - x[0] / pv[I_PDEN])
    mp_co2[0] = pv[I_BTPS] * (-x[4]) * (pv[I_FICO2] - x[1] / pv[I_PDEN])
    paee[0] = 3.9 * mp_o2[0] + 1.1 * mp_co2[0]
    if paee[0] < 0.0:
        paee[0] = 0.0


def readout(x, pvec):
    """State-derived gas rates and energy readout: (mp_o2, mp_co2, paee)."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pvec, dtype=np.float64)
    cdef double a = 0.0, b = 0.0, c = 0.0
    c_readout(&pv[0], &xv[0], &a, &b, &c)
    return a, b, c


def predict_euler(x, u, ca_del, p2_del, pvec, dt, nsub):
    """Explicit-Euler propagation over dt with the ventilation state clamped."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pvec, dtype=np.float64)
    cdef double s[5]
    cdef double dxv[5]
    cdef int k, n = int(nsub)
    cdef double h = dt / n
    cdef double uu = u, ca = ca_del, p2 = p2_del
    for k in range(5):
        s[k] = xv[k]
    cdef int i
    for i in range(n):
        c_deriv(&pv[0], s, uu, ca, p2, 0.0, 0.0, 0, dxv)
        for k in range(5):
            s[k] += h * dxv[k]
        if s[4] < 0.0:
            s[4] = 0.0
    out = np.empty(5)
    cdef double[::1] ov = out
    for k in range(5):
        ov[k] = s[k]
    return out


cdef inline double c_drive(double t, double t0, double target, double start,
                           double inv_tau) nogil:
    return target + (start - target) * exp(-(t - t0) * inv_tau)


def simulate(pvec, double dt, long n_steps, seg_end_step, seg_t0,
             seg_m_tgt, seg_m_start, seg_u_tgt, seg_u_start,
             double onset_tau, x0, long steps_per_sec,
             states_out, u_out, m_out, z_out, paee_out):
    """Closed-loop RK4 integration; see _kernels_py.simulate for semantics."""
    cdef double[::1] pvv = np.ascontiguousarray(pvec, dtype=np.float64)
    cdef const double* pv = &pvv[0]
    cdef long[::1] ends = np.ascontiguousarray(seg_end_step, dtype=np.int64)
    cdef double[::1] st0 = np.ascontiguousarray(seg_t0, dtype=np.float64)
    cdef double[::1] smt = np.ascontiguousarray(seg_m_tgt, dtype=np.float64)
    cdef double[::1] sms = np.ascontiguousarray(seg_m_start, dtype=np.float64)
    cdef double[::1] sut = np.ascontiguousarray(seg_u_tgt, dtype=np.float64)
    cdef double[::1] sus = np.ascontiguousarray(seg_u_start, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:, ::1] so = states_out
    cdef double[::1] uo = u_out
    cdef double[::1] mo = m_out
    cdef double[:, ::1] zo = z_out
    cdef double[::1] po = paee_out

    hist_ca_arr = np.empty(n_steps + 1)
    hist_p2_arr = np.empty(n_steps + 1)
    cdef double[::1] hist_ca = hist_ca_arr
    cdef double[::1] hist_p2 = hist_p2_arr

    cdef double inv_tau = 1.0 / onset_tau
    cdef double basal_ca = pv[I_CA0]
    cdef double basal_p2 = pv[I_PC0]
    cdef double one_m_ps = 1.0 - pv[I_PS]
    cdef double rq = pv[I_RQ]

    cdef double s[5]
    cdef double xs[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef int j
    for j in range(5):
        s[j] = xv[j]

    cdef long seg = 0, n_seg = ends.shape[0]
    cdef long i, out_idx = 1
    cdef double t, t0, u_a, u_b, u_c, m_a, m_b, m_c
    cdef double q0, tdel, ce
    cdef double ca_a, p2_a, ca_b, p2_b, ca_c, p2_c
    cdef double pos, frac
    cdef long jj
    cdef double mp1 = 0.0, mp2 = 0.0, pe = 0.0
    cdef double guard[5]
    guard[0] = 2000.0; guard[1] = 1000.0; guard[2] = 10.0
    guard[3] = 10.0; guard[4] = 50.0
    cdef int err = 0
    cdef long err_state = 0, err_step = 0

    # t = 0 sample
    u_a = c_drive(0.0, st0[0], sut[0], sus[0], inv_tau)
    m_a = c_drive(0.0, st0[0], smt[0], sms[0], inv_tau)
    uo[0] = u_a
    mo[0] = m_a
    for j in range(5):
        so[0, j] = s[j]
    q0 = c_q(pv, s[0], s[4], u_a)
    ce = pv[I_K2] * (1.0 - exp(-pv[I_K3] * s[0])) ** 2
    zo[0, 0] = q0 * one_m_ps * (ce - s[2])
    zo[0, 1] = q0 * one_m_ps * (s[3] - pv[I_K4] * s[1])
    c_readout(pv, s, &mp1, &mp2, &pe)
    po[0] = pe

    with nogil:
        for i in range(n_steps):
            t = i * dt
            ce = pv[I_K2] * (1.0 - exp(-pv[I_K3] * s[0])) ** 2
            hist_ca[i] = one_m_ps * ce + pv[I_PS] * s[2]
            hist_p2[i] = s[1]

            if i >= ends[seg] and seg + 1 < n_seg:
                seg += 1

            t0 = st0[seg]
            u_a = c_drive(t, t0, sut[seg], sus[seg], inv_tau)
            u_b = c_drive(t + 0.5 * dt, t0, sut[seg], sus[seg], inv_tau)
            u_c = c_drive(t + dt, t0, sut[seg], sus[seg], inv_tau)
            m_a = c_drive(t, t0, smt[seg], sms[seg], inv_tau)
            m_b = c_drive(t + 0.5 * dt, t0, smt[seg], sms[seg], inv_tau)
            m_c = c_drive(t + dt, t0, smt[seg], sms[seg], inv_tau)

            q0 = c_q(pv, s[0], s[4], u_a)
            tdel = pv[I_KT] / q0

            # delayed lookups at the three stage times
            pos = (t - tdel) / dt
            if pos <= 0.0:
                ca_a = basal_ca; p2_a = basal_p2
            else:
                jj = <long> pos
                if jj >= i:
                    ca_a = hist_ca[i]; p2_a = hist_p2[i]
                else:
                    frac = pos - jj
                    ca_a = hist_ca[jj] * (1.0 - frac) + hist_ca[jj + 1] * frac
                    p2_a = hist_p2[jj] * (1.0 - frac) + hist_p2[jj + 1] * frac
            pos = (t + 0.5 * dt - tdel) / dt
            if pos <= 0.0:
                ca_b = basal_ca; p2_b = basal_p2
            else:
                jj = <long> pos
                if jj >= i:
                    ca_b = hist_ca[i]; p2_b = hist_p2[i]
                else:
                    frac = pos - jj
                    ca_b = hist_ca[jj] * (1.0 - frac) + hist_ca[jj + 1] * frac
                    p2_b = hist_p2[jj] * (1.0 - frac) + hist_p2[jj + 1] * frac
            pos = (t + dt - tdel) / dt
            if pos <= 0.0:
                ca_c = basal_ca; p2_c = basal_p2
            else:
                jj = <long> pos
                if jj >= i:
                    ca_c = hist_ca[i]; p2_c = hist_p2[i]
                else:
                    frac = pos - jj
                    ca_c = hist_ca[jj] * (1.0 - frac) + hist_ca[jj + 1] * frac
                    p2_c = hist_p2[jj] * (1.0 - frac) + hist_p2[jj + 1] * frac

            c_deriv(pv, s, u_a, ca_a, p2_a, m_a, rq * m_a, 1, k1)
            for j in range(5):
                xs[j] = s[j] + 0.5 * dt * k1[j]
            c_deriv(pv, xs, u_b, ca_b, p2_b, m_b, rq * m_b, 1, k2)
            for j in range(5):
                xs[j] = s[j] + 0.5 * dt * k2[j]
            c_deriv(pv, xs, u_b, ca_b, p2_b, m_b, rq * m_b, 1, k3)
            for j in range(5):
                xs[j] = s[j] + dt * k3[j]
            c_deriv(pv, xs, u_c, ca_c, p2_c, m_c, rq * m_c, 1, k4)
            for j in range(5):
                s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if s[4] < 0.0:
                s[4] = 0.0

            for j in range(5):
                if not isfinite(s[j]):
                    err = 2; err_state = j; err_step = i + 1
                    break
                if fabs(s[j]) > guard[j]:
                    err = 1; err_state = j; err_step = i + 1
                    break
            if err != 0:
                break

            if (i + 1) % steps_per_sec == 0:
                ce = pv[I_K2] * (1.0 - exp(-pv[I_K3] * s[0])) ** 2
                hist_ca[i + 1] = one_m_ps * ce + pv[I_PS] * s[2]
                hist_p2[i + 1] = s[1]
                u_a = c_drive(t + dt, st0[seg], sut[seg], sus[seg], inv_tau)
                m_a = c_drive(t + dt, st0[seg], smt[seg], sms[seg], inv_tau)
                uo[out_idx] = u_a
                mo[out_idx] = m_a
                for j in range(5):
                    so[out_idx, j] = s[j]
                q0 = c_q(pv, s[0], s[4], u_a)
                zo[out_idx, 0] = q0 * one_m_ps * (ce - s[2])
                zo[out_idx, 1] = q0 * one_m_ps * (s[3] - pv[I_K4] * s[1])
                c_readout(pv, s, &mp1, &mp2, &pe)
                po[out_idx] = pe
                out_idx += 1

    return err, err_state, err_step
