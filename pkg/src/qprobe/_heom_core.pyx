# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled RK4 kernel for the auxiliary-density-operator hierarchy.

Same call signature and semantics as qprobe._heom_py; the 2x2 matrix
algebra is unrolled by hand and the whole time loop runs without the GIL.
"""

import numpy as np


ctypedef double complex zdouble


cdef void _rhs(zdouble[:, :, ::1] a, zdouble[:, :, ::1] out,
               zdouble h00, zdouble h01, zdouble h10, zdouble h11,
               zdouble s00, zdouble s01, zdouble s10, zdouble s11,
               double gamma, double amp,
               double[::1] mn_sum, double[::1] coef_dm, double[::1] coef_dn,
               long[:, ::1] nbr, unsigned char[:, ::1] nbr_adj) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    cdef long j
    cdef double c
    cdef zdouble r00, r01, r10, r11
    cdef zdouble b00, b01, b10, b11
    cdef zdouble d00, d01, d10, d11
    cdef zdouble minus_i = -1j
    for i in range(n):
        r00 = a[i, 0, 0]; r01 = a[i, 0, 1]; r10 = a[i, 1, 0]; r11 = a[i, 1, 1]
        # -i [H, rho] - gamma (m+n) rho
        c = gamma * mn_sum[i]
        d00 = minus_i * (h00 * r00 + h01 * r10 - r00 * h00 - r01 * h10) - c * r00
        d01 = minus_i * (h00 * r01 + h01 * r11 - r00 * h01 - r01 * h11) - c * r01
        d10 = minus_i * (h10 * r00 + h11 * r10 - r10 * h00 - r11 * h10) - c * r10
        d11 = minus_i * (h10 * r01 + h11 * r11 - r10 * h01 - r11 * h11) - c * r11
        # + amp * m * S rho^(m-1, n)
        j = nbr[i, 0]
        if j >= 0:
            if nbr_adj[i, 0]:
                b00 = a[j, 0, 0].conjugate(); b01 = a[j, 1, 0].conjugate()
                b10 = a[j, 0, 1].conjugate(); b11 = a[j, 1, 1].conjugate()
            else:
                b00 = a[j, 0, 0]; b01 = a[j, 0, 1]; b10 = a[j, 1, 0]; b11 = a[j, 1, 1]
            c = amp * coef_dm[i]
            d00 = d00 + c * (s00 * b00 + s01 * b10)
            d01 = d01 + c * (s00 * b01 + s01 * b11)
            d10 = d10 + c * (s10 * b00 + s11 * b10)
            d11 = d11 + c * (s10 * b01 + s11 * b11)
        # + amp * n * rho^(m, n-1) S
        j = nbr[i, 1]
        if j >= 0:
            if nbr_adj[i, 1]:
                b00 = a[j, 0, 0].conjugate(); b01 = a[j, 1, 0].conjugate()
                b10 = a[j, 0, 1].conjugate(); b11 = a[j, 1, 1].conjugate()
            else:
                b00 = a[j, 0, 0]; b01 = a[j, 0, 1]; b10 = a[j, 1, 0]; b11 = a[j, 1, 1]
            c = amp * coef_dn[i]
            d00 = d00 + c * (b00 * s00 + b01 * s10)
            d01 = d01 + c * (b00 * s01 + b01 * s11)
            d10 = d10 + c * (b10 * s00 + b11 * s10)
            d11 = d11 + c * (b10 * s01 + b11 * s11)
        # - [S, rho^(m+1, n)]
        j = nbr[i, 2]
        if j >= 0:
            if nbr_adj[i, 2]:
                b00 = a[j, 0, 0].conjugate(); b01 = a[j, 1, 0].conjugate()
                b10 = a[j, 0, 1].conjugate(); b11 = a[j, 1, 1].conjugate()
            else:
                b00 = a[j, 0, 0]; b01 = a[j, 0, 1]; b10 = a[j, 1, 0]; b11 = a[j, 1, 1]
            d00 = d00 - (s00 * b00 + s01 * b10 - b00 * s00 - b01 * s10)
            d01 = d01 - (s00 * b01 + s01 * b11 - b00 * s01 - b01 * s11)
            d10 = d10 - (s10 * b00 + s11 * b10 - b10 * s00 - b11 * s10)
            d11 = d11 - (s10 * b01 + s11 * b11 - b10 * s01 - b11 * s11)
        # + [S, rho^(m, n+1)]
        j = nbr[i, 3]
        if j >= 0:
            if nbr_adj[i, 3]:
                b00 = a[j, 0, 0].conjugate(); b01 = a[j, 1, 0].conjugate()
                b10 = a[j, 0, 1].conjugate(); b11 = a[j, 1, 1].conjugate()
            else:
                b00 = a[j, 0, 0]; b01 = a[j, 0, 1]; b10 = a[j, 1, 0]; b11 = a[j, 1, 1]
            d00 = d00 + (s00 * b00 + s01 * b10 - b00 * s00 - b01 * s10)
            d01 = d01 + (s00 * b01 + s01 * b11 - b00 * s01 - b01 * s11)
            d10 = d10 + (s10 * b00 + s11 * b10 - b10 * s00 - b11 * s10)
            d11 = d11 + (s10 * b01 + s11 * b11 - b10 * s01 - b11 * s11)
        out[i, 0, 0] = d00; out[i, 0, 1] = d01; out[i, 1, 0] = d10; out[i, 1, 1] = d11


cdef void _set_axpy(zdouble[:, :, ::1] out, zdouble[:, :, ::1] y,
                    zdouble[:, :, ::1] k, double factor) noexcept nogil:
    # out = y + factor * k
    cdef Py_ssize_t i, n = y.shape[0]
    for i in range(n):
        out[i, 0, 0] = y[i, 0, 0] + factor * k[i, 0, 0]
        out[i, 0, 1] = y[i, 0, 1] + factor * k[i, 0, 1]
        out[i, 1, 0] = y[i, 1, 0] + factor * k[i, 1, 0]
        out[i, 1, 1] = y[i, 1, 1] + factor * k[i, 1, 1]


cdef void _rk4_update(zdouble[:, :, ::1] y, zdouble[:, :, ::1] k1, zdouble[:, :, ::1] k2,
                      zdouble[:, :, ::1] k3, zdouble[:, :, ::1] k4, double h) noexcept nogil:
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double w = h / 6.0
    for i in range(n):
        y[i, 0, 0] = y[i, 0, 0] + w * (k1[i, 0, 0] + 2.0 * (k2[i, 0, 0] + k3[i, 0, 0]) + k4[i, 0, 0])
        y[i, 0, 1] = y[i, 0, 1] + w * (k1[i, 0, 1] + 2.0 * (k2[i, 0, 1] + k3[i, 0, 1]) + k4[i, 0, 1])
        y[i, 1, 0] = y[i, 1, 0] + w * (k1[i, 1, 0] + 2.0 * (k2[i, 1, 0] + k3[i, 1, 0]) + k4[i, 1, 0])
        y[i, 1, 1] = y[i, 1, 1] + w * (k1[i, 1, 1] + 2.0 * (k2[i, 1, 1] + k3[i, 1, 1]) + k4[i, 1, 1])


cdef double _max_abs(zdouble[:, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double m = 0.0, v
    for i in range(n):
        v = abs(y[i, 0, 0])
        if v > m: m = v
        v = abs(y[i, 0, 1])
        if v > m: m = v
        v = abs(y[i, 1, 0])
        if v > m: m = v
        v = abs(y[i, 1, 1])
        if v > m: m = v
    return m


def rhs_once(state, h_sys, s_op, double gamma, double amp,
             mn_sum, coef_dm, coef_dn, nbr, nbr_adj):
    """Single derivative evaluation (kernel-parity tests)."""
    cdef zdouble[:, :, ::1] a = np.array(state, dtype=complex, order="C")
    out_arr = np.empty_like(np.asarray(state, dtype=complex))
    cdef zdouble[:, :, ::1] out = out_arr
    cdef zdouble[:, ::1] hm = np.array(h_sys, dtype=complex, order="C")
    cdef zdouble[:, ::1] sm = np.array(s_op, dtype=complex, order="C")
    cdef double[::1] mn = np.ascontiguousarray(mn_sum, dtype=float)
    cdef double[::1] cm = np.ascontiguousarray(coef_dm, dtype=float)
    cdef double[::1] cn = np.ascontiguousarray(coef_dn, dtype=float)
    cdef long[:, ::1] nb = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef unsigned char[:, ::1] na = np.ascontiguousarray(nbr_adj, dtype=np.uint8)
    _rhs(a, out, hm[0, 0], hm[0, 1], hm[1, 0], hm[1, 1],
         sm[0, 0], sm[0, 1], sm[1, 0], sm[1, 1],
         gamma, amp, mn, cm, cn, nb, na)
    return out_arr


def rk4_propagate(state, h_sys, s_op, double gamma, double amp,
                  mn_sum, coef_dm, coef_dn, nbr, nbr_adj,
                  double h, long n_steps, long stride, snapshots,
                  double overflow_limit):
    """Classical fixed-step RK4; fills ``snapshots`` every ``stride`` steps.

    Returns 0 on success or the step index at which the hierarchy norm
    exceeded ``overflow_limit``.
    """
    y_arr = np.array(state, dtype=complex, order="C")
    cdef zdouble[:, :, ::1] y = y_arr
    cdef zdouble[:, :, ::1] k1 = np.empty_like(y_arr)
    cdef zdouble[:, :, ::1] k2 = np.empty_like(y_arr)
    cdef zdouble[:, :, ::1] k3 = np.empty_like(y_arr)
    cdef zdouble[:, :, ::1] k4 = np.empty_like(y_arr)
    cdef zdouble[:, :, ::1] tmp = np.empty_like(y_arr)
    cdef zdouble[:, :, :, ::1] snap = snapshots
    cdef zdouble[:, ::1] hm = np.array(h_sys, dtype=complex, order="C")
    cdef zdouble[:, ::1] sm = np.array(s_op, dtype=complex, order="C")
    cdef double[::1] mn = np.ascontiguousarray(mn_sum, dtype=float)
    cdef double[::1] cm = np.ascontiguousarray(coef_dm, dtype=float)
    cdef double[::1] cn = np.ascontiguousarray(coef_dn, dtype=float)
    cdef long[:, ::1] nb = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef unsigned char[:, ::1] na = np.ascontiguousarray(nbr_adj, dtype=np.uint8)
    cdef zdouble h00 = hm[0, 0], h01 = hm[0, 1], h10 = hm[1, 0], h11 = hm[1, 1]
    cdef zdouble s00 = sm[0, 0], s01 = sm[0, 1], s10 = sm[1, 0], s11 = sm[1, 1]
    cdef Py_ssize_t n_snap_ados = snap.shape[1]
    cdef Py_ssize_t i, q
    cdef long step, pos = 1, failed = 0
    with nogil:
        for i in range(n_snap_ados):
            snap[0, i, 0, 0] = y[i, 0, 0]; snap[0, i, 0, 1] = y[i, 0, 1]
            snap[0, i, 1, 0] = y[i, 1, 0]; snap[0, i, 1, 1] = y[i, 1, 1]
        for step in range(1, n_steps + 1):
            _rhs(y, k1, h00, h01, h10, h11, s00, s01, s10, s11, gamma, amp, mn, cm, cn, nb, na)
            _set_axpy(tmp, y, k1, 0.5 * h)
            _rhs(tmp, k2, h00, h01, h10, h11, s00, s01, s10, s11, gamma, amp, mn, cm, cn, nb, na)
            _set_axpy(tmp, y, k2, 0.5 * h)
            _rhs(tmp, k3, h00, h01, h10, h11, s00, s01, s10, s11, gamma, amp, mn, cm, cn, nb, na)
            _set_axpy(tmp, y, k3, h)
            _rhs(tmp, k4, h00, h01, h10, h11, s00, s01, s10, s11, gamma, amp, mn, cm, cn, nb, na)
            _rk4_update(y, k1, k2, k3, k4, h)
            if step % 25 == 0 or step == n_steps:
                if not (_max_abs(y) <= overflow_limit):
                    failed = step
                    break
            if step % stride == 0:
                for i in range(n_snap_ados):
                    snap[pos, i, 0, 0] = y[i, 0, 0]; snap[pos, i, 0, 1] = y[i, 0, 1]
                    snap[pos, i, 1, 0] = y[i, 1, 0]; snap[pos, i, 1, 1] = y[i, 1, 1]
                pos += 1
    return failed
