"""Vectorized numpy backend for the hierarchy propagation.

Mirrors the compiled extension exactly (same arguments, same semantics);
selected at import time when the extension is unavailable or on request.
The hierarchy layout (neighbor tables, coefficients) is prepared by
:mod:`qprobe.heom`; this module only steps the ODE system.
"""

from __future__ import annotations

import numpy as np

_CHECK_EVERY = 25


def _make_rhs(h_sys, s_op, gamma, amp, mn_sum, coef_dm, coef_dn, nbr, nbr_adj):
    damp = (gamma * mn_sum)[:, None, None]
    cdm = (amp * coef_dm)[:, None, None]
    cdn = (amp * coef_dn)[:, None, None]
    slots = []
    for j in range(4):
        tgt = np.nonzero(nbr[:, j] >= 0)[0]
        src = nbr[tgt, j]
        adj = nbr_adj[tgt, j].astype(bool)
        slots.append((tgt, src, adj, adj.any()))

    def gather(a, src, adj, any_adj):
        g = a[src]
        if any_adj:
            g[adj] = np.conj(np.swapaxes(g[adj], -1, -2))
        return g

    def rhs(a, out):
        np.matmul(h_sys, a, out=out)
        out -= a @ h_sys
        out *= -1j
        out -= damp * a
        tgt, src, adj, any_adj = slots[0]
        if len(tgt):
            g = gather(a, src, adj, any_adj)
            out[tgt] += cdm[tgt] * (s_op @ g)
        tgt, src, adj, any_adj = slots[1]
        if len(tgt):
            g = gather(a, src, adj, any_adj)
            out[tgt] += cdn[tgt] * (g @ s_op)
        tgt, src, adj, any_adj = slots[2]
        if len(tgt):
            g = gather(a, src, adj, any_adj)
            out[tgt] -= s_op @ g - g @ s_op
        tgt, src, adj, any_adj = slots[3]
        if len(tgt):
            g = gather(a, src, adj, any_adj)
            out[tgt] += s_op @ g - g @ s_op
        return out

    return rhs


def rhs_once(state, h_sys, s_op, gamma, amp, mn_sum, coef_dm, coef_dn, nbr, nbr_adj):
    """Single derivative evaluation (used by tests and the reference check)."""
    rhs = _make_rhs(h_sys, s_op, gamma, amp, mn_sum, coef_dm, coef_dn, nbr, nbr_adj)
    return rhs(np.asarray(state, dtype=complex), np.empty_like(state, dtype=complex))


def rk4_propagate(
    state,
    h_sys,
    s_op,
    gamma,
    amp,
    mn_sum,
    coef_dm,
    coef_dn,
    nbr,
    nbr_adj,
    h,
    n_steps,
    stride,
    snapshots,
    overflow_limit,
):
    """Classical fixed-step RK4; fills ``snapshots`` every ``stride`` steps.

    Returns 0 on success or the step index at which the hierarchy norm
    exceeded ``overflow_limit`` (instability diagnostic).
    """
    rhs = _make_rhs(h_sys, s_op, gamma, amp, mn_sum, coef_dm, coef_dn, nbr, nbr_adj)
    y = np.array(state, dtype=complex, order="C")
    k1, k2, k3, k4, tmp = (np.empty_like(y) for _ in range(5))
    n_snap_ados = snapshots.shape[1]
    snapshots[0] = y[:n_snap_ados]
    pos = 1
    for step in range(1, n_steps + 1):
        rhs(y, k1)
        np.multiply(k1, 0.5 * h, out=tmp)
        tmp += y
        rhs(tmp, k2)
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += y
        rhs(tmp, k3)
        np.multiply(k3, h, out=tmp)
        tmp += y
        rhs(tmp, k4)
        k2 += k3
        k1 += k4
        k1 += 2.0 * k2
        k1 *= h / 6.0
        y += k1
        if step % _CHECK_EVERY == 0 or step == n_steps:
            if not np.isfinite(y.view(float)).all() or np.max(np.abs(y)) > overflow_limit:
                return step
        if step % stride == 0:
            snapshots[pos] = y[:n_snap_ados]
            pos += 1
    return 0
