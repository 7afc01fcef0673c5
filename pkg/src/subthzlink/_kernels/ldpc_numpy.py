"""Vectorized min-sum decoder.

Messages live per edge as length-z lane vectors; check updates run on a
(batch, rows, max-degree, z) tensor padded with an infinite-magnitude dummy
edge, variable updates on column-grouped reduceat sums. Converged blocks drop
out of the working set each iteration.
"""
from __future__ import annotations

import numpy as np


def decode_batch(plan, llrs, alpha, max_iter):
    b_total = llrs.shape[0]
    z, mb, e = plan.z, plan.mb, plan.n_edges
    eids = np.arange(e)[:, None]
    lanes = plan.lane_idx
    slots = np.arange(plan.dmax)[None, None, :, None]

    out_bits = np.zeros((b_total, plan.n_cols * z), dtype=np.uint8)
    out_ok = np.zeros(b_total, dtype=bool)
    out_iters = np.full(b_total, max_iter, dtype=np.int32)

    active = np.arange(b_total)
    llr3 = llrs.reshape(b_total, plan.n_cols, z)
    v2c = llr3[:, plan.edge_col, :].copy()

    for it in range(1, max_iter + 1):
        nb = active.size
        # check-node update on row-lane-aligned messages
        v2c_row = v2c[:, eids, lanes]
        ext = np.concatenate([v2c_row, np.full((nb, 1, z), np.inf)], axis=1)
        t = ext[:, plan.row_pad, :]
        sg = np.where(t < 0, -1.0, 1.0)
        mag = np.abs(t)
        sp = sg.prod(axis=2)
        m1 = mag.min(axis=2)
        am = mag.argmin(axis=2)
        m2 = np.partition(mag, 1, axis=2)[:, :, 1, :]
        excl_mag = np.where(slots == am[:, :, None, :], m2[:, :, None, :], m1[:, :, None, :])
        c2v_pad = alpha * sp[:, :, None, :] * sg * excl_mag
        c2v_row = c2v_pad[:, plan.edge_row, plan.slot, :]
        c2v = np.empty_like(v2c)
        c2v[:, eids, lanes] = c2v_row

        # variable-node update
        totals = llr3[active] + np.add.reduceat(c2v[:, plan.col_edges, :], plan.col_ptr[:-1], axis=1)
        v2c = totals[:, plan.edge_col, :] - c2v

        # syndrome check on current hard decisions
        hard = (totals < 0).astype(np.uint8)
        hrow = hard[:, plan.edge_col, :][:, eids, lanes]
        hext = np.concatenate([hrow, np.zeros((nb, 1, z), dtype=np.uint8)], axis=1)
        parity = np.bitwise_xor.reduce(hext[:, plan.row_pad, :], axis=2)
        conv = ~parity.reshape(nb, -1).any(axis=1)
        if conv.any():
            done = active[conv]
            out_bits[done] = hard[conv].reshape(conv.sum(), -1)
            out_ok[done] = True
            out_iters[done] = it
            keep = ~conv
            active = active[keep]
            if active.size == 0:
                return out_bits, out_ok, out_iters
            v2c = v2c[keep]
        last_hard = hard[~conv] if conv.any() else hard

    out_bits[active] = last_hard.reshape(active.size, -1)
    return out_bits, out_ok, out_iters
