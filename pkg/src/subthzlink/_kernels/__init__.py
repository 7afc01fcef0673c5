"""Decoder kernels.

A compiled extension carries the min-sum inner loops; a pure-numpy
implementation provides the same interface when the extension is not built.
Selection happens at import: the SUBTHZLINK_KERNELS environment variable may
force "python" or "compiled", the default ("auto") prefers compiled and falls
back silently.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DecoderPlan:
    """Lifted-graph geometry, precomputed once per (base graph, z).

    Edges are sorted by (row, col). ``lane_idx[e, a]`` is the variable lane a
    check equation at lane ``a`` reads through edge ``e``; ``row_pad`` lists
    edge ids per row padded with the dummy id ``n_edges``.
    """

    z: int
    mb: int
    n_cols: int
    n_edges: int
    edge_row: np.ndarray
    edge_col: np.ndarray
    edge_shift: np.ndarray
    row_ptr: np.ndarray
    slot: np.ndarray
    dmax: int
    row_pad: np.ndarray
    lane_idx: np.ndarray
    col_edges: np.ndarray
    col_ptr: np.ndarray


_requested = os.environ.get("SUBTHZLINK_KERNELS", "auto").strip().lower() or "auto"
if _requested not in ("auto", "python", "compiled"):
    raise ImportError(
        f"SUBTHZLINK_KERNELS must be 'python', 'compiled', or 'auto', got {_requested!r}"
    )

backend_name = "python"
_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _ldpc_ms as _impl  # type: ignore[attr-defined]

        backend_name = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
if _impl is None:
    from . import ldpc_numpy as _impl


def decode_batch(plan: DecoderPlan, llrs: np.ndarray, alpha: float = 0.75, max_iter: int = 25):
    """Normalized min-sum decode of a batch of full-length LLR vectors.

    Returns (hard bits (B, n_cols*z) uint8, parity-satisfied flags (B,) bool,
    iterations used (B,) int32).
    """
    llrs = np.ascontiguousarray(llrs, dtype=np.float64)
    if llrs.ndim != 2 or llrs.shape[1] != plan.n_cols * plan.z:
        raise ValueError("llrs must be (batch, n_cols * z)")
    return _impl.decode_batch(plan, llrs, float(alpha), int(max_iter))
