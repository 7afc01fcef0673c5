"""Quasi-cyclic LDPC coding with rate matching.

Base matrices live as plain-text data files: a dual-diagonal parity core plus
a special first parity column (shifts s, 0, s at the top, middle, and bottom
rows) make encoding a forward substitution. Rate matching shortens the
information block from the end (known zeros, pinned LLRs at the decoder) and
punctures parity from the end (zero LLRs). Long payloads are segmented into
near-equal code blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from ._kernels import DecoderPlan, backend_name, decode_batch

DEFAULT_MAX_ITER = 25
DEFAULT_ALPHA = 0.75
LLR_SHORTENED = 120.0

# keep the per-chunk working set of the vectorized decoder bounded
_CHUNK_BUDGET = 4_000_000

_GRAPH_FILES = {"1/2": "ldpc_r12.txt", "2/3": "ldpc_r23.txt"}
CODE_RATES = tuple(_GRAPH_FILES)


class BaseGraph:
    """Protograph with per-edge cyclic shifts, shared across lifting sizes."""

    def __init__(self, name, kb, mb, z_supported, edge_row, edge_col, edge_shift):
        order = np.lexsort((edge_col, edge_row))
        self.name = name
        self.kb = kb
        self.mb = mb
        self.n_cols = kb + mb
        self.z_supported = tuple(sorted(z_supported))
        self.edge_row = np.asarray(edge_row, dtype=np.int32)[order]
        self.edge_col = np.asarray(edge_col, dtype=np.int32)[order]
        self.edge_shift = np.asarray(edge_shift, dtype=np.int32)[order]
        self.n_edges = self.edge_row.size
        self._shift_of = {
            (int(r), int(c)): int(s)
            for r, c, s in zip(self.edge_row, self.edge_col, self.edge_shift)
        }
        self._validate()
        self._plans = {}

    def _validate(self):
        kb, mb = self.kb, self.mb
        if (0, kb) not in self._shift_of or (mb - 1, kb) not in self._shift_of:
            raise ValueError("missing special parity column entries")
        if self._shift_of[(mb // 2, kb)] != 0:
            raise ValueError("special parity column must have a zero shift mid-column")
        if self._shift_of[(0, kb)] != self._shift_of[(mb - 1, kb)]:
            raise ValueError("special parity column end shifts must match")
        for j in range(1, mb):
            if self._shift_of.get((j - 1, kb + j)) != 0 or self._shift_of.get((j, kb + j)) != 0:
                raise ValueError("parity staircase must carry zero shifts")

    def shift(self, row, col):
        return self._shift_of[(row, col)]

    def plan(self, z: int) -> DecoderPlan:
        if z not in self.z_supported:
            raise ValueError(f"lifting size {z} not supported by {self.name}")
        if z in self._plans:
            return self._plans[z]
        e = self.n_edges
        shift = self.edge_shift % z
        row_ptr = np.zeros(self.mb + 1, dtype=np.int32)
        np.add.at(row_ptr, self.edge_row + 1, 1)
        row_ptr = np.cumsum(row_ptr).astype(np.int32)
        slot = (np.arange(e) - row_ptr[self.edge_row]).astype(np.int32)
        dmax = int(np.diff(row_ptr).max())
        row_pad = np.full((self.mb, dmax), e, dtype=np.int64)
        for eid, (r, s) in enumerate(zip(self.edge_row, slot)):
            row_pad[r, s] = eid
        lane_idx = (np.arange(z)[None, :] + shift[:, None]) % z
        col_edges = np.argsort(self.edge_col, kind="stable").astype(np.int64)
        col_ptr = np.zeros(self.n_cols + 1, dtype=np.int64)
        np.add.at(col_ptr, self.edge_col + 1, 1)
        col_ptr = np.cumsum(col_ptr)
        plan = DecoderPlan(
            z=z, mb=self.mb, n_cols=self.n_cols, n_edges=e,
            edge_row=self.edge_row.copy(), edge_col=self.edge_col.copy(),
            edge_shift=shift.astype(np.int32), row_ptr=row_ptr, slot=slot,
            dmax=dmax, row_pad=row_pad, lane_idx=lane_idx.astype(np.int64),
            col_edges=col_edges, col_ptr=col_ptr,
        )
        self._plans[z] = plan
        return plan


@lru_cache(maxsize=None)
def load_base_graph(rate: str) -> BaseGraph:
    if rate not in _GRAPH_FILES:
        raise ValueError(f"unknown code rate {rate!r}; choose from {CODE_RATES}")
    text = resources.files("subthzlink.data").joinpath(_GRAPH_FILES[rate]).read_text()
    kb = mb = None
    z_supported = ()
    rows, cols, shifts = [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "kb":
            kb = int(parts[1])
        elif parts[0] == "mb":
            mb = int(parts[1])
        elif parts[0] == "z_supported":
            z_supported = tuple(int(p) for p in parts[1:])
        else:
            r, c, s = (int(p) for p in parts)
            rows.append(r)
            cols.append(c)
            shifts.append(s)
    if kb is None or mb is None or not z_supported:
        raise ValueError(f"malformed base graph file for rate {rate}")
    return BaseGraph(rate, kb, mb, z_supported, rows, cols, shifts)


def _roll_rows(blocks: np.ndarray, shift: int) -> np.ndarray:
    # multiply by the z x z cyclic shift matrix: lane a reads lane (a+s) mod z
    return np.roll(blocks, -shift, axis=-1)


def encode_codewords(graph: BaseGraph, z: int, info: np.ndarray) -> np.ndarray:
    """Systematic encode of full information blocks (batch, kb*z) -> (batch, n*z)."""
    info = np.asarray(info, dtype=np.uint8)
    if info.ndim != 2 or info.shape[1] != graph.kb * z:
        raise ValueError("info must be (batch, kb*z)")
    b = info.shape[0]
    info3 = info.reshape(b, graph.kb, z)
    lam = np.zeros((b, graph.mb, z), dtype=np.uint8)
    for r, c, s in zip(graph.edge_row, graph.edge_col, graph.edge_shift):
        if c < graph.kb:
            lam[:, r] ^= _roll_rows(info3[:, c], s % z)
    p = np.zeros((b, graph.mb, z), dtype=np.uint8)
    p0 = np.bitwise_xor.reduce(lam, axis=1)
    p[:, 0] = p0
    p[:, 1] = lam[:, 0] ^ _roll_rows(p0, graph.shift(0, graph.kb) % z)
    mid = graph.mb // 2
    for i in range(1, graph.mb - 1):
        nxt = lam[:, i] ^ p[:, i]
        if i == mid:
            nxt ^= p0
        p[:, i + 1] = nxt
    return np.concatenate([info3, p], axis=1).reshape(b, graph.n_cols * z)


def syndrome(graph: BaseGraph, z: int, codewords: np.ndarray) -> np.ndarray:
    """Direct parity-check evaluation, (batch, mb*z); all zero for codewords."""
    cw = np.asarray(codewords, dtype=np.uint8).reshape(-1, graph.n_cols, z)
    syn = np.zeros((cw.shape[0], graph.mb, z), dtype=np.uint8)
    for r, c, s in zip(graph.edge_row, graph.edge_col, graph.edge_shift):
        syn[:, r] ^= _roll_rows(cw[:, c], s % z)
    return syn.reshape(cw.shape[0], graph.mb * z)


@dataclass(frozen=True)
class CodeConfig:
    """One code block: lifting size plus shortening and puncturing amounts."""

    rate: str
    z: int
    k_info: int
    n_tx: int

    def __post_init__(self):
        g = self.graph
        if not 0 < self.k_info <= g.kb * self.z:
            raise ValueError("k_info outside the information block")
        kept = self.n_tx - self.k_info
        if not 0 < kept <= g.mb * self.z:
            raise ValueError("transmitted parity must fit the parity block")

    @property
    def graph(self) -> BaseGraph:
        return load_base_graph(self.rate)

    @property
    def n_shortened(self) -> int:
        return self.graph.kb * self.z - self.k_info

    @property
    def n_parity_kept(self) -> int:
        return self.n_tx - self.k_info

    @property
    def n_punctured(self) -> int:
        return self.graph.mb * self.z - self.n_parity_kept

    @property
    def code_rate(self) -> float:
        return self.k_info / self.n_tx


def fit_code(k_info: int, n_tx: int, rate: str) -> CodeConfig:
    """Smallest supported lifting size that carries the block."""
    g = load_base_graph(rate)
    if n_tx <= k_info:
        raise ValueError("n_tx must exceed k_info")
    for z in g.z_supported:
        if g.kb * z >= k_info and g.mb * z >= n_tx - k_info:
            return CodeConfig(rate=rate, z=z, k_info=k_info, n_tx=n_tx)
    raise ValueError(
        f"block k={k_info}, n={n_tx} exceeds the largest lifting size of rate {rate}"
    )


def encode_block(cfg: CodeConfig, bits: np.ndarray) -> np.ndarray:
    """Encode payload rows (batch, k_info) to transmitted rows (batch, n_tx)."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if bits.shape[1] != cfg.k_info:
        raise ValueError(f"expected {cfg.k_info} payload bits per row")
    g = cfg.graph
    full = np.zeros((bits.shape[0], g.kb * cfg.z), dtype=np.uint8)
    full[:, : cfg.k_info] = bits
    cw = encode_codewords(g, cfg.z, full)
    return np.concatenate(
        [cw[:, : cfg.k_info], cw[:, g.kb * cfg.z : g.kb * cfg.z + cfg.n_parity_kept]], axis=1
    )


def decode_block(
    cfg: CodeConfig,
    llrs: np.ndarray,
    max_iter: int = DEFAULT_MAX_ITER,
    alpha: float = DEFAULT_ALPHA,
):
    """Decode transmitted-position LLR rows; returns (bits, ok, iterations).

    Shortened positions come back pinned to zero, punctured parity enters as
    erasures. ``ok`` reports whether the parity checks were satisfied.
    """
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    if llrs.shape[1] != cfg.n_tx:
        raise ValueError(f"expected {cfg.n_tx} LLRs per row")
    g = cfg.graph
    b = llrs.shape[0]
    full = np.zeros((b, g.n_cols * cfg.z), dtype=np.float64)
    full[:, : cfg.k_info] = llrs[:, : cfg.k_info]
    full[:, cfg.k_info : g.kb * cfg.z] = LLR_SHORTENED
    full[:, g.kb * cfg.z : g.kb * cfg.z + cfg.n_parity_kept] = llrs[:, cfg.k_info :]
    plan = g.plan(cfg.z)
    chunk = max(1, _CHUNK_BUDGET // (plan.n_edges * cfg.z))
    bits = np.empty((b, cfg.k_info), dtype=np.uint8)
    ok = np.empty(b, dtype=bool)
    iters = np.empty(b, dtype=np.int32)
    for lo in range(0, b, chunk):
        hi = min(lo + chunk, b)
        hard, good, used = decode_batch(plan, full[lo:hi], alpha=alpha, max_iter=max_iter)
        bits[lo:hi] = hard[:, : cfg.k_info]
        ok[lo:hi] = good
        iters[lo:hi] = used
    return bits, ok, iters


def _split_even(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


@dataclass(frozen=True)
class SlotCode:
    """Payload segmented into code blocks that exactly fill n_total bits."""

    rate: str
    k_total: int
    n_total: int
    blocks: tuple

    @classmethod
    def for_payload(cls, rate: str, k_total: int, n_total: int) -> "SlotCode":
        g = load_base_graph(rate)
        zmax = g.z_supported[-1]
        n_blocks = max(
            1,
            math.ceil(k_total / (g.kb * zmax)),
            math.ceil((n_total - k_total) / (g.mb * zmax)),
        )
        while True:
            ks = _split_even(k_total, n_blocks)
            ns = _split_even(n_total, n_blocks)
            try:
                blocks = tuple(fit_code(k, n, rate) for k, n in zip(ks, ns))
                break
            except ValueError:
                n_blocks += 1
                if n_blocks > k_total:
                    raise
        return cls(rate=rate, k_total=k_total, n_total=n_total, blocks=blocks)

    def encode(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.k_total,):
            raise ValueError(f"expected {self.k_total} payload bits")
        out, at = [], 0
        for cfg in self.blocks:
            out.append(encode_block(cfg, bits[at : at + cfg.k_info])[0])
            at += cfg.k_info
        return np.concatenate(out)

    def decode(self, llrs: np.ndarray, max_iter: int = DEFAULT_MAX_ITER, alpha: float = DEFAULT_ALPHA):
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.shape != (self.n_total,):
            raise ValueError(f"expected {self.n_total} LLRs")
        bits, at, all_ok = [], 0, True
        for cfg in self.blocks:
            part, ok, _ = decode_block(cfg, llrs[at : at + cfg.n_tx], max_iter=max_iter, alpha=alpha)
            bits.append(part[0])
            all_ok = all_ok and bool(ok[0])
            at += cfg.n_tx
        return np.concatenate(bits), all_ok
