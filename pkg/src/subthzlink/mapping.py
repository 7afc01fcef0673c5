"""Bit-to-symbol mapping and per-slot resource layout.

Covers the constellation mappers (Gray-coded QPSK/16QAM/64QAM and pi/2-BPSK
through a two-tap [1+D] shaping filter), Zadoff-Chu sequences, the reference
signals (DMRS comb, PTRS groups, known head/tail guard sequences) and the
builder that lays payload bits and pilots into one slot's pre-transform grid.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .numerology import Numerology, slot_layout

WAVEFORM_KINDS = ("cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm")

LLR_CLIP = 30.0

DMRS_SYMBOL_INDEX = 2
DMRS_SEED_DEFAULT = 1303
PTRS_SEED_DEFAULT = 907
KT_SEED_DEFAULT = 4242


@dataclass(frozen=True)
class ModScheme:
    name: str
    bits_per_symbol: int


SCHEMES = {
    "pi2bpsk-1plusD": ModScheme("pi2bpsk-1plusD", 1),
    "qpsk": ModScheme("qpsk", 2),
    "16qam": ModScheme("16qam", 4),
    "64qam": ModScheme("64qam", 6),
}


def get_scheme(name: str) -> ModScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown modulation scheme {name!r}, expected one of {list(SCHEMES)}")


def _qpsk(bits: np.ndarray) -> np.ndarray:
    b = bits.reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2.0)


def _qam16(bits: np.ndarray) -> np.ndarray:
    b = bits.reshape(-1, 4)
    i = (1 - 2 * b[:, 0]) * (2 - (1 - 2 * b[:, 2]))
    q = (1 - 2 * b[:, 1]) * (2 - (1 - 2 * b[:, 3]))
    return (i + 1j * q) / np.sqrt(10.0)


def _qam64(bits: np.ndarray) -> np.ndarray:
    b = bits.reshape(-1, 6)
    i = (1 - 2 * b[:, 0]) * (4 - (1 - 2 * b[:, 2]) * (2 - (1 - 2 * b[:, 4])))
    q = (1 - 2 * b[:, 1]) * (4 - (1 - 2 * b[:, 3]) * (2 - (1 - 2 * b[:, 5])))
    return (i + 1j * q) / np.sqrt(42.0)


def _pi2bpsk(bits: np.ndarray) -> np.ndarray:
    # alternating 0/90 degree rotation keeps neighbours in quadrature
    n = np.arange(bits.size)
    return (1 - 2 * bits) * np.exp(1j * (np.pi / 4)) * 1j**n


def _pi2bpsk_1plusd(bits: np.ndarray) -> np.ndarray:
    """pi/2-BPSK shaped by the circular two-tap [1+D]/sqrt(2) filter.

    The circular form keeps the block invertible and, for even block length,
    exactly constant-modulus: adjacent samples sit in quadrature so the
    two-tap sum always lands on the unit circle.
    """
    x = _pi2bpsk(bits)
    return (x + np.roll(x, 1)) / np.sqrt(2.0)


_MODULATORS = {
    "qpsk": _qpsk,
    "16qam": _qam16,
    "64qam": _qam64,
    "pi2bpsk-1plusD": _pi2bpsk_1plusd,
}


def modulate_bits(bits: np.ndarray, scheme: str) -> np.ndarray:
    """Map a bit vector onto unit-average-power constellation symbols.

    For "pi2bpsk-1plusD" the whole vector is treated as one shaping block.
    """
    sch = get_scheme(scheme)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % sch.bits_per_symbol != 0:
        raise ValueError(
            f"bit count {bits.size} not a multiple of {sch.bits_per_symbol} for {scheme}"
        )
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    if scheme == "pi2bpsk-1plusD" and bits.size % 2 != 0:
        # the circular two-tap filter only closes cleanly on even blocks
        raise ValueError("pi2bpsk-1plusD blocks must have even length")
    return _MODULATORS[scheme](bits).astype(np.complex128)


def _deshape_1plusd(symbols: np.ndarray) -> np.ndarray:
    """Rotate a [1+D]-shaped block into paired +/-1 observations.

    Returns z with z[n] = s[n-1] + j*s[n] (indices modulo the block length),
    where s are the underlying BPSK signs.
    """
    n = np.arange(symbols.size)
    return symbols * np.sqrt(2.0) * np.exp(-1j * np.pi / 4) * 1j ** (-(n - 1) % 4)


def demap_hard(symbols: np.ndarray, scheme: str) -> np.ndarray:
    """Nearest-point hard decision, inverse of :func:`modulate_bits`."""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    if scheme == "pi2bpsk-1plusD":
        z = _deshape_1plusd(symbols)
        looks = z.imag + np.roll(z.real, -1)
        return (looks < 0).astype(np.int64)
    points, labels = _constellation(scheme)
    d2 = np.abs(symbols[:, None] - points[None, :]) ** 2
    return labels[np.argmin(d2, axis=1)].ravel().astype(np.int64)


def _constellation(scheme: str) -> tuple[np.ndarray, np.ndarray]:
    sch = get_scheme(scheme)
    if scheme == "pi2bpsk-1plusD":
        raise ValueError("pi2bpsk-1plusD has memory; no point constellation exists")
    b = sch.bits_per_symbol
    labels = ((np.arange(2**b)[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(np.int64)
    points = _MODULATORS[scheme](labels.ravel())
    return points, labels


def max_log_llrs(symbols: np.ndarray, scheme: str, noise_var, clip: float = LLR_CLIP) -> np.ndarray:
    """Max-log bit LLRs (positive favours bit 0), clipped to +/-clip.

    ``noise_var`` is the complex noise variance per symbol, a scalar or one
    value per symbol. For "pi2bpsk-1plusD" the vector is one shaping block,
    each bit combines its two quadrature observations, and a per-symbol
    noise_var collapses to its mean.
    """
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    nv = np.asarray(noise_var, dtype=np.float64)
    if np.any(nv <= 0):
        raise ValueError("noise_var must be positive")
    if nv.ndim and nv.size != symbols.size:
        raise ValueError("per-symbol noise_var must match the symbol count")
    if scheme == "pi2bpsk-1plusD":
        z = _deshape_1plusd(symbols)
        looks = z.imag + np.roll(z.real, -1)
        llr = 2.0 * looks / (nv.mean() if nv.ndim else nv)
    else:
        points, labels = _constellation(scheme)
        d2 = np.abs(symbols[:, None] - points[None, :]) ** 2
        b = labels.shape[1]
        llr = np.empty((symbols.size, b))
        for i in range(b):
            one = labels[:, i] == 1
            llr[:, i] = d2[:, one].min(axis=1) - d2[:, ~one].min(axis=1)
        llr = (llr / (nv[:, None] if nv.ndim else nv)).ravel()
    return np.clip(llr, -clip, clip)


def zadoff_chu(root: int, length: int) -> np.ndarray:
    """Constant-amplitude zero-autocorrelation sequence.

    Odd lengths use the n(n+1) phase profile, even lengths n^2; the root must
    be coprime with the length.
    """
    if length < 1:
        raise ValueError("length must be positive")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} not coprime with length {length}")
    n = np.arange(length)
    quad = n * (n + 1) if length % 2 else n * n
    return np.exp(-1j * np.pi * root * quad / length)


def dmrs_sequence(n_subcarriers: int, seed: int = DMRS_SEED_DEFAULT) -> np.ndarray:
    """Comb-2 DMRS: unit-modulus QPSK on even subcarriers, zeros between.

    Pilots are boosted by sqrt(2) so the symbol still carries unit average
    power across the allocation.
    """
    if n_subcarriers % 2 != 0:
        raise ValueError("n_subcarriers must be even for the comb-2 DMRS")
    rng = seeds.stream(seed, seeds.DOMAIN_MAPPING, 0)
    bits = rng.integers(0, 2, size=n_subcarriers)  # 2 bits per pilot
    vals = _qpsk(bits) * np.sqrt(2.0)
    grid = np.zeros(n_subcarriers, dtype=np.complex128)
    grid[::2] = vals
    return grid


@dataclass(frozen=True)
class PtrsPattern:
    n_groups: int = 8
    group_len: int = 4

    @property
    def total(self) -> int:
        return self.n_groups * self.group_len


@dataclass(frozen=True)
class KtConfig:
    """Known head/tail guard inserted before the spreading transform."""

    head: int = 16
    tail: int = 112
    content: str = "pi2bpsk-1plusD"  # or "zadoff-chu"
    seed: int = KT_SEED_DEFAULT
    zc_root: int = 5

    @property
    def total(self) -> int:
        return self.head + self.tail


def kt_sequence(cfg: KtConfig) -> tuple[np.ndarray, np.ndarray]:
    """Head and tail guard values, identical for every symbol of a slot.

    The tail of one symbol and the head of the next are adjacent on air, so
    the two pieces are cut from a single (tail + head)-long sequence read in
    transmission order.
    """
    total = cfg.total
    if total == 0:
        return np.zeros(0, dtype=np.complex128), np.zeros(0, dtype=np.complex128)
    if cfg.content == "pi2bpsk-1plusD":
        rng = seeds.stream(cfg.seed, seeds.DOMAIN_MAPPING, 1)
        seq = _pi2bpsk_1plusd(rng.integers(0, 2, size=total))
    elif cfg.content == "zadoff-chu":
        seq = zadoff_chu(cfg.zc_root, total)
    else:
        raise ValueError(f"unknown KT content {cfg.content!r}")
    tail = seq[: cfg.tail]
    head = seq[cfg.tail :]
    return head, tail


def ptrs_group_starts(m: int, n_groups: int, group_len: int) -> np.ndarray:
    """Group start offsets: group k of n centred at (k + 1/2) * m / n."""
    centers = (np.arange(n_groups) + 0.5) * m / n_groups
    starts = np.round(centers - group_len / 2).astype(int)
    return np.clip(starts, 0, m - group_len)


def _ptrs_values(n: int, seed: int) -> np.ndarray:
    rng = seeds.stream(seed, seeds.DOMAIN_MAPPING, 2)
    return _qpsk(rng.integers(0, 2, size=2 * n))


@dataclass(frozen=True)
class SlotResource:
    """One slot's worth of content before the waveform transform.

    ``grid`` holds, per symbol, either the pre-DFT vector (spread kinds) or
    the frequency-domain allocation (cp-ofdm, and the DMRS symbol of every
    kind). ``freq_domain_rows`` flags the rows already in frequency domain.
    """

    numerology: Numerology
    kind: str
    cp_kind: str
    scheme: str
    grid: np.ndarray
    dmrs_symbol: int
    data_symbols: tuple[int, ...]
    data_idx: np.ndarray
    ptrs_idx: np.ndarray
    ptrs_vals: np.ndarray
    kt_head_idx: np.ndarray
    kt_tail_idx: np.ndarray
    kt_head_vals: np.ndarray
    kt_tail_vals: np.ndarray
    payload_bits: np.ndarray
    kt: KtConfig | None = None
    ptrs: PtrsPattern = field(default_factory=PtrsPattern)

    @property
    def n_symbols(self) -> int:
        return self.grid.shape[0]

    @property
    def m(self) -> int:
        return self.grid.shape[1]

    @property
    def freq_domain_rows(self) -> tuple[int, ...]:
        if self.kind == "cp-ofdm":
            return tuple(range(self.n_symbols))
        return (self.dmrs_symbol,)

    @property
    def bits_per_data_symbol(self) -> int:
        return self.data_idx.size * SCHEMES[self.scheme].bits_per_symbol

    @property
    def capacity_bits(self) -> int:
        return self.bits_per_data_symbol * len(self.data_symbols)


def with_payload(resource: SlotResource, payload_bits: np.ndarray) -> SlotResource:
    """Copy of the slot with new payload bits in the same geometry.

    Reference signals and pilot values are kept verbatim, so rebuilding a
    slot per transport block costs only the data remapping.
    """
    payload_bits = np.asarray(payload_bits, dtype=np.int64).ravel()
    if payload_bits.size != resource.payload_bits.size:
        raise ValueError(
            f"payload of {payload_bits.size} bits does not fill the slot "
            f"({resource.payload_bits.size} expected)"
        )
    grid = np.array(resource.grid, copy=True)
    bits_per_sym = resource.bits_per_data_symbol
    for row, sym in enumerate(resource.data_symbols):
        chunk = payload_bits[row * bits_per_sym : (row + 1) * bits_per_sym]
        grid[sym, resource.data_idx] = modulate_bits(chunk, resource.scheme)
    return dataclasses.replace(resource, grid=grid, payload_bits=payload_bits)


def slot_capacity_bits(
    num: Numerology,
    kind: str,
    scheme: str,
    ptrs: PtrsPattern | None = None,
    kt: KtConfig | None = None,
) -> int:
    """Payload bits one slot can carry, net of DMRS/PTRS/KT overhead."""
    layout = _resolve_layout(num, kind)
    m = num.n_subcarriers
    ptrs, kt = _resolve_pilots(kind, ptrs, kt)
    n_data_symbols = layout.n_symbols - 1  # DMRS symbol carries no payload
    if kind == "cp-ofdm":
        per_symbol = m - _cp_ofdm_ptrs_idx(m).size
    else:
        per_symbol = m - _spread_overhead(m, ptrs, kt)[0].size - (kt.total if kt else 0)
    return per_symbol * n_data_symbols * SCHEMES[scheme].bits_per_symbol


def _resolve_layout(num: Numerology, kind: str):
    if kind not in WAVEFORM_KINDS:
        raise ValueError(f"unknown waveform kind {kind!r}, expected one of {WAVEFORM_KINDS}")
    cp_kind = "no-cp" if kind == "kt-dft-s-ofdm" else "normal-cp"
    return slot_layout(num, cp_kind)


def _cp_ofdm_ptrs_idx(m: int) -> np.ndarray:
    # one pilot subcarrier per 4 PRB, enough for a per-symbol phase anchor
    return np.arange(0, m, 48)


def _spread_overhead(m: int, ptrs: PtrsPattern, kt: KtConfig | None):
    """PTRS index array for a spread symbol, honouring the KT head/tail."""
    if kt is not None and kt.total > 0:
        # the guard occupies the outer two positions of the 8-group grid,
        # so 6 mid groups remain
        starts_all = ptrs_group_starts(m, ptrs.n_groups + 2, ptrs.group_len)
        starts = starts_all[1:-1]
        if starts.size != ptrs.n_groups:
            raise ValueError("PTRS pattern inconsistent with KT grid")
    else:
        starts = ptrs_group_starts(m, ptrs.n_groups, ptrs.group_len)
    idx = (starts[:, None] + np.arange(ptrs.group_len)[None, :]).ravel()
    if kt is not None and kt.total > 0:
        lo, hi = kt.head, m - kt.tail
        if np.any(idx < lo) or np.any(idx >= hi):
            raise ValueError(
                f"PTRS groups collide with the KT guard (usable span [{lo}, {hi}) of {m})"
            )
    return idx, starts


def build_slot_resource(
    num: Numerology,
    kind: str,
    scheme: str,
    payload_bits: np.ndarray,
    ptrs: PtrsPattern | None = None,
    kt: KtConfig | None = None,
    dmrs_seed: int = DMRS_SEED_DEFAULT,
    ptrs_seed: int = PTRS_SEED_DEFAULT,
) -> SlotResource:
    """Lay payload bits plus reference signals into one slot.

    The payload must exactly fill the slot's capacity (use
    :func:`slot_capacity_bits` to size it). KT guards only exist for the
    kt-dft-s-ofdm kind; passing a non-empty ``kt`` elsewhere is an error.
    """
    layout = _resolve_layout(num, kind)
    sch = get_scheme(scheme)
    m = num.n_subcarriers
    ptrs, kt = _resolve_pilots(kind, ptrs, kt)

    if kt is not None and kt.total >= m:
        raise ValueError(f"KT guard of {kt.total} samples swallows the whole {m}-sample vector")

    if kind == "cp-ofdm":
        ptrs_idx = _cp_ofdm_ptrs_idx(m)
        head_idx = tail_idx = np.zeros(0, dtype=int)
        head_vals = tail_vals = np.zeros(0, dtype=np.complex128)
    else:
        ptrs_idx, _ = _spread_overhead(m, ptrs, kt)
        if kt is not None and kt.total > 0:
            head_idx = np.arange(kt.head)
            tail_idx = np.arange(m - kt.tail, m)
            head_vals, tail_vals = kt_sequence(kt)
        else:
            head_idx = tail_idx = np.zeros(0, dtype=int)
            head_vals = tail_vals = np.zeros(0, dtype=np.complex128)

    occupied = np.concatenate([ptrs_idx, head_idx, tail_idx])
    if np.unique(occupied).size != occupied.size:
        raise ValueError("reference-signal positions overlap")
    data_idx = np.setdiff1d(np.arange(m), occupied)

    dmrs_symbol = DMRS_SYMBOL_INDEX
    data_symbols = tuple(i for i in range(layout.n_symbols) if i != dmrs_symbol)

    payload_bits = np.asarray(payload_bits, dtype=np.int64).ravel()
    expected = data_idx.size * len(data_symbols) * sch.bits_per_symbol
    if payload_bits.size != expected:
        raise ValueError(
            f"payload of {payload_bits.size} bits does not fill the slot "
            f"({expected} bits: {data_idx.size} symbols x {len(data_symbols)} "
            f"data symbols x {sch.bits_per_symbol} bits)"
        )

    ptrs_vals = _ptrs_values(ptrs_idx.size, ptrs_seed)
    grid = np.zeros((layout.n_symbols, m), dtype=np.complex128)
    grid[dmrs_symbol] = dmrs_sequence(m, dmrs_seed)

    bits_per_sym = data_idx.size * sch.bits_per_symbol
    for row, sym in enumerate(data_symbols):
        chunk = payload_bits[row * bits_per_sym : (row + 1) * bits_per_sym]
        grid[sym, data_idx] = modulate_bits(chunk, scheme)
        grid[sym, ptrs_idx] = ptrs_vals
        if head_idx.size:
            grid[sym, head_idx] = head_vals
            grid[sym, tail_idx] = tail_vals

    return SlotResource(
        numerology=num,
        kind=kind,
        cp_kind=layout.kind,
        scheme=scheme,
        grid=grid,
        dmrs_symbol=dmrs_symbol,
        data_symbols=data_symbols,
        data_idx=data_idx,
        ptrs_idx=ptrs_idx,
        ptrs_vals=ptrs_vals,
        kt_head_idx=head_idx,
        kt_tail_idx=tail_idx,
        kt_head_vals=head_vals,
        kt_tail_vals=tail_vals,
        payload_bits=payload_bits,
        kt=kt,
        ptrs=ptrs,
    )


def _resolve_pilots(kind: str, ptrs: PtrsPattern | None, kt: KtConfig | None):
    if kind not in WAVEFORM_KINDS:
        raise ValueError(f"unknown waveform kind {kind!r}, expected one of {WAVEFORM_KINDS}")
    if kind == "kt-dft-s-ofdm":
        if kt is None:
            kt = KtConfig()
        if ptrs is None:
            ptrs = PtrsPattern(n_groups=6, group_len=4) if kt.total else PtrsPattern()
    else:
        if kt is not None and kt.total > 0:
            raise ValueError(f"KT guards are only defined for kt-dft-s-ofdm, not {kind}")
        kt = None
        if ptrs is None:
            ptrs = PtrsPattern()
    return ptrs, kt


def extract_payload_bits(resource: SlotResource, grid: np.ndarray) -> np.ndarray:
    """Hard-demap a received (equalized) grid back to payload bits."""
    out = []
    for sym in resource.data_symbols:
        out.append(demap_hard(grid[sym, resource.data_idx], resource.scheme))
    return np.concatenate(out)
