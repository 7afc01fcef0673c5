"""Waveform synthesis and demodulation for the three transmit chains.

cp-ofdm maps the allocation straight onto subcarriers; dft-s-ofdm spreads
each symbol's pre-DFT vector through an orthonormal M-point DFT first;
kt-dft-s-ofdm does the same with no cyclic prefix, the known head/tail
guards inside the vector standing in for it. All transforms are orthonormal
so energy bookkeeping is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapping import SlotResource
from .numerology import slot_layout

OVERSAMPLE_DEFAULT = 4


def alloc_bin_indices(m: int, n_bins: int) -> np.ndarray:
    """FFT bin index for each of ``m`` centred subcarriers (DC in use)."""
    if m > n_bins:
        raise ValueError(f"allocation of {m} exceeds {n_bins} bins")
    return (np.arange(m) - m // 2) % n_bins


def spread(vec: np.ndarray) -> np.ndarray:
    """M-point DFT of a pre-spread vector, in ascending-subcarrier order.

    The half-length roll parks the sequence's DC on the middle of the
    allocation. Without it the spectrum sits half an allocation off, which
    is an invisible relabeling for random payloads but multiplies the time
    samples by (-1)^i, wrecking the envelope of designed sequences such as
    the constant-modulus head/tail guards.
    """
    v = np.fft.fft(vec, axis=-1, norm="ortho")
    return np.roll(v, v.shape[-1] // 2, axis=-1)


def despread(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`spread`: subcarrier order back to the sequence."""
    v = np.roll(vec, -(vec.shape[-1] // 2), axis=-1)
    return np.fft.ifft(v, axis=-1, norm="ortho")


def fdss_extend(bins: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Cyclically extend spread bins to the window length and shape them.

    The window is renormalized so the shaped vector keeps the original
    energy; :func:`fdss_fold` is its matched inverse.
    """
    bins = np.asarray(bins)
    window = np.asarray(window, dtype=np.float64)
    m, ell = bins.size, window.size
    if ell < m:
        raise ValueError("FDSS window must be at least the allocation size")
    w = window / np.sqrt(np.sum(window**2) / m)
    ext = bins[(np.arange(ell) - ell // 2 + m // 2) % m]
    return ext * w


def fdss_fold(shaped: np.ndarray, window: np.ndarray, m: int) -> np.ndarray:
    """Collapse an FDSS-shaped vector back to ``m`` bins (matched combining)."""
    shaped = np.asarray(shaped)
    window = np.asarray(window, dtype=np.float64)
    ell = window.size
    w = window / np.sqrt(np.sum(window**2) / m)
    num = np.zeros(m, dtype=np.complex128)
    den = np.zeros(m, dtype=np.float64)
    idx = (np.arange(ell) - ell // 2 + m // 2) % m
    np.add.at(num, idx, shaped * w)
    np.add.at(den, idx, w**2)
    return num / den


@dataclass(frozen=True)
class WaveformSignal:
    """Baseband samples for one slot plus the geometry needed to undo them."""

    samples: np.ndarray
    kind: str
    cp_kind: str
    fft_size: int
    m: int
    oversample: int
    symbol_starts: np.ndarray  # FFT-window starts, in oversampled samples
    cp_samples: np.ndarray  # per symbol, oversampled

    @property
    def n_symbols(self) -> int:
        return self.symbol_starts.size

    @property
    def window(self) -> int:
        return self.fft_size * self.oversample

    def symbol_cores(self) -> np.ndarray:
        """(n_symbols, window) view of the CP-less FFT windows."""
        return np.stack([self.samples[s : s + self.window] for s in self.symbol_starts])


def modulate(
    resource: SlotResource,
    oversample: int = 1,
    fdss_window: np.ndarray | None = None,
) -> WaveformSignal:
    """Synthesize one slot of baseband samples at unit expected power.

    Oversampling zero-pads in frequency (factor 4 is the usual choice for
    peak and spectrum measurements; 1 is enough for link simulation).
    """
    num = resource.numerology
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    layout = slot_layout(num, resource.cp_kind)
    if layout.n_symbols != resource.n_symbols:
        raise ValueError("slot resource and layout disagree on symbol count")
    n_bins = num.fft_size * oversample
    m = resource.m
    scale = np.sqrt(n_bins / m)

    plain_idx = alloc_bin_indices(m, n_bins)
    if fdss_window is not None:
        if resource.kind == "cp-ofdm":
            raise ValueError("FDSS applies to the spread kinds only")
        shaped_idx = alloc_bin_indices(fdss_window.size, n_bins)

    freq_rows = set(resource.freq_domain_rows)
    spread_rows = [s for s in range(resource.n_symbols) if s not in freq_rows]

    spectrum = np.zeros((resource.n_symbols, n_bins), dtype=np.complex128)
    for sym in freq_rows:
        spectrum[sym, plain_idx] = resource.grid[sym]
    if spread_rows:
        bins = spread(resource.grid[spread_rows])
        if fdss_window is not None:
            shaped = np.stack([fdss_extend(b, fdss_window) for b in bins])
            spectrum[np.ix_(spread_rows, shaped_idx)] = shaped
        else:
            spectrum[np.ix_(spread_rows, plain_idx)] = bins
    cores = np.fft.ifft(spectrum, axis=1, norm="ortho") * scale

    pieces = []
    starts = []
    pos = 0
    for sym in range(resource.n_symbols):
        cp = layout.cp_samples[sym] * oversample
        if cp:
            # the initial prefix at high mu outgrows the symbol body, so
            # index cyclically instead of slicing the tail
            pieces.append(cores[sym, np.arange(-cp, 0) % n_bins])
        pieces.append(cores[sym])
        starts.append(pos + cp)
        pos += cp + n_bins

    return WaveformSignal(
        samples=np.concatenate(pieces),
        kind=resource.kind,
        cp_kind=resource.cp_kind,
        fft_size=num.fft_size,
        m=m,
        oversample=oversample,
        symbol_starts=np.asarray(starts),
        cp_samples=np.asarray(layout.cp_samples) * oversample,
    )


def demodulate(
    samples: np.ndarray,
    resource: SlotResource,
    oversample: int = 1,
    timing_offset: int = 0,
    fdss_window: np.ndarray | None = None,
) -> np.ndarray:
    """Recover the (n_symbols, M) frequency-domain allocation from samples.

    ``timing_offset`` starts each FFT window that many samples early, which
    is only legal inside a cyclic prefix; the resulting per-bin phase ramp is
    left for the equalizer. Spread symbols stay in the frequency domain here;
    use :func:`despread_grid` after equalization.
    """
    num = resource.numerology
    layout = slot_layout(num, resource.cp_kind)
    n_bins = num.fft_size * oversample
    m = resource.m
    scale = np.sqrt(n_bins / m)
    if timing_offset < 0:
        raise ValueError("timing_offset must be >= 0")
    if timing_offset and resource.cp_kind == "no-cp":
        raise ValueError("timing_offset needs a cyclic prefix to back into")

    plain_idx = alloc_bin_indices(m, n_bins)
    if fdss_window is not None:
        shaped_idx = alloc_bin_indices(fdss_window.size, n_bins)
    freq_rows = set(resource.freq_domain_rows)

    samples = np.asarray(samples)
    windows = np.empty((resource.n_symbols, n_bins), dtype=np.complex128)
    pos = 0
    for sym in range(resource.n_symbols):
        cp = layout.cp_samples[sym] * oversample
        start = pos + cp - timing_offset
        if start < 0:
            raise ValueError("timing_offset larger than the cyclic prefix")
        window = samples[start : start + n_bins]
        if window.size != n_bins:
            raise ValueError("sample vector shorter than the slot layout")
        windows[sym] = window
        pos += cp + n_bins

    spectra = np.fft.fft(windows, axis=1, norm="ortho") / scale
    grid = np.empty((resource.n_symbols, m), dtype=np.complex128)
    for sym in range(resource.n_symbols):
        if fdss_window is not None and sym not in freq_rows:
            grid[sym] = fdss_fold(spectra[sym, shaped_idx], fdss_window, m)
        else:
            grid[sym] = spectra[sym, plain_idx]
    return grid


def despread_grid(freq_grid: np.ndarray, resource: SlotResource) -> np.ndarray:
    """Undo the M-point spreading on the rows that carry it."""
    out = np.array(freq_grid, copy=True)
    freq_rows = set(resource.freq_domain_rows)
    for sym in range(resource.n_symbols):
        if sym not in freq_rows:
            out[sym] = despread(freq_grid[sym])
    return out
