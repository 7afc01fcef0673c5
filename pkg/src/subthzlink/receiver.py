"""Slot receiver: channel estimation, equalization, phase tracking, demapping.

Channel knowledge comes from the comb reference symbol: least squares on the
pilot comb, linear interpolation across the allocation, noise variance from
half-differences of neighboring pilot estimates. Equalization is MMSE with
the bias divided back out, so the per-bin effective noise is the zero-forcing
one. Residual oscillator phase is corrected in the domain where payload
decisions happen: a common phase per symbol for plain OFDM, an interpolated
phase trajectory across each spread symbol anchored on the reference groups
(plus the known head and tail when the symbol carries them).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapping import SlotResource, max_log_llrs
from .waveform import demodulate, despread


def estimate_channel(rx_grid: np.ndarray, resource: SlotResource) -> tuple[np.ndarray, float]:
    """LS estimate on the reference comb -> (per-bin response, noise variance).

    The noise variance is per resource element of the unit-power grid; pilot
    boosting is divided out.
    """
    pilots = resource.grid[resource.dmrs_symbol, ::2]
    h_comb = rx_grid[resource.dmrs_symbol, ::2] / pilots
    full = np.arange(resource.m)
    idx = full[::2]
    h = np.interp(full, idx, h_comb.real) + 1j * np.interp(full, idx, h_comb.imag)
    # neighboring pilots see nearly the same channel, so their half-difference
    # is almost pure noise
    d = (h_comb[1:] - h_comb[:-1]) / np.sqrt(2.0)
    boost = float(np.mean(np.abs(pilots) ** 2))
    nv = float(np.mean(np.abs(d) ** 2) * boost)
    return h, max(nv, 1e-12)


@dataclass(frozen=True)
class Equalized:
    """MMSE-equalized grid plus what the demapper needs to scale LLRs."""

    grid: np.ndarray
    h: np.ndarray
    gain: np.ndarray
    noise_var: float


def mmse_equalize(rx_grid: np.ndarray, h: np.ndarray, noise_var: float) -> Equalized:
    w = np.conj(h) / (np.abs(h) ** 2 + noise_var)
    return Equalized(grid=rx_grid * w, h=h, gain=w * h, noise_var=noise_var)


def _spread_anchors(resource: SlotResource) -> tuple[list[np.ndarray], np.ndarray]:
    """Anchor index groups and their centers, ordered along the symbol."""
    groups = []
    if resource.kt_head_idx.size:
        groups.append(resource.kt_head_idx)
    if resource.ptrs_idx.size:
        per = resource.ptrs_idx.reshape(resource.ptrs.n_groups, -1)
        groups.extend(per[i] for i in range(per.shape[0]))
    if resource.kt_tail_idx.size:
        groups.append(resource.kt_tail_idx)
    centers = np.array([g.mean() for g in groups])
    order = np.argsort(centers)
    return [groups[int(i)] for i in order], centers[order]


def _reference_for(resource: SlotResource, group: np.ndarray) -> np.ndarray:
    if resource.kt_head_idx.size and group is resource.kt_head_idx:
        return resource.kt_head_vals
    if resource.kt_tail_idx.size and group is resource.kt_tail_idx:
        return resource.kt_tail_vals
    # a reference-group slice: look its values up by position
    pos = {int(p): v for p, v in zip(resource.ptrs_idx, resource.ptrs_vals)}
    return np.array([pos[int(p)] for p in group])


def recover_llrs(resource: SlotResource, eq: Equalized, track_phase: bool = True) -> np.ndarray:
    """Payload LLRs from an equalized grid, in transmitted bit order."""
    if resource.kind == "cp-ofdm":
        return _recover_plain(resource, eq, track_phase)
    return _recover_spread(resource, eq, track_phase)


def _recover_plain(resource, eq, track_phase):
    gain = np.where(np.abs(eq.gain) < 1e-12, 1e-12, eq.gain)
    nv_bin = eq.noise_var / np.maximum(np.abs(eq.h) ** 2, 1e-12)
    out = []
    for row in resource.data_symbols:
        x = eq.grid[row] / gain
        if track_phase and resource.ptrs_idx.size:
            rot = np.vdot(resource.ptrs_vals, x[resource.ptrs_idx])
            x = x * np.exp(-1j * np.angle(rot))
        out.append(
            max_log_llrs(x[resource.data_idx], resource.scheme, nv_bin[resource.data_idx])
        )
    return np.concatenate(out)


def _interp_residual_var(theta, centers, anchor_var):
    """Mid-gap variance of what linear interpolation misses.

    Each interior anchor is predicted from its two neighbors; the prediction
    error mixes anchor estimation noise with the oscillator's wander between
    anchors. The noise part is known, so subtracting it leaves the wander,
    halved because a gap midpoint sits closer to its supports than the
    left-out anchor does.
    """
    if theta.size < 3:
        return 0.0
    w = (centers[2:] - centers[1:-1]) / (centers[2:] - centers[:-2])
    err = theta[1:-1] - (w * theta[:-2] + (1.0 - w) * theta[2:])
    noise = anchor_var[1:-1] + w**2 * anchor_var[:-2] + (1.0 - w) ** 2 * anchor_var[2:]
    return max(0.0, float(np.mean(err**2 - noise)) / 2.0)


def _recover_spread(resource, eq, track_phase):
    g_bar = eq.gain.mean()
    if np.abs(g_bar) < 1e-12:
        g_bar = 1e-12
    # post-despread noise plus residual self-interference from gain ripple,
    # referred to the unbiased symbol estimate
    v_eff = (eq.noise_var * np.mean(np.abs(eq.gain / eq.h) ** 2)
             + np.mean(np.abs(eq.gain - g_bar) ** 2)) / np.abs(g_bar) ** 2
    v_eff = max(float(v_eff), 1e-12)
    groups, centers = _spread_anchors(resource)
    refs = [_reference_for(resource, g) for g in groups]
    anchor_var = np.array([
        v_eff / (2.0 * float(np.sum(np.abs(ref) ** 2))) for ref in refs
    ]) if groups else np.empty(0)
    n = np.arange(resource.m)
    out = []
    for row in resource.data_symbols:
        s = despread(eq.grid[row]) / g_bar
        v_sym = v_eff
        if track_phase and groups:
            theta = np.array([
                np.angle(np.vdot(ref, s[grp])) for grp, ref in zip(groups, refs)
            ])
            theta = np.unwrap(theta)
            s = s * np.exp(-1j * np.interp(n, centers, theta))
            # phase wander the anchors cannot catch stays in the samples;
            # fold it into the demapper variance or high-SNR LLRs come out
            # overconfident and the decoder diverges instead of flooring
            v_sym = v_eff + _interp_residual_var(theta, centers, anchor_var)
        out.append(max_log_llrs(s[resource.data_idx], resource.scheme, v_sym))
    return np.concatenate(out)


def receive_slot(
    resource: SlotResource,
    samples: np.ndarray,
    oversample: int = 1,
    timing_offset: int = 0,
    fdss_window: np.ndarray | None = None,
    h_known: np.ndarray | None = None,
    noise_var_known: float | None = None,
    track_phase: bool = True,
) -> tuple[np.ndarray, Equalized]:
    """Full receive chain from time samples to payload LLRs.

    Pass ``h_known`` (including any timing-offset ramp) and
    ``noise_var_known`` to bypass estimation; either may be given alone.
    """
    rx_grid = demodulate(
        samples, resource, oversample=oversample,
        timing_offset=timing_offset, fdss_window=fdss_window,
    )
    if h_known is None or noise_var_known is None:
        h_est, nv_est = estimate_channel(rx_grid, resource)
    h = h_est if h_known is None else np.asarray(h_known, dtype=np.complex128)
    nv = nv_est if noise_var_known is None else float(noise_var_known)
    eq = mmse_equalize(rx_grid, h, nv)
    return recover_llrs(resource, eq, track_phase=track_phase), eq
