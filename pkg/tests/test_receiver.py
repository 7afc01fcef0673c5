"""Receive-chain behavior against analytically known channels.

Each scenario uses a channel whose frequency response is written down in
closed form, so estimator and equalizer outputs have exact references.
"""
import numpy as np
import pytest

from subthzlink.impairments import apply_awgn
from subthzlink.mapping import KtConfig, PtrsPattern, build_slot_resource
from subthzlink.numerology import numerology_from_mu
from subthzlink.receiver import (
    estimate_channel,
    mmse_equalize,
    receive_slot,
    recover_llrs,
)
from subthzlink.seeds import stream
from subthzlink.waveform import alloc_bin_indices, demodulate, modulate
from subthzlink.mapping import extract_payload_bits

KT_SMALL = KtConfig(head=2, tail=14)
PTRS_SMALL = PtrsPattern(n_groups=4, group_len=2)


def _resource(kind="dft-s-ofdm", scheme="qpsk", seed=5):
    num = numerology_from_mu(4, fft_size=512, n_prb=32)
    kt = KT_SMALL if kind == "kt-dft-s-ofdm" else None
    from subthzlink.mapping import slot_capacity_bits

    cap = slot_capacity_bits(num, kind, scheme, kt=kt, ptrs=PTRS_SMALL)
    bits = stream(seed, 0).integers(0, 2, size=cap, dtype=np.uint8)
    return build_slot_resource(num, kind, scheme, bits, kt=kt, ptrs=PTRS_SMALL), bits


def _two_tap_response(m, n_bins, delay, a0, a1):
    k = alloc_bin_indices(m, n_bins)
    return a0 + a1 * np.exp(-2j * np.pi * k * delay / n_bins)


def test_channel_estimate_recovers_two_tap_response():
    res, _ = _resource("cp-ofdm")
    sig = modulate(res)
    h_true = _two_tap_response(res.m, 512, 12, 1.0, 0.35 * np.exp(0.7j))
    # apply in frequency domain per symbol to keep the reference exact
    grid = demodulate(sig.samples, res)
    rx = grid * h_true[None, :]
    h_est, nv = estimate_channel(rx, res)
    np.testing.assert_allclose(h_est[::2], h_true[::2], rtol=0, atol=1e-9)
    # interpolated odd bins track a smooth response closely; the bin past the
    # final pilot holds its neighbor's value
    assert np.max(np.abs(h_est[:-1] - h_true[:-1])) < 0.02
    assert h_est[-1] == pytest.approx(h_est[-2], rel=1e-12)
    # pilot half-differences read residual frequency selectivity as noise:
    # |a1 * (e^{j d phi} - 1)|^2 / 2 * boost for pilot spacing d phi
    dphi = 2 * np.pi * 12 * 2 / 512
    leak = 0.35**2 * np.abs(np.exp(1j * dphi) - 1) ** 2 / 2 * 2
    assert nv == pytest.approx(leak, rel=0.05)

    flat = demodulate(sig.samples, res)
    _, nv_flat = estimate_channel(flat, res)
    assert nv_flat < 1e-9


def test_noise_variance_estimate_is_calibrated():
    res, _ = _resource("cp-ofdm")
    sig = modulate(res)
    grid = demodulate(sig.samples, res)
    nv_true = 0.02
    rng = stream(5, 1)
    noisy = grid + np.sqrt(nv_true / 2) * (
        rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    )
    _, nv_est = estimate_channel(noisy, res)
    assert nv_est == pytest.approx(nv_true, rel=0.3)


def test_mmse_reduces_to_passthrough_on_flat_channel():
    res, _ = _resource("cp-ofdm")
    grid = demodulate(modulate(res).samples, res)
    eq = mmse_equalize(grid, np.ones(res.m, dtype=complex), 1e-9)
    np.testing.assert_allclose(eq.grid, grid, rtol=1e-6)
    np.testing.assert_allclose(eq.gain, 1.0, rtol=1e-6)


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"])
@pytest.mark.parametrize("scheme", ["pi2bpsk-1plusD", "qpsk", "16qam"])
def test_llrs_recover_payload_with_estimated_receiver(kind, scheme):
    res, bits = _resource(kind, scheme)
    sig = modulate(res)
    y, _ = apply_awgn(sig.samples, 25.0, stream(5, 2, hash(kind) % 97, hash(scheme) % 97),
                      bandwidth_fraction=res.m / 512)
    llrs, _ = receive_slot(res, y)
    np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm"])
def test_llrs_with_two_tap_channel_and_timing_backoff(kind):
    res, bits = _resource(kind)
    sig = modulate(res)
    a1 = 0.3 * np.exp(1.1j)
    delay = 5
    x = sig.samples
    faded = x.copy()
    faded[delay:] += a1 * x[:-delay]
    y, _ = apply_awgn(faded, 30.0, stream(5, 3), bandwidth_fraction=res.m / 512)
    off = 8
    llrs, eq = receive_slot(res, y, timing_offset=off)
    np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)
    # the estimate folds the timing ramp into the response
    k = alloc_bin_indices(res.m, 512)
    h_expected = (1.0 + a1 * np.exp(-2j * np.pi * k * delay / 512)) * np.exp(
        -2j * np.pi * k * off / 512
    )
    assert np.max(np.abs(eq.h - h_expected)) < 0.1


def test_genie_channel_bypasses_estimation():
    res, bits = _resource("dft-s-ofdm")
    sig = modulate(res)
    y, nvar = apply_awgn(sig.samples, 18.0, stream(5, 4), bandwidth_fraction=res.m / 512)
    nv_grid = nvar * res.m / 512
    llrs, eq = receive_slot(
        res, y, h_known=np.ones(res.m, dtype=complex), noise_var_known=nv_grid
    )
    assert eq.noise_var == pytest.approx(nv_grid)
    np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)


def test_common_phase_error_is_tracked_out():
    # 1 radian exceeds the QPSK decision margin, so tracking must act
    for kind in ["cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"]:
        res, bits = _resource(kind)
        sig = modulate(res)
        y = sig.samples * np.exp(1.0j)
        llrs, _ = receive_slot(res, y, h_known=np.ones(res.m, dtype=complex),
                               noise_var_known=1e-4)
        assert ((llrs < 0).astype(np.uint8) == bits).all(), kind
        llrs_off, _ = receive_slot(res, y, h_known=np.ones(res.m, dtype=complex),
                                   noise_var_known=1e-4, track_phase=False)
        assert ((llrs_off < 0).astype(np.uint8) != bits).any(), kind


def test_phase_ramp_across_spread_symbol_is_interpolated():
    res, bits = _resource("kt-dft-s-ofdm")
    sig = modulate(res)
    # slow drift over the slot, roughly linear within each symbol
    t = np.arange(sig.samples.size)
    drift = 0.9 * np.sin(2 * np.pi * t / sig.samples.size)
    y = sig.samples * np.exp(1j * drift)
    llrs, _ = receive_slot(res, y, h_known=np.ones(res.m, dtype=complex),
                           noise_var_known=1e-4)
    assert ((llrs < 0).astype(np.uint8) == bits).all()


def test_weak_bins_yield_weak_llrs():
    res, bits = _resource("cp-ofdm", "qpsk")
    sig = modulate(res)
    # notch half the band 6 dB down
    k = alloc_bin_indices(res.m, 512)
    h = np.where(np.arange(res.m) < res.m // 2, 1.0, 0.5).astype(complex)
    grid = demodulate(sig.samples, res)
    rx = grid * h[None, :]
    eq = mmse_equalize(rx, h, 0.2)
    llrs = recover_llrs(res, eq)
    per_sym = np.abs(llrs.reshape(len(res.data_symbols), -1, 2)).mean(axis=(0, 2))
    strong = per_sym[np.asarray(res.data_idx) < res.m // 2].mean()
    weak = per_sym[np.asarray(res.data_idx) >= res.m // 2].mean()
    assert strong > 2.5 * weak


def test_payload_bit_order_matches_resource():
    res, bits = _resource("dft-s-ofdm", "16qam")
    np.testing.assert_array_equal(extract_payload_bits(res, res.grid), bits)
    sig = modulate(res)
    llrs, _ = receive_slot(res, sig.samples, h_known=np.ones(res.m, dtype=complex),
                           noise_var_known=1e-6)
    np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)
