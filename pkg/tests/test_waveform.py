import numpy as np
import pytest

from subthzlink.mapping import (
    KtConfig,
    build_slot_resource,
    extract_payload_bits,
    slot_capacity_bits,
)
from subthzlink.numerology import numerology_from_mu
from subthzlink.waveform import (
    alloc_bin_indices,
    demodulate,
    despread_grid,
    fdss_extend,
    fdss_fold,
    modulate,
)

KT_SMALL = KtConfig(head=2, tail=14)


def _resource(kind, scheme="qpsk", mu=4, fft=512, n_prb=32, seed=0):
    num = numerology_from_mu(mu, fft_size=fft, n_prb=n_prb)
    kt = KT_SMALL if kind == "kt-dft-s-ofdm" else None
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=slot_capacity_bits(num, kind, scheme, kt=kt))
    return build_slot_resource(num, kind, scheme, bits, kt=kt)


def test_alloc_bins_centered_dc_in_use():
    idx = alloc_bin_indices(6, 16)
    assert list(idx) == [13, 14, 15, 0, 1, 2]
    with pytest.raises(ValueError):
        alloc_bin_indices(20, 16)


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"])
@pytest.mark.parametrize("oversample", [1, 4])
def test_noiseless_loopback(kind, oversample):
    res = _resource(kind)
    sig = modulate(res, oversample=oversample)
    grid = demodulate(sig.samples, res, oversample=oversample)
    bits = extract_payload_bits(res, despread_grid(grid, res))
    assert np.array_equal(bits, res.payload_bits)


@pytest.mark.parametrize("scheme", ["pi2bpsk-1plusD", "qpsk", "16qam", "64qam"])
def test_noiseless_loopback_all_schemes(scheme):
    for kind in ("cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"):
        res = _resource(kind, scheme=scheme, seed=3)
        sig = modulate(res)
        grid = demodulate(sig.samples, res)
        bits = extract_payload_bits(res, despread_grid(grid, res))
        assert np.array_equal(bits, res.payload_bits)


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"])
def test_unit_mean_power(kind):
    sig = modulate(_resource(kind, seed=5), oversample=4)
    power = np.mean(np.abs(sig.samples) ** 2)
    assert power == pytest.approx(1.0, rel=0.05)


def test_slot_sample_counts():
    res = _resource("dft-s-ofdm")
    for os in (1, 2):
        sig = modulate(res, oversample=os)
        layout_total = (np.sum(sig.cp_samples) + sig.n_symbols * sig.window)
        assert sig.samples.size == layout_total
    nocp = modulate(_resource("kt-dft-s-ofdm"))
    assert nocp.samples.size == 15 * 512  # guards live inside the symbols


def test_parseval_per_symbol():
    res = _resource("dft-s-ofdm", seed=7)
    sig = modulate(res, oversample=1)
    cores = sig.symbol_cores()
    n_bins = sig.window
    for sym in range(res.n_symbols):
        row = res.grid[sym]
        time_energy = np.sum(np.abs(cores[sym]) ** 2)
        content_energy = np.sum(np.abs(row) ** 2) * (n_bins / res.m)
        assert abs(time_energy - content_energy) <= 1e-9 * content_energy


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm"])
def test_delay_within_cp_is_a_phase_ramp(kind):
    res = _resource(kind, seed=9)
    os = 1
    sig = modulate(res, oversample=os)
    d = 20  # less than the 36-sample regular CP at fft 512
    delayed = np.concatenate([np.zeros(d, dtype=complex), sig.samples])
    ref = demodulate(sig.samples, res, oversample=os)
    got = demodulate(delayed, res, oversample=os)
    n_bins = 512 * os
    k = alloc_bin_indices(res.m, n_bins)
    ramp = np.exp(-2j * np.pi * k * d / n_bins)
    assert np.allclose(got, ref * ramp[None, :], atol=1e-9)


def test_kt_guard_shows_up_in_time_domain():
    res = _resource("kt-dft-s-ofdm", seed=11)
    sig = modulate(res, oversample=1)
    cores = sig.symbol_cores()
    n = sig.window
    guard = int(round(KT_SMALL.tail / res.m * n))
    tails = np.stack([cores[s][n - guard :] for s in res.data_symbols])
    # the known tail makes every data symbol end alike; data regions differ
    tail_spread = np.mean(np.abs(tails - tails[0]) ** 2) / np.mean(np.abs(tails) ** 2)
    mids = np.stack([cores[s][n // 2 - guard // 2 : n // 2 + guard // 2] for s in res.data_symbols])
    mid_spread = np.mean(np.abs(mids - mids[0]) ** 2) / np.mean(np.abs(mids) ** 2)
    assert tail_spread < 0.2
    assert tail_spread < mid_spread / 5


def test_fdss_roundtrip():
    rng = np.random.default_rng(13)
    bins = rng.normal(size=48) + 1j * rng.normal(size=48)
    window = 1.0 + 0.5 * np.cos(np.linspace(-np.pi, np.pi, 60))
    shaped = fdss_extend(bins, window)
    assert shaped.size == 60
    # energy preserved by the window normalization (white input on average)
    back = fdss_fold(shaped, window, 48)
    assert np.allclose(back, bins, atol=1e-12)


def test_modulate_with_fdss_loopback():
    res = _resource("dft-s-ofdm", seed=15)
    window = np.hamming(res.m + 64)
    sig = modulate(res, oversample=1, fdss_window=window)
    grid = demodulate(sig.samples, res, oversample=1, fdss_window=window)
    bits = extract_payload_bits(res, despread_grid(grid, res))
    assert np.array_equal(bits, res.payload_bits)


def test_fdss_rejected_for_cp_ofdm():
    res = _resource("cp-ofdm", seed=17)
    with pytest.raises(ValueError):
        modulate(res, fdss_window=np.ones(res.m))


def test_demodulate_guards():
    res = _resource("dft-s-ofdm", seed=19)
    sig = modulate(res)
    with pytest.raises(ValueError):
        demodulate(sig.samples[:-5], res)
    with pytest.raises(ValueError):
        demodulate(sig.samples, res, timing_offset=10_000)
    nocp = _resource("kt-dft-s-ofdm", seed=19)
    with pytest.raises(ValueError):
        demodulate(modulate(nocp).samples, nocp, timing_offset=4)


def test_timing_offset_absorbed_as_ramp():
    res = _resource("dft-s-ofdm", seed=21)
    sig = modulate(res)
    ref = demodulate(sig.samples, res)
    off = 10
    got = demodulate(sig.samples, res, timing_offset=off)
    k = alloc_bin_indices(res.m, 512)
    ramp = np.exp(-2j * np.pi * k * off / 512)
    assert np.allclose(got, ref * ramp[None, :], atol=1e-9)
