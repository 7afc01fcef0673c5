import numpy as np
import pytest

from subthzlink import mapping
from subthzlink.mapping import (
    KtConfig,
    PtrsPattern,
    build_slot_resource,
    demap_hard,
    dmrs_sequence,
    extract_payload_bits,
    kt_sequence,
    max_log_llrs,
    modulate_bits,
    ptrs_group_starts,
    slot_capacity_bits,
    zadoff_chu,
)
from subthzlink.numerology import numerology_from_mu


def _random_bits(rng, n):
    return rng.integers(0, 2, size=n)


def test_qpsk_reference_point():
    out = modulate_bits([0, 0], "qpsk")
    assert out[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    out = modulate_bits([1, 1], "qpsk")
    assert out[0] == pytest.approx((-1 - 1j) / np.sqrt(2))


@pytest.mark.parametrize("scheme", ["qpsk", "16qam", "64qam"])
def test_constellations_unit_power_and_gray(scheme):
    bps = mapping.SCHEMES[scheme].bits_per_symbol
    labels = ((np.arange(2**bps)[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.int64)
    points = modulate_bits(labels.ravel(), scheme)
    # exact unit average power over the full constellation
    assert np.mean(np.abs(points) ** 2) == pytest.approx(1.0, abs=1e-12)
    # Gray property: nearest neighbours differ in exactly one bit
    d = np.abs(points[:, None] - points[None, :])
    dmin = d[d > 1e-9].min()
    near = (d > 1e-9) & (d < dmin * 1.001)
    for i, j in zip(*np.where(near)):
        assert np.sum(labels[i] != labels[j]) == 1


def test_pi2bpsk_1plusd_constant_modulus():
    rng = np.random.default_rng(7)
    out = modulate_bits(_random_bits(rng, 256), "pi2bpsk-1plusD")
    assert np.allclose(np.abs(out), 1.0, atol=1e-12)


def test_pi2bpsk_1plusd_rejects_odd_blocks():
    with pytest.raises(ValueError):
        modulate_bits([0, 1, 0], "pi2bpsk-1plusD")


@pytest.mark.parametrize("scheme", ["pi2bpsk-1plusD", "qpsk", "16qam", "64qam"])
def test_hard_demap_inverts_modulation(scheme):
    rng = np.random.default_rng(11)
    bits = _random_bits(rng, 480 * mapping.SCHEMES[scheme].bits_per_symbol)
    assert np.array_equal(demap_hard(modulate_bits(bits, scheme), scheme), bits)


@pytest.mark.parametrize("scheme", ["pi2bpsk-1plusD", "qpsk", "16qam", "64qam"])
def test_noiseless_llr_signs_reproduce_bits(scheme):
    rng = np.random.default_rng(13)
    bits = _random_bits(rng, 240 * mapping.SCHEMES[scheme].bits_per_symbol)
    llrs = max_log_llrs(modulate_bits(bits, scheme), scheme, noise_var=0.1)
    assert np.array_equal((llrs < 0).astype(np.int64), bits)


def test_qpsk_llr_matches_closed_form():
    # max-log LLR for QPSK reduces to 2*sqrt(2)*Re(y)/sigma^2 on the first bit
    rng = np.random.default_rng(17)
    y = rng.normal(size=50) * 0.3 + 1j * rng.normal(size=50) * 0.3
    nv = 0.5
    llrs = max_log_llrs(y, "qpsk", noise_var=nv, clip=1e9).reshape(-1, 2)
    assert np.allclose(llrs[:, 0], 2 * np.sqrt(2) * y.real / nv)
    assert np.allclose(llrs[:, 1], 2 * np.sqrt(2) * y.imag / nv)


def test_llr_clipping():
    llrs = max_log_llrs(np.array([100.0 + 0j]), "qpsk", noise_var=1e-3)
    assert np.max(np.abs(llrs)) <= 30.0


def test_zadoff_chu_perfect_autocorrelation():
    seq = zadoff_chu(25, 63)
    assert np.allclose(np.abs(seq), 1.0, atol=1e-12)
    # all cyclic autocorrelation sidelobes vanish
    for shift in range(1, 63):
        corr = np.vdot(seq, np.roll(seq, shift)) / 63
        assert abs(corr) < 1e-9
    with pytest.raises(ValueError):
        zadoff_chu(21, 63)


def test_zadoff_chu_even_length():
    seq = zadoff_chu(5, 128)
    assert np.allclose(np.abs(seq), 1.0, atol=1e-12)
    for shift in (1, 7, 64):
        corr = np.vdot(seq, np.roll(seq, shift)) / 128
        assert abs(corr) < 1e-9


def test_dmrs_comb_structure():
    grid = dmrs_sequence(384)
    assert np.all(grid[1::2] == 0)
    assert np.allclose(np.abs(grid[::2]), np.sqrt(2.0))
    assert np.mean(np.abs(grid) ** 2) == pytest.approx(1.0)
    # deterministic for a given seed
    assert np.array_equal(grid, dmrs_sequence(384))
    assert not np.array_equal(grid, dmrs_sequence(384, seed=99))


def test_ptrs_group_starts_spread():
    starts = ptrs_group_starts(3072, 8, 4)
    assert starts.size == 8
    assert np.all(np.diff(starts) == 384)
    assert starts[0] == 190


def test_kt_sequence_properties():
    cfg = KtConfig()
    head, tail = kt_sequence(cfg)
    assert head.size == 16 and tail.size == 112
    assert np.allclose(np.abs(np.concatenate([tail, head])), 1.0, atol=1e-12)
    h2, t2 = kt_sequence(cfg)
    assert np.array_equal(head, h2) and np.array_equal(tail, t2)

    zc = kt_sequence(KtConfig(content="zadoff-chu"))
    assert np.allclose(np.abs(zc[0]), 1.0)


def test_capacity_full_scale_reference():
    # frozen overheads at mu=6, 256 PRB: 32 PTRS samples for the spread kind,
    # 24 PTRS + 128 guard samples when the known head/tail is in
    num = numerology_from_mu(6, fft_size=4096, n_prb=256)
    m = 3072
    assert slot_capacity_bits(num, "dft-s-ofdm", "qpsk") == (m - 32) * 13 * 2
    assert slot_capacity_bits(num, "kt-dft-s-ofdm", "qpsk") == (m - 24 - 128) * 14 * 2
    assert slot_capacity_bits(num, "cp-ofdm", "qpsk") == (m - 64) * 13 * 2


def test_build_slot_resource_spread():
    num = numerology_from_mu(6, fft_size=512, n_prb=32)
    rng = np.random.default_rng(3)
    cap = slot_capacity_bits(num, "dft-s-ofdm", "16qam")
    res = build_slot_resource(num, "dft-s-ofdm", "16qam", _random_bits(rng, cap))
    assert res.n_symbols == 14
    assert res.m == 384
    assert res.dmrs_symbol == 2
    assert len(res.data_symbols) == 13
    assert res.ptrs_idx.size == 32
    assert res.data_idx.size == 384 - 32
    # pilots really are where they claim to be
    sym = res.data_symbols[0]
    assert np.array_equal(res.grid[sym, res.ptrs_idx], res.ptrs_vals)
    assert np.array_equal(res.grid[res.dmrs_symbol], dmrs_sequence(384))


def test_build_slot_resource_kt():
    num = numerology_from_mu(6, fft_size=512, n_prb=32)
    rng = np.random.default_rng(4)
    kt = KtConfig(head=2, tail=14)
    cap = slot_capacity_bits(num, "kt-dft-s-ofdm", "qpsk", kt=kt)
    res = build_slot_resource(num, "kt-dft-s-ofdm", "qpsk", _random_bits(rng, cap), kt=kt)
    assert res.n_symbols == 15
    assert res.cp_kind == "no-cp"
    assert res.ptrs_idx.size == 24
    # head/tail identical in every data symbol: they form the guard
    for sym in res.data_symbols:
        assert np.array_equal(res.grid[sym, :2], res.kt_head_vals)
        assert np.array_equal(res.grid[sym, -14:], res.kt_tail_vals)


def test_kt_zero_guard_degenerates_to_spread_structure():
    num = numerology_from_mu(6, fft_size=512, n_prb=32)
    rng = np.random.default_rng(5)
    kt = KtConfig(head=0, tail=0)
    cap = slot_capacity_bits(num, "kt-dft-s-ofdm", "qpsk", kt=kt)
    assert cap == slot_capacity_bits(num, "dft-s-ofdm", "qpsk") + 352 * 2  # extra symbol
    res = build_slot_resource(num, "kt-dft-s-ofdm", "qpsk", _random_bits(rng, cap), kt=kt)
    assert res.ptrs_idx.size == 32  # falls back to the 8-group pattern
    assert res.kt_head_idx.size == 0


def test_build_slot_resource_errors():
    num = numerology_from_mu(6, fft_size=512, n_prb=32)
    rng = np.random.default_rng(6)
    cap = slot_capacity_bits(num, "dft-s-ofdm", "qpsk")
    with pytest.raises(ValueError):
        build_slot_resource(num, "dft-s-ofdm", "qpsk", _random_bits(rng, cap - 2))
    with pytest.raises(ValueError):
        build_slot_resource(num, "dft-s-ofdm", "qpsk", _random_bits(rng, cap), kt=KtConfig())
    with pytest.raises(ValueError):
        # 128-sample guard collides with the mid PTRS groups at M=384
        kt = KtConfig(head=16, tail=112)
        capk = slot_capacity_bits(num, "kt-dft-s-ofdm", "qpsk", kt=kt)
        build_slot_resource(num, "kt-dft-s-ofdm", "qpsk", _random_bits(rng, capk), kt=kt)
    with pytest.raises(ValueError):
        build_slot_resource(num, "ofdm", "qpsk", _random_bits(rng, cap))


@pytest.mark.parametrize("kind", ["cp-ofdm", "dft-s-ofdm", "kt-dft-s-ofdm"])
@pytest.mark.parametrize("scheme", ["pi2bpsk-1plusD", "qpsk", "16qam", "64qam"])
def test_grid_roundtrip_all_kinds(kind, scheme):
    num = numerology_from_mu(4, fft_size=512, n_prb=32)
    rng = np.random.default_rng(8)
    kt = KtConfig(head=2, tail=14) if kind == "kt-dft-s-ofdm" else None
    cap = slot_capacity_bits(num, kind, scheme, kt=kt)
    bits = _random_bits(rng, cap)
    res = build_slot_resource(num, kind, scheme, bits, kt=kt)
    assert np.array_equal(extract_payload_bits(res, res.grid), bits)
