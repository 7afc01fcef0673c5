"""Coded BLER sweeps over the impaired link, and the throughput/range budget.

One transport block per slot: payload bits are LDPC-encoded to fill the
slot exactly, carried through amplifier / phase-noise / fading / AWGN, and
recovered by the pilot-based receiver. Runs are deterministic for a given
seed regardless of worker count, and two configurations that differ only
in waveform kind consume identical impairment realizations, so their BLER
curves can be compared point by point.
"""
from __future__ import annotations

import math
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .coding import decode_block, encode_block, fit_code, load_base_graph
from .compliance import find_min_obo, load_rf_limits
from .impairments import (
    PhaseNoiseModel,
    TdlChannelConfig,
    apply_channel,
    apply_phase_noise,
    drive_gain,
    drive_pa,
    generate_phase_noise,
    realize_channel,
)
from .mapping import KtConfig, build_slot_resource, slot_capacity_bits, with_payload
from .numerology import numerology_from_mu, slot_layout
from .receiver import receive_slot
from .seeds import (
    DOMAIN_CHANNEL,
    DOMAIN_NOISE,
    DOMAIN_PAYLOAD,
    DOMAIN_PHASE_NOISE,
    stream,
)
from .waveform import modulate

CHUNK_BLOCKS = 25


@dataclass(frozen=True)
class LinkConfig:
    """Everything a BLER sweep needs, in plain picklable fields."""

    kind: str = "cp-ofdm"
    mu: int = 6
    fft_size: int = 4096
    n_prb: int = 256
    modulation: str = "qpsk"
    rate: str = "1/2"
    carrier_hz: float = 140e9
    kt_head: int = 16
    kt_tail: int = 112
    oversample: int = 1
    pa: object | None = None
    obo_db: float | None = None
    include_obo_in_snr: bool = False
    pn: PhaseNoiseModel | None = None
    channel: TdlChannelConfig | None = None
    snr_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    target_bler: float = 0.1
    min_blocks: int = 100
    max_blocks: int = 2000
    min_errors: int = 100
    seed: int = 1

    def kt_config(self) -> KtConfig | None:
        if self.kind != "kt-dft-s-ofdm":
            return None
        return KtConfig(head=self.kt_head, tail=self.kt_tail)


@dataclass(frozen=True)
class BlerPoint:
    snr_db: float
    bler: float
    blocks: int
    errors: int
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class BlerResult:
    config: LinkConfig
    obo_db: float
    points: tuple[BlerPoint, ...]
    snr_at_target: float | None
    unbounded: bool


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Binomial confidence interval that stays sane near 0 and 1."""
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def interpolate_snr_at(points, target: float) -> tuple[float | None, bool]:
    """SNR where the curve crosses ``target``, log-linear in BLER.

    Zero-error points are clamped to half an error before taking logs.
    Returns (None, True) when the curve never reaches the target, and the
    first grid point when it starts below it already.
    """
    snrs = np.array([p.snr_db for p in points])
    blers = np.array([max(p.bler, 0.5 / max(p.blocks, 1)) for p in points])
    if blers.min() > target:
        return None, True
    if blers[0] <= target:
        return float(snrs[0]), False
    for i in range(len(points) - 1):
        if blers[i] > target >= blers[i + 1]:
            lo, hi = math.log10(blers[i]), math.log10(blers[i + 1])
            frac = (math.log10(target) - lo) / (hi - lo)
            return float(snrs[i] + frac * (snrs[i + 1] - snrs[i])), False
    return None, True


# ---------------------------------------------------------------- block chain


def segment_sizes(capacity_bits: int, rate: str) -> list[tuple[int, int]]:
    """(k_info, n_tx) per code block filling the slot capacity exactly.

    A slot can outgrow the largest lifting size, so the payload is split
    into near-equal code blocks; the slot is in error when any one fails.
    """
    g = load_base_graph(rate)
    n_max = (g.kb + g.mb) * max(g.z_supported)
    n_cb = -(-capacity_bits // n_max)
    base, extra = divmod(capacity_bits, n_cb)
    r = Fraction(rate)
    out = []
    for i in range(n_cb):
        n_tx = base + (1 if i < extra else 0)
        out.append((int(round(n_tx * r)), n_tx))
    return out


_CTX_CACHE: dict[bytes, tuple] = {}


def _context(cfg: LinkConfig):
    """Per-process cache of everything rebuildable from the config."""
    key = pickle.dumps(cfg)
    if key not in _CTX_CACHE:
        num = numerology_from_mu(cfg.mu, fft_size=cfg.fft_size, n_prb=cfg.n_prb)
        kt = cfg.kt_config()
        cap = slot_capacity_bits(num, cfg.kind, cfg.modulation, kt=kt)
        codes = [fit_code(k, n, cfg.rate) for k, n in segment_sizes(cap, cfg.rate)]
        template = build_slot_resource(
            num, cfg.kind, cfg.modulation, np.zeros(cap, dtype=np.int64), kt=kt)
        layout = slot_layout(num, template.cp_kind)
        # Impairment vectors are drawn at the longest slot length any CP
        # kind emits, so kinds sharing a seed see the same realizations.
        longest = max(15 * num.fft_size,
                      slot_layout(num, "normal-cp").total_samples)
        draw_len = longest * cfg.oversample
        draw_len += draw_len % 2
        if template.cp_kind == "no-cp":
            reg_cp = 0
        else:
            reg_cp = layout.cp_samples[1] * cfg.oversample
        _CTX_CACHE[key] = (num, codes, template, draw_len, reg_cp)
        if len(_CTX_CACHE) > 8:
            _CTX_CACHE.pop(next(iter(_CTX_CACHE)))
    return _CTX_CACHE[key]


def _encode_slot(codes, rng) -> tuple[list[np.ndarray], np.ndarray]:
    """Draw fresh info bits and encode them code block by code block."""
    infos, coded = [], []
    for code in codes:
        info = rng.integers(0, 2, size=code.k_info)
        infos.append(info)
        coded.append(encode_block(code, info[None, :])[0])
    return infos, np.concatenate(coded)


def _run_blocks(cfg: LinkConfig, pa_gain: float, p_ref: float,
                point: int, snr_db: float, block_lo: int, block_hi: int) -> int:
    """Simulate blocks [block_lo, block_hi); returns the error count."""
    num, codes, template, draw_len, reg_cp = _context(cfg)
    os_ = cfg.oversample
    fs = num.sample_rate_hz * os_
    bw_frac = template.m / (num.fft_size * os_)
    snr_lin = 10.0 ** (snr_db / 10.0)
    nvar_time = p_ref / (snr_lin * bw_frac)
    nvar_grid = p_ref / snr_lin
    errors = 0
    for block in range(block_lo, block_hi):
        infos, coded = _encode_slot(
            codes, stream(cfg.seed, DOMAIN_PAYLOAD, point, block))
        res = with_payload(template, coded)
        x = modulate(res, oversample=os_).samples
        if cfg.pa is not None:
            x = drive_pa(x, cfg.pa, pa_gain)
        if cfg.pn is not None:
            phase = generate_phase_noise(
                draw_len, fs, cfg.pn, cfg.carrier_hz,
                stream(cfg.seed, DOMAIN_PHASE_NOISE, point, block))
            x = apply_phase_noise(x, phase[: x.size])
        timing = 0
        if cfg.channel is not None:
            real = realize_channel(
                cfg.channel, fs,
                stream(cfg.seed, DOMAIN_CHANNEL, point, block))
            x = apply_channel(x, real)
            spread_w = int(real.delays_samples.max())
            if reg_cp:
                timing = max(0, min(reg_cp // 2, reg_cp - spread_w - 1))
        rng_n = stream(cfg.seed, DOMAIN_NOISE, point, block)
        noise = rng_n.standard_normal(draw_len) + 1j * rng_n.standard_normal(draw_len)
        x = x + noise[: x.size] * math.sqrt(nvar_time / 2.0)
        llrs, _ = receive_slot(
            res, x, oversample=os_, timing_offset=timing,
            noise_var_known=nvar_grid)
        pos = 0
        for code, info in zip(codes, infos):
            decoded, _, _ = decode_block(code, llrs[None, pos:pos + code.n_tx])
            pos += code.n_tx
            if (decoded[0] != info).any():
                errors += 1
                break
    return errors


def _chunk_task(args):
    return _run_blocks(*args)


# -------------------------------------------------------------------- sweeps

def pa_operating_point(cfg: LinkConfig, obo_db: float) -> tuple[float, float]:
    """(fixed input gain, mean output power) set on the block-0 slot.

    The whole sweep shares one amplifier drive, like hardware would; the
    output power doubles as the SNR reference so the stated SNR holds per
    allocated subcarrier at the amplifier output.
    """
    if cfg.pa is None:
        return 1.0, 1.0
    num, codes, template, _, _ = _context(cfg)
    _, coded = _encode_slot(codes, stream(cfg.seed, DOMAIN_PAYLOAD, 0, 0))
    res = with_payload(template, coded)
    clean = modulate(res, oversample=cfg.oversample).samples
    gain = drive_gain(clean, cfg.pa, obo_db)
    out = drive_pa(clean, cfg.pa, gain)
    return gain, float(np.mean(np.abs(out) ** 2))


def resolve_obo(cfg: LinkConfig, n_slots: int = 8) -> float:
    """Back-off used by the sweep: explicit, searched, or 0 without a PA."""
    if cfg.pa is None:
        return 0.0
    if cfg.obo_db is not None:
        return float(cfg.obo_db)
    num, codes, template, _, _ = _context(cfg)
    _, coded = _encode_slot(codes, stream(cfg.seed, DOMAIN_PAYLOAD, 0, 0))
    res = with_payload(template, coded)
    obo, _ = find_min_obo(res, cfg.pa, load_rf_limits(),
                          oversample=max(4, cfg.oversample), n_slots=n_slots)
    return obo


def run_bler(cfg: LinkConfig, threads: int = 1) -> BlerResult:
    """Monte-Carlo BLER over the configured SNR grid.

    Each point stops at ``min_errors`` block errors (but not before
    ``min_blocks``) or at ``max_blocks``. Blocks are simulated in fixed
    chunks consumed in order, so the result is identical for any worker
    count. With ``include_obo_in_snr`` the reported SNR axis is shifted by
    the amplifier back-off, putting waveforms with different envelopes on
    a common transmit-power scale.
    """
    if list(cfg.snr_db) != sorted(cfg.snr_db):
        raise ValueError("snr_db grid must be ascending")
    obo = resolve_obo(cfg)
    pa_gain, p_ref = pa_operating_point(cfg, obo)
    shift = obo if cfg.include_obo_in_snr else 0.0

    starts = list(range(0, cfg.max_blocks, CHUNK_BLOCKS))
    chunks = [(lo, min(lo + CHUNK_BLOCKS, cfg.max_blocks)) for lo in starts]

    points = []
    for point, snr_db in enumerate(cfg.snr_db):
        errors = 0
        blocks = 0
        if threads <= 1:
            for lo, hi in chunks:
                errors += _run_blocks(cfg, pa_gain, p_ref, point, snr_db, lo, hi)
                blocks = hi
                if errors >= cfg.min_errors and blocks >= cfg.min_blocks:
                    break
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                window = 2 * threads
                pending = {}
                submitted = 0
                done_idx = 0
                while done_idx < len(chunks):
                    while submitted < len(chunks) and len(pending) < window:
                        lo, hi = chunks[submitted]
                        pending[submitted] = pool.submit(
                            _chunk_task, (cfg, pa_gain, p_ref, point, snr_db, lo, hi))
                        submitted += 1
                    errors += pending.pop(done_idx).result()
                    blocks = chunks[done_idx][1]
                    done_idx += 1
                    if errors >= cfg.min_errors and blocks >= cfg.min_blocks:
                        for fut in pending.values():
                            fut.cancel()
                        break
        lo_ci, hi_ci = wilson_interval(errors, blocks)
        points.append(BlerPoint(
            snr_db=snr_db + shift, bler=errors / blocks, blocks=blocks,
            errors=errors, ci_low=lo_ci, ci_high=hi_ci))

    snr_at, unbounded = interpolate_snr_at(points, cfg.target_bler)
    return BlerResult(config=cfg, obo_db=obo, points=tuple(points),
                      snr_at_target=snr_at, unbounded=unbounded)


# ------------------------------------------------------------ link budget

RX_GAIN_DB = 10.0 * math.log10(8.0) + 5.0
NOISE_FLOOR_DBM_HZ = -174.0


def umi_los_pathloss_db(distance_m: float, carrier_hz: float) -> float:
    """Street-level line-of-sight path loss, valid from one metre out."""
    if distance_m < 1.0:
        raise ValueError("distance_m must be >= 1")
    return (32.4 + 21.0 * math.log10(distance_m)
            + 20.0 * math.log10(carrier_hz / 1e9))


def slot_throughput_bps(num, kind: str, scheme: str, rate: str,
                        kt: KtConfig | None = None) -> float:
    """Information rate of back-to-back slots at the nominal slot length."""
    cap = slot_capacity_bits(num, kind, scheme, kt=kt)
    k_info = int(round(cap * Fraction(rate)))
    return k_info / float(num.slot_duration_s)


@dataclass(frozen=True)
class McsEntry:
    """One candidate operating point for the range projection."""

    name: str
    kind: str
    mu: int
    modulation: str
    rate: str
    required_snr_db: float
    kt_head: int = 16
    kt_tail: int = 112

    def kt_config(self) -> KtConfig | None:
        if self.kind != "kt-dft-s-ofdm":
            return None
        return KtConfig(head=self.kt_head, tail=self.kt_tail)


@dataclass(frozen=True)
class BudgetConfig:
    carrier_hz: float = 140e9
    eirp_dbm: float = 60.0
    rx_gain_db: float = RX_GAIN_DB
    noise_figure_db: float = 10.0
    fft_size: int = 4096
    n_prb: int = 256
    distances_m: tuple[float, ...] = tuple(float(d) for d in range(25, 501, 25))
    mcs: tuple[McsEntry, ...] = ()


def received_snr_db(budget: BudgetConfig, distance_m: float, mu: int) -> float:
    """Per-subcarrier SNR at the receiver for the numerology's bandwidth."""
    num = numerology_from_mu(mu, fft_size=budget.fft_size, n_prb=budget.n_prb)
    noise_dbm = (NOISE_FLOOR_DBM_HZ + 10.0 * math.log10(num.ocb_nominal_hz)
                 + budget.noise_figure_db)
    return (budget.eirp_dbm + budget.rx_gain_db
            - umi_los_pathloss_db(distance_m, budget.carrier_hz) - noise_dbm)


def rate_vs_distance(budget: BudgetConfig) -> list[tuple[float, float, str]]:
    """(distance, best achievable rate, MCS name) rows, one per distance.

    At each distance every entry whose required SNR is met competes and the
    highest throughput wins; an empty name marks the link dropping out.
    """
    rows = []
    for d in budget.distances_m:
        best_rate, best_name = 0.0, ""
        for entry in budget.mcs:
            if received_snr_db(budget, d, entry.mu) < entry.required_snr_db:
                continue
            num = numerology_from_mu(
                entry.mu, fft_size=budget.fft_size, n_prb=budget.n_prb)
            rate = slot_throughput_bps(
                num, entry.kind, entry.modulation, entry.rate,
                kt=entry.kt_config())
            if rate > best_rate:
                best_rate, best_name = rate, entry.name
        rows.append((float(d), best_rate, best_name))
    return rows
