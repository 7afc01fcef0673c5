"""Scalable numerology: subcarrier spacing, CP sample counts, slot layouts.

Everything here is exact integer/rational arithmetic; float happens only in
the convenience accessors and the table formatter. The baseline is 15 kHz
spacing with a 4096-point FFT, scaled by powers of two up to 7.68 MHz.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

SCS_BASE_HZ = 15_000
MU_MIN = 0
MU_MAX = 9

# Nominal channel bandwidth as a fraction of the sample rate. At 15 kHz / 4096
# FFT the deployable channel is 50 MHz out of 61.44 MHz sampled, i.e. 625/768;
# the ratio is kept for every mu and FFT size.
CHANNEL_BW_FRACTION = Fraction(625, 768)

CP_KINDS = ("normal-cp", "extended-cp", "no-cp")


def scs_for_mu(mu: int) -> int:
    """Subcarrier spacing in Hz for numerology index ``mu``."""
    if not MU_MIN <= mu <= MU_MAX:
        raise ValueError(f"mu must be in {MU_MIN}..{MU_MAX}, got {mu}")
    return SCS_BASE_HZ * 2**mu


def cp_sample_counts(fft_size: int, mu: int = 0) -> tuple[int, int, int]:
    """Cyclic-prefix lengths (regular, special, extended) in samples.

    The regular CP is 9/128 of the FFT size and the extended CP one quarter,
    at every numerology. The special CP (first symbol of a half-subframe)
    carries a fixed-duration extension on top of the regular one, which in
    samples at the row's own rate grows as 2^mu * fft_size/128.
    """
    if fft_size % 128 != 0:
        raise ValueError(f"fft_size must be a multiple of 128, got {fft_size}")
    if not MU_MIN <= mu <= MU_MAX:
        raise ValueError(f"mu must be in {MU_MIN}..{MU_MAX}, got {mu}")
    unit = fft_size // 128
    return 9 * unit, (9 + 2**mu) * unit, fft_size // 4


@dataclass(frozen=True)
class Numerology:
    """One row of the scalable-numerology family.

    Time quantities are exposed as exact :class:`fractions.Fraction` seconds
    plus float convenience properties; sample counts are plain ints.
    """

    mu: int
    fft_size: int
    n_prb: int
    scs_hz: int
    sample_rate_hz: int
    cp_regular_samples: int
    cp_special_samples: int
    cp_extended_samples: int

    @property
    def n_subcarriers(self) -> int:
        return 12 * self.n_prb

    @property
    def symbol_duration_s(self) -> Fraction:
        return Fraction(1, self.scs_hz)

    @property
    def slot_duration_s(self) -> Fraction:
        """Nominal slot duration: 1 ms divided by 2^mu."""
        return Fraction(1, 1000 * 2**self.mu)

    @property
    def slots_per_subframe(self) -> int:
        return 2**self.mu

    @property
    def channel_bw_hz(self) -> Fraction:
        return self.sample_rate_hz * CHANNEL_BW_FRACTION

    @property
    def ocb_nominal_hz(self) -> int:
        """Bandwidth spanned by the allocated subcarriers."""
        return self.n_subcarriers * self.scs_hz

    @property
    def nominal_slot_samples(self) -> int:
        # slot_duration * sample_rate = 15 * fft_size exactly, for every mu
        n = self.slot_duration_s * self.sample_rate_hz
        assert n.denominator == 1
        return n.numerator

    def cp_us(self) -> tuple[float, float, float]:
        fs = self.sample_rate_hz
        return (
            self.cp_regular_samples / fs * 1e6,
            self.cp_special_samples / fs * 1e6,
            self.cp_extended_samples / fs * 1e6,
        )


def numerology_from_mu(mu: int, fft_size: int = 4096, n_prb: int = 256) -> Numerology:
    """Build the numerology for index ``mu``.

    Raises ValueError if the allocation does not fit the FFT or would exceed
    the nominal channel bandwidth.
    """
    scs = scs_for_mu(mu)
    if n_prb < 1:
        raise ValueError(f"n_prb must be positive, got {n_prb}")
    if 12 * n_prb > fft_size:
        raise ValueError(
            f"allocation of {n_prb} PRB ({12 * n_prb} subcarriers) exceeds fft_size {fft_size}"
        )
    reg, spec, ext = cp_sample_counts(fft_size, mu)
    num = Numerology(
        mu=mu,
        fft_size=fft_size,
        n_prb=n_prb,
        scs_hz=scs,
        sample_rate_hz=scs * fft_size,
        cp_regular_samples=reg,
        cp_special_samples=spec,
        cp_extended_samples=ext,
    )
    if num.ocb_nominal_hz > num.channel_bw_hz:
        max_prb = int(num.channel_bw_hz / (12 * scs))
        raise ValueError(
            f"{n_prb} PRB occupy {num.ocb_nominal_hz / 1e6:.2f} MHz, beyond the "
            f"{float(num.channel_bw_hz) / 1e6:.2f} MHz channel ({max_prb} PRB max)"
        )
    return num


@dataclass(frozen=True)
class SlotLayout:
    """Per-symbol CP and FFT-window sample counts for one slot.

    ``total_samples`` is the actual emitted count. For a normal-CP slot that
    opens a half-subframe at mu >= 2 it exceeds ``nominal_samples`` by
    (2^mu - 2) * fft/128; the deficit sits in the later all-regular slots of
    the same half-subframe, so the half-subframe closes exactly.
    """

    kind: str
    fft_size: int
    cp_samples: tuple[int, ...]
    nominal_samples: int

    @property
    def n_symbols(self) -> int:
        return len(self.cp_samples)

    @property
    def total_samples(self) -> int:
        return sum(self.cp_samples) + self.n_symbols * self.fft_size

    def symbol_starts(self) -> list[int]:
        """Sample index where each symbol's FFT window begins (after its CP)."""
        starts = []
        pos = 0
        for cp in self.cp_samples:
            starts.append(pos + cp)
            pos += cp + self.fft_size
        return starts


def slot_layout(num: Numerology, kind: str, first_in_half_subframe: bool = True) -> SlotLayout:
    """Symbol/CP layout of one slot for the given CP kind.

    normal-cp: 14 symbols, special CP on the first symbol of each 0.5 ms
    half-subframe (symbols 0 and 7 at mu=0, symbol 0 otherwise; simulations
    always start on a half-subframe boundary). extended-cp: 12 symbols.
    no-cp: 15 back-to-back FFT windows.
    """
    if kind not in CP_KINDS:
        raise ValueError(f"unknown CP kind {kind!r}, expected one of {CP_KINDS}")
    if kind == "no-cp":
        cps = (0,) * 15
    elif kind == "extended-cp":
        cps = (num.cp_extended_samples,) * 12
    else:
        cps = [num.cp_regular_samples] * 14
        if first_in_half_subframe:
            cps[0] = num.cp_special_samples
            if num.mu == 0:
                cps[7] = num.cp_special_samples
        cps = tuple(cps)
    return SlotLayout(
        kind=kind,
        fft_size=num.fft_size,
        cp_samples=cps,
        nominal_samples=num.nominal_slot_samples,
    )


TABLE_COLUMNS = (
    "mu",
    "scs_khz",
    "symbol_us",
    "sample_rate_msps",
    "cp_regular_us",
    "cp_special_us",
    "cp_extended_us",
    "cp_none_us",
    "slot_us",
    "channel_bw_ghz",
    "ocb_ghz",
)


def numerology_table(fft_size: int = 4096, n_prb: int = 264) -> list[dict]:
    """All ten numerology rows as dicts keyed by :data:`TABLE_COLUMNS`."""
    rows = []
    for mu in range(MU_MIN, MU_MAX + 1):
        num = numerology_from_mu(mu, fft_size=fft_size, n_prb=n_prb)
        reg_us, spec_us, ext_us = num.cp_us()
        rows.append(
            {
                "mu": mu,
                "scs_khz": num.scs_hz / 1e3,
                "symbol_us": float(num.symbol_duration_s) * 1e6,
                "sample_rate_msps": num.sample_rate_hz / 1e6,
                "cp_regular_us": reg_us,
                "cp_special_us": spec_us,
                "cp_extended_us": ext_us,
                "cp_none_us": 0.0,
                "slot_us": float(num.slot_duration_s) * 1e6,
                "channel_bw_ghz": float(num.channel_bw_hz) / 1e9,
                "ocb_ghz": num.ocb_nominal_hz / 1e9,
            }
        )
    return rows
