"""Transmit and channel impairments.

Power amplifier models (smooth-knee analytic and measured-table), an
oscillator phase-noise generator driven by a pole/zero PSD profile with
carrier-frequency scaling, a tapped-delay-line fading channel, and AWGN with
an occupied-bandwidth SNR convention.
"""
from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass
from importlib import resources as importlib_resources

import numpy as np

# ---------------------------------------------------------------- amplifiers


@dataclass(frozen=True)
class RappPa:
    """Smooth-saturation AM/AM model with optional AM/PM.

    amp_out = g*a / (1 + (g*a/sat)^(2p))^(1/(2p)); the phase term is
    phase_sat_deg * (a/a_knee)^q / (1 + (a/a_knee)^q) with a_knee = sat/g,
    zero by default.
    """

    gain: float = 1.0
    saturation: float = 1.0
    smoothness: float = 2.0
    phase_sat_deg: float = 0.0
    phase_q: float = 2.0

    @property
    def small_signal_gain(self) -> float:
        return self.gain

    @property
    def saturation_amplitude(self) -> float:
        return self.saturation

    def am_am(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        drive = self.gain * a / self.saturation
        return self.gain * a / (1.0 + drive ** (2 * self.smoothness)) ** (1.0 / (2 * self.smoothness))

    def am_pm_rad(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if self.phase_sat_deg == 0.0:
            return np.zeros_like(a)
        x = (self.gain * a / self.saturation) ** self.phase_q
        return np.deg2rad(self.phase_sat_deg) * x / (1.0 + x)


@dataclass(frozen=True)
class TablePa:
    """Measured-curve amplifier: sampled AM/AM and AM/PM, interpolated."""

    amp_in: np.ndarray
    amp_out: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amp_in, dtype=np.float64)
        if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0) or a[0] != 0.0:
            raise ValueError("amp_in must be a strictly increasing 1-D grid starting at 0")
        if np.asarray(self.amp_out).shape != a.shape or np.asarray(self.phase_deg).shape != a.shape:
            raise ValueError("amp_out and phase_deg must match amp_in")

    @property
    def small_signal_gain(self) -> float:
        return self.amp_out[1] / self.amp_in[1]

    @property
    def saturation_amplitude(self) -> float:
        return float(np.max(self.amp_out))

    def am_am(self, a: np.ndarray) -> np.ndarray:
        # flat extrapolation: the amplifier stays saturated past the table
        return np.interp(np.asarray(a, dtype=np.float64), self.amp_in, self.amp_out)

    def am_pm_rad(self, a: np.ndarray) -> np.ndarray:
        return np.deg2rad(np.interp(np.asarray(a, dtype=np.float64), self.amp_in, self.phase_deg))


def one_db_compression_input(pa, tol: float = 1e-6) -> float:
    """Input amplitude where the gain has compressed by exactly 1 dB.

    Bisection on the compression curve, which also covers table amplifiers
    where no closed form exists.
    """
    ssg = pa.small_signal_gain

    def compression_db(a):
        return 20.0 * np.log10(pa.am_am(a) / (ssg * a)) + 1.0

    lo = 1e-6
    if compression_db(lo) <= 0:
        raise ValueError("amplifier is already compressed more than 1 dB at tiny drive")
    hi = lo
    for _ in range(80):
        hi *= 2.0
        if compression_db(hi) < 0:
            break
    else:
        raise ValueError("no 1 dB compression point found; amplifier looks linear")
    while (hi - lo) > tol * hi:
        mid = 0.5 * (lo + hi)
        if compression_db(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def saturation_amplitude(pa) -> float:
    """Peak output amplitude the amplifier approaches under hard drive."""
    value = getattr(pa, "saturation_amplitude", None)
    if value is not None:
        return float(value)
    # ad-hoc model objects: probe well past the knee
    return float(pa.am_am(np.array([100.0 * one_db_compression_input(pa)]))[0])


def drive_gain(samples: np.ndarray, pa, obo_db: float) -> float:
    """Input gain that puts the mean output power ``obo_db`` below saturation.

    Solved by bisection on the sample amplitude distribution. Back-offs very
    close to 0 dB are capped at the hardest bracketed drive, since the
    average output can only reach saturation in the limit.
    """
    if obo_db < 0:
        raise ValueError("obo_db must be >= 0")
    samples = np.asarray(samples)
    rms = np.sqrt(np.mean(np.abs(samples) ** 2))
    if rms == 0:
        raise ValueError("cannot set a drive level on an all-zero signal")
    a = np.abs(samples) / rms
    p_target = saturation_amplitude(pa) ** 2 * 10.0 ** (-obo_db / 10.0)
    coarse = a[:: max(1, a.size // 16384)]

    def out_power(scale, amps):
        return np.mean(pa.am_am(scale * amps) ** 2)

    knee = one_db_compression_input(pa)
    lo = hi = knee
    while out_power(lo, coarse) > p_target:
        lo /= 2.0
    for _ in range(24):
        if out_power(hi, coarse) >= p_target:
            break
        hi *= 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if out_power(mid, coarse) < p_target:
            lo = mid
        else:
            hi = mid
    if coarse.size < a.size:
        # the decimated solve is a hair off; re-center and polish on all samples
        lo, hi = 0.98 * lo, 1.02 * hi
        for _ in range(16):
            mid = 0.5 * (lo + hi)
            if out_power(mid, a) < p_target:
                lo = mid
            else:
                hi = mid
    return 0.5 * (lo + hi) / rms


def drive_pa(samples: np.ndarray, pa, gain: float) -> np.ndarray:
    """Amplifier output for a fixed input gain (no per-call renormalizing)."""
    x = np.asarray(samples, dtype=np.complex128) * gain
    amp = np.abs(x)
    return pa.am_am(amp) * np.exp(1j * (np.angle(x) + pa.am_pm_rad(amp)))


def apply_pa(samples: np.ndarray, pa, obo_db: float) -> np.ndarray:
    """Drive the amplifier at the given output back-off from saturation.

    ``obo_db`` >= 0 sets the mean output power to the saturation power
    reduced by that many dB; the input gain that lands there is solved per
    call. Output is the raw amplifier output (no renormalization). Keep the
    gain from :func:`drive_gain` instead when a whole run must share one
    operating point.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if not samples.size or not np.any(samples):
        if obo_db < 0:
            raise ValueError("obo_db must be >= 0")
        return samples.copy()
    return drive_pa(samples, pa, drive_gain(samples, pa, obo_db))


# --------------------------------------------------------------- phase noise


@dataclass(frozen=True)
class PhaseNoiseModel:
    """Oscillator PSD profile in dBc/Hz, referenced to ``ref_carrier_hz``.

    The shape is plateau + zeros - poles (each contributing
    10*log10(1 + (f/corner)^slope)), with an additive flat floor. Retuning to
    another carrier shifts the whole profile by 20*log10(fc/ref) plus the
    design margin.
    """

    ref_carrier_hz: float = 100e9
    plateau_dbchz: float = -72.0
    poles_hz: tuple = (4e5, 5e7)
    pole_slopes: tuple = (2.0, 1.0)
    zeros_hz: tuple = ()
    zero_slopes: tuple = ()
    floor_dbchz: float = -128.0
    design_margin_db: float = 3.0

    def psd_dbchz(self, freq_hz: np.ndarray, carrier_hz: float) -> np.ndarray:
        f = np.asarray(freq_hz, dtype=np.float64)
        if np.any(f <= 0):
            raise ValueError("PSD is defined for positive frequency offsets")
        shape = np.full(f.shape, self.plateau_dbchz)
        for corner, slope in zip(self.zeros_hz, self.zero_slopes):
            shape = shape + 10.0 * np.log10(1.0 + (f / corner) ** slope)
        for corner, slope in zip(self.poles_hz, self.pole_slopes):
            shape = shape - 10.0 * np.log10(1.0 + (f / corner) ** slope)
        # additive floor keeps the profile smooth and nonincreasing
        total = 10.0 * np.log10(10.0 ** (shape / 10.0) + 10.0 ** (self.floor_dbchz / 10.0))
        offset = 20.0 * np.log10(carrier_hz / self.ref_carrier_hz) + self.design_margin_db
        return total + offset


def generate_phase_noise(
    n: int,
    sample_rate_hz: float,
    model: PhaseNoiseModel,
    carrier_hz: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Phase sample path (radians) whose PSD follows the model at ``carrier_hz``.

    White Gaussian spectral coefficients are shaped by the one-sided PSD
    (2 * 10^(L/10) rad^2/Hz) and transformed back; the DC bin is zeroed, so
    offsets below fs/n are not represented (a warning flags profiles whose
    lowest corner falls below that resolution).
    """
    if n < 8 or n % 2:
        raise ValueError("n must be an even number of at least 8 samples")
    df = sample_rate_hz / n
    corners = tuple(model.poles_hz) + tuple(model.zeros_hz)
    if corners and min(corners) < df:
        warnings.warn(
            f"frequency resolution {df:.3g} Hz cannot represent the lowest "
            f"corner at {min(corners):.3g} Hz; profile is clamped below it",
            stacklevel=2,
        )
    k = np.arange(1, n // 2 + 1)
    s1 = 2.0 * 10.0 ** (model.psd_dbchz(k * df, carrier_hz) / 10.0)  # rad^2/Hz one-sided
    spec = np.zeros(n // 2 + 1, dtype=np.complex128)
    g = rng.standard_normal(n // 2 - 1) + 1j * rng.standard_normal(n // 2 - 1)
    spec[1 : n // 2] = np.sqrt(s1[: -1] * df / 2.0) * g / np.sqrt(2.0)
    spec[n // 2] = np.sqrt(s1[-1] * df) * rng.standard_normal()
    return np.fft.irfft(spec * n, n)


def apply_phase_noise(samples: np.ndarray, phase: np.ndarray) -> np.ndarray:
    if samples.shape != phase.shape:
        raise ValueError("phase path must match the signal length")
    return samples * np.exp(1j * phase)


# -------------------------------------------------------------------- fading

# 23-tap TDL-A power-delay profile (normalized delays, powers in dB)
TDL_A_DELAYS_NORM = np.array([
    0.0000, 0.3819, 0.4025, 0.5868, 0.4610, 0.5375, 0.6708, 0.5750,
    0.7618, 1.5375, 1.8978, 2.2242, 2.1718, 2.4942, 2.5119, 3.0582,
    4.0810, 4.4579, 4.5695, 4.7966, 5.0066, 5.3043, 9.6586,
])
TDL_A_POWERS_DB = np.array([
    -13.4, 0.0, -2.2, -4.0, -6.0, -8.2, -9.9, -10.5, -7.5, -15.9,
    -6.6, -16.7, -12.4, -15.2, -10.8, -11.3, -12.7, -16.2, -18.3,
    -18.9, -16.6, -19.9, -29.7,
])


@dataclass(frozen=True)
class TdlChannelConfig:
    profile: str = "tdl-a"
    rms_delay_spread_s: float = 5e-9
    doppler_hz: float = 0.0
    n_sinusoids: int = 16


def _profile(cfg: TdlChannelConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.profile == "tdl-a":
        delays_norm, powers_db = TDL_A_DELAYS_NORM, TDL_A_POWERS_DB
    elif cfg.profile == "single-tap":
        delays_norm, powers_db = np.array([0.0]), np.array([0.0])
    else:
        raise ValueError(f"unknown channel profile {cfg.profile!r}")
    powers = 10.0 ** (powers_db / 10.0)
    powers = powers / powers.sum()
    return delays_norm, powers


def scaled_tap_delays(cfg: TdlChannelConfig) -> np.ndarray:
    """Tap delays in seconds, rescaled so the RMS delay spread is exact."""
    delays_norm, powers = _profile(cfg)
    if delays_norm.size == 1:
        return delays_norm.copy()
    mean = np.sum(powers * delays_norm)
    rms = np.sqrt(np.sum(powers * delays_norm**2) - mean**2)
    return delays_norm * (cfg.rms_delay_spread_s / rms)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the fading channel, static over the block it was made for."""

    delays_samples: np.ndarray
    gains: np.ndarray
    sample_rate_hz: float

    def apply(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.complex128)
        out = np.zeros_like(samples)
        for d, g in zip(self.delays_samples, self.gains):
            if d == 0:
                out += g * samples
            else:
                out[d:] += g * samples[:-d]
        return out

    def frequency_response(self, bin_indices: np.ndarray, n_bins: int) -> np.ndarray:
        k = np.asarray(bin_indices)
        phase = -2j * np.pi * np.outer(k, self.delays_samples) / n_bins
        return np.exp(phase) @ self.gains


def realize_channel(
    cfg: TdlChannelConfig,
    sample_rate_hz: float,
    rng: np.random.Generator,
    time_s: float = 0.0,
) -> ChannelRealization:
    """Draw tap gains (Rayleigh, classic Doppler spectrum) at one instant.

    Each tap is a sum of ``n_sinusoids`` equal-power rays with random arrival
    angles, evaluated at ``time_s``; with zero Doppler the time drops out and
    the draw is plain Rayleigh. Delays are rounded to the sample grid.
    """
    delays_s = scaled_tap_delays(cfg)
    _, powers = _profile(cfg)
    delays_samples = np.round(delays_s * sample_rate_hz).astype(int)
    ns = cfg.n_sinusoids
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(powers.size, ns))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(powers.size, ns))
    arg = 2.0 * np.pi * cfg.doppler_hz * np.cos(angles) * time_s + phases
    gains = np.sqrt(powers / ns) * np.exp(1j * arg).sum(axis=1)
    return ChannelRealization(
        delays_samples=delays_samples, gains=gains, sample_rate_hz=sample_rate_hz
    )


def apply_channel(samples: np.ndarray, realization: ChannelRealization) -> np.ndarray:
    return realization.apply(samples)


# --------------------------------------------------------------------- noise


def apply_awgn(
    samples: np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    bandwidth_fraction: float = 1.0,
) -> tuple[np.ndarray, float]:
    """Add complex white noise; returns (noisy samples, noise variance).

    ``bandwidth_fraction`` is the ratio of occupied to sampled bandwidth: the
    stated SNR then holds per allocated subcarrier rather than over the full
    sampled band (pass 1 for a plain full-band SNR).
    """
    if not 0 < bandwidth_fraction <= 1:
        raise ValueError("bandwidth_fraction must be in (0, 1]")
    samples = np.asarray(samples, dtype=np.complex128)
    p_sig = np.mean(np.abs(samples) ** 2)
    nvar = p_sig / 10.0 ** (snr_db / 10.0) / bandwidth_fraction
    noise = np.sqrt(nvar / 2.0) * (
        rng.standard_normal(samples.size) + 1j * rng.standard_normal(samples.size)
    )
    return samples + noise, nvar


# ------------------------------------------------------------- config files


def _read_section(path, packaged_name: str, section: str) -> dict:
    parser = configparser.ConfigParser()
    if path is None:
        text = importlib_resources.files("subthzlink.data").joinpath(packaged_name).read_text()
        parser.read_string(text)
    else:
        with open(path) as fh:
            parser.read_file(fh)
    if section not in parser:
        raise ValueError(f"missing [{section}] section")
    return dict(parser[section])


def _float_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(tok) for tok in text.split(","))


def _take(table: dict, known: dict) -> dict:
    """Pull known keys out of a raw section, rejecting anything else."""
    out = {}
    for key, conv in known.items():
        if key in table:
            out[key] = conv(table.pop(key))
    if table:
        raise ValueError(f"unknown key {sorted(table)[0]!r} in config")
    return out


def load_pa_config(path=None):
    """Amplifier from a key-value file; the packaged file when path is None.

    ``kind = rapp`` takes the RappPa fields; ``kind = table`` takes comma
    lists amp_in / amp_out / phase_deg.
    """
    raw = _read_section(path, "pa_rapp.cfg", "pa")
    kind = raw.pop("kind", "rapp").strip().lower()
    if kind == "rapp":
        vals = _take(raw, {
            "gain": float, "saturation": float, "smoothness": float,
            "phase_sat_deg": float, "phase_q": float,
        })
        return RappPa(**vals)
    if kind == "table":
        vals = _take(raw, {
            "amp_in": _float_list, "amp_out": _float_list, "phase_deg": _float_list,
        })
        return TablePa(
            amp_in=np.asarray(vals["amp_in"]),
            amp_out=np.asarray(vals["amp_out"]),
            phase_deg=np.asarray(vals["phase_deg"]),
        )
    raise ValueError(f"unknown pa kind {kind!r}")


def load_pn_config(path=None) -> PhaseNoiseModel:
    """Oscillator profile from a key-value file (packaged default when None)."""
    raw = _read_section(path, "pn_default.cfg", "pn")
    vals = _take(raw, {
        "ref_carrier_hz": float, "plateau_dbchz": float,
        "poles_hz": _float_list, "pole_slopes": _float_list,
        "zeros_hz": _float_list, "zero_slopes": _float_list,
        "floor_dbchz": float, "design_margin_db": float,
    })
    return PhaseNoiseModel(**vals)


def load_channel_config(path=None) -> TdlChannelConfig:
    """Fading profile from a key-value file; library defaults when None."""
    if path is None:
        return TdlChannelConfig()
    raw = _read_section(path, "", "channel")
    vals = _take(raw, {
        "profile": str, "rms_delay_spread_s": float,
        "doppler_hz": float, "n_sinusoids": int,
    })
    return TdlChannelConfig(**vals)
