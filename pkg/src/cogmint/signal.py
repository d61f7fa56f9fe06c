"""Geometry-based stochastic channel model and received-signal synthesis.

The received baseband signal is a sum of deterministic specular paths (one
per virtual anchor), diffuse multipath (DM) realized as uncorrelated complex
Gaussian taps shaped by a power delay profile, and white Gaussian noise.  A
narrowband DM interferer is modeled by band-limiting the diffuse taps around
its own carrier, so its impact on a measurement depends on the spectral
overlap with the selected carrier frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import SPEED_OF_LIGHT, Point2, VirtualAnchor

RRC_ROLLOFF = 0.6
PULSE_HALF_WIDTH = 8.0  # pulse truncated at +/- 8 Tp
REFERENCE_DISTANCE = 1.0  # m, path-loss reference


@dataclass(frozen=True)
class WaveformParams:
    """Transmit pulse duration and carrier frequency pair."""

    pulse_duration: float  # Tp, seconds
    carrier_hz: float

    def __post_init__(self):
        if self.pulse_duration <= 0:
            raise ValueError("pulse duration must be positive")
        if self.carrier_hz <= 0:
            raise ValueError("carrier frequency must be positive")


@dataclass(frozen=True)
class Pulse:
    """Unit-energy sampled baseband pulse with its rms bandwidth."""

    samples: np.ndarray
    sample_rate: float
    duration: float  # effective pulse duration Tp
    rms_bandwidth: float  # beta, Hz


@dataclass(frozen=True)
class DmProfile:
    """Double-exponential diffuse-multipath power delay profile.

    ``omega1`` is the total DM energy, ``gamma1`` the decay constant,
    ``gamma_rise`` the rise constant and ``chi`` the onset softness.  The
    ``carrier_hz``/``bandwidth_hz`` pair places the DM process in frequency.
    """

    omega1: float
    gamma1: float
    gamma_rise: float
    chi: float
    onset: float
    carrier_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        if self.omega1 < 0:
            raise ValueError("omega1 must be >= 0")
        if self.gamma1 <= 0 or self.gamma_rise <= 0:
            raise ValueError("decay constants must be positive")
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError("chi must be in [0, 1]")


@dataclass
class ChannelRealization:
    """Ground-truth draw of one channel: specular paths, DM taps, noise PSD."""

    mpcs: list  # (delay_s, complex amplitude) per VA
    dm_taps: Optional[np.ndarray]  # complex taps on the delay grid
    noise_psd: float


@dataclass(frozen=True)
class ReceivedSignal:
    samples: np.ndarray
    sample_rate: float
    duration: float
    waveform: WaveformParams


def _rrc(t: np.ndarray, tp: float, rolloff: float = RRC_ROLLOFF) -> np.ndarray:
    """Root-raised-cosine impulse response with symbol time ``tp``."""
    t = np.asarray(t, dtype=float) / tp
    out = np.empty_like(t)
    eps = 1e-12
    singular = np.abs(np.abs(t) - 1.0 / (4.0 * rolloff)) < eps
    zero = np.abs(t) < eps
    regular = ~(singular | zero)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - rolloff)) + 4 * rolloff * tr * np.cos(
        np.pi * tr * (1 + rolloff)
    )
    den = np.pi * tr * (1 - (4 * rolloff * tr) ** 2)
    out[regular] = num / den
    out[zero] = 1.0 + rolloff * (4.0 / np.pi - 1.0)
    out[singular] = (rolloff / np.sqrt(2.0)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * rolloff))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * rolloff))
    )
    return out


def _pulse_grid(tp: float, sample_rate: float) -> np.ndarray:
    half = int(round(PULSE_HALF_WIDTH * tp * sample_rate))
    return (np.arange(2 * half + 1) - half) / sample_rate


def _pulse_scale(tp: float, sample_rate: float) -> float:
    """Normalization making the truncated sampled pulse unit-energy."""
    raw = _rrc(_pulse_grid(tp, sample_rate), tp)
    energy = np.sum(np.abs(raw) ** 2) / sample_rate
    return 1.0 / math.sqrt(energy)


def make_pulse(w: WaveformParams, sample_rate: float) -> Pulse:
    """Build the unit-energy baseband pulse for ``w`` on a sample grid."""
    if sample_rate < 4.0 / w.pulse_duration:
        raise ValueError(
            f"sample rate {sample_rate:.3g} Hz undersamples a "
            f"{w.pulse_duration:.3g} s pulse (need >= 4/Tp)"
        )
    t = _pulse_grid(w.pulse_duration, sample_rate)
    samples = _rrc(t, w.pulse_duration) * _pulse_scale(w.pulse_duration, sample_rate)
    samples = samples.astype(np.complex128)
    pulse = Pulse(samples, sample_rate, w.pulse_duration, 0.0)
    beta = effective_bandwidth(pulse)
    return Pulse(samples, sample_rate, w.pulse_duration, beta)


def effective_bandwidth(pulse: Pulse) -> float:
    """Root-mean-square bandwidth of the pulse spectrum."""
    spec2 = np.abs(np.fft.fft(pulse.samples)) ** 2
    total = spec2.sum()
    if total <= 0.0:
        raise ValueError("pulse has zero energy")
    f = np.fft.fftfreq(len(pulse.samples), d=1.0 / pulse.sample_rate)
    return float(np.sqrt((f ** 2 * spec2).sum() / total))


def dm_pdp(tau, prof: DmProfile):
    """Power delay profile S(tau) of the diffuse multipath, W per second."""
    tau = np.asarray(tau, dtype=float)
    dt = tau - prof.onset
    active = dt >= 0.0
    val = np.zeros_like(dt)
    d = dt[active]
    val[active] = (
        prof.omega1
        / (prof.gamma1 + prof.gamma_rise)
        * (1.0 - prof.chi * np.exp(-d / prof.gamma_rise))
        * np.exp(-d / prof.gamma1)
    )
    return val if val.ndim else float(val)


@lru_cache(maxsize=4096)
def _gain_coeffs(anchor_id: int, va_index: int, scenario_seed: int):
    rng = np.random.default_rng(
        np.random.SeedSequence([int(scenario_seed), int(anchor_id), int(va_index)])
    )
    return (
        rng.uniform(5e8, 2.5e9, size=3),
        rng.uniform(0.0, 2 * np.pi, size=3),
        rng.uniform(5e8, 2.5e9, size=3),
        rng.uniform(0.0, 2 * np.pi, size=3),
    )


def va_frequency_gain(va_key: Tuple[int, int], fc, scenario_seed: int):
    """Deterministic per-VA complex gain as a smooth function of carrier.

    Three random-phase sinusoids in frequency (periods >= 500 MHz) fixed by
    ``scenario_seed`` and the VA key; magnitude stays within [0.25, 1].
    """
    anchor_id, va_index = va_key
    periods, phases, phase_periods, phase_offsets = _gain_coeffs(
        int(anchor_id), int(va_index), int(scenario_seed)
    )
    fc = np.asarray(fc, dtype=float)
    comps = np.cos(2 * np.pi * fc[..., None] / periods + phases)
    mag = 0.25 + 0.75 * (comps.sum(axis=-1) + 3.0) / 6.0
    ang = np.sin(2 * np.pi * fc[..., None] / phase_periods + phase_offsets).sum(axis=-1)
    out = mag * np.exp(1j * ang)
    return out if out.ndim else complex(out)


def band_overlap_fraction(w: WaveformParams, prof: DmProfile) -> float:
    """Fraction of the receive band [fc +/- 1/(2 Tp)] covered by the DM band."""
    rx_bw = 1.0 / w.pulse_duration
    lo = max(w.carrier_hz - rx_bw / 2, prof.carrier_hz - prof.bandwidth_hz / 2)
    hi = min(w.carrier_hz + rx_bw / 2, prof.carrier_hz + prof.bandwidth_hz / 2)
    return min(1.0, max(0.0, hi - lo) / rx_bw)


def path_amplitude(
    p: Point2,
    va: VirtualAnchor,
    w: WaveformParams,
    scenario_seed: int,
    ref_gain: float,
) -> Tuple[float, complex]:
    """Ground-truth (delay, complex amplitude) of the path via ``va``."""
    d = p.distance_to(va.mean)
    tau = d / SPEED_OF_LIGHT
    gain = va_frequency_gain(va.key, w.carrier_hz, scenario_seed)
    alpha = (
        ref_gain
        * gain
        * (REFERENCE_DISTANCE / max(d, REFERENCE_DISTANCE))
        * np.exp(-2j * np.pi * w.carrier_hz * tau)
    )
    return tau, complex(alpha)


def realize_channel(
    p: Point2,
    vas: Sequence[VirtualAnchor],
    w: WaveformParams,
    prof: Optional[DmProfile],
    noise_psd: float,
    duration: float,
    rng: np.random.Generator,
    sample_rate: float,
    scenario_seed: int = 0,
    ref_gain: float = 1.0,
) -> ChannelRealization:
    """Draw one channel realization (paths, band-limited DM taps)."""
    mpcs = []
    for va in vas:
        tau, alpha = path_amplitude(p, va, w, scenario_seed, ref_gain)
        if tau >= duration:
            raise ValueError(
                f"path delay {tau:.3g} s exceeds measurement duration {duration:.3g} s"
            )
        mpcs.append((tau, alpha))

    dm_taps = None
    if prof is not None and prof.omega1 > 0.0:
        n = int(round(duration * sample_rate))
        grid = np.arange(n) / sample_rate
        var = dm_pdp(grid, prof) / sample_rate  # per-tap variance S(tau) * dtau
        std = np.sqrt(var / 2.0)
        taps = std * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        # restrict the DM process to its own band, centered relative to fc
        f = np.fft.fftfreq(n, d=1.0 / sample_rate)
        offset = prof.carrier_hz - w.carrier_hz
        rel = (f - offset + sample_rate / 2) % sample_rate - sample_rate / 2
        mask = np.abs(rel) <= prof.bandwidth_hz / 2
        if not mask.all():
            taps = np.fft.ifft(np.fft.fft(taps) * mask)
        dm_taps = taps
    return ChannelRealization(mpcs, dm_taps, noise_psd)


def synthesize_received(
    p: Point2,
    vas: Sequence[VirtualAnchor],
    w: WaveformParams,
    prof: Optional[DmProfile],
    noise_psd: float,
    duration: float,
    rng: np.random.Generator,
    sample_rate: float,
    scenario_seed: int = 0,
    ref_gain: float = 1.0,
) -> ReceivedSignal:
    """Synthesize the received baseband signal at position ``p``.

    Deterministic paths use the analytic pulse shape evaluated at fractional
    delays; DM taps are convolved with the pulse; AWGN has PSD noise_psd/2
    per real dimension.  Identical (rng state, arguments) give bit-identical
    output.
    """
    chan = realize_channel(
        p, vas, w, prof, noise_psd, duration, rng,
        sample_rate, scenario_seed, ref_gain,
    )
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    r = np.zeros(n, dtype=np.complex128)

    scale = _pulse_scale(w.pulse_duration, sample_rate)
    half = PULSE_HALF_WIDTH * w.pulse_duration
    for tau, alpha in chan.mpcs:
        i0 = max(0, int(math.ceil((tau - half) * sample_rate)))
        i1 = min(n, int(math.floor((tau + half) * sample_rate)) + 1)
        if i0 >= i1:
            continue
        r[i0:i1] += alpha * scale * _rrc(t[i0:i1] - tau, w.pulse_duration)

    if chan.dm_taps is not None:
        pulse = make_pulse(w, sample_rate)
        hw = (len(pulse.samples) - 1) // 2
        full = np.convolve(chan.dm_taps, pulse.samples)
        r += full[hw:hw + n]

    if noise_psd > 0.0:
        sigma = math.sqrt(noise_psd * sample_rate / 2.0)
        r += sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    return ReceivedSignal(r, sample_rate, duration, w)


def true_sinr(
    p: Point2,
    va: VirtualAnchor,
    w: WaveformParams,
    prof: Optional[DmProfile],
    noise_psd: float,
    scenario_seed: int = 0,
    ref_gain: float = 1.0,
) -> float:
    """Ground-truth SINR of the path via ``va``: |alpha|^2 / (N0 + Tp S(tau)).

    The DM term is weighted by the spectral overlap between the receive band
    and the interferer band, vanishing once they are disjoint.
    """
    tau, alpha = path_amplitude(p, va, w, scenario_seed, ref_gain)
    dm = 0.0
    if prof is not None:
        dm = w.pulse_duration * band_overlap_fraction(w, prof) * dm_pdp(tau, prof)
    return float(abs(alpha) ** 2 / (noise_psd + dm))
