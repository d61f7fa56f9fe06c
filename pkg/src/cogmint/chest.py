"""MPC parameter estimation: recursive least-squares matching pursuit.

Extracts a fixed number of (delay, complex amplitude) pairs from a received
signal by repeatedly correlating the residual with the transmit pulse,
picking the strongest grid delay, refining it with 3-point parabolic
interpolation, and subtracting the fitted pulse.  Delays scaled by the speed
of light become the range measurements fed to data association.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .geometry import SPEED_OF_LIGHT
from .signal import Pulse, ReceivedSignal


@dataclass(frozen=True)
class MpcEstimate:
    index_m: int
    delay_hat: float
    amplitude_hat: complex
    range_hat: float


@dataclass
class MeasurementSet:
    """Per-anchor MPC estimates for one time step."""

    per_anchor: Dict[int, List[MpcEstimate]]
    time_index: int
    sample_rate: float

    def __post_init__(self):
        for anchor_id, ests in self.per_anchor.items():
            grid = [int(round(e.delay_hat * self.sample_rate)) for e in ests]
            if len(set(grid)) != len(grid):
                raise ValueError(
                    f"anchor {anchor_id} has coincident delay estimates"
                )

    def ranges(self, anchor_id: int) -> np.ndarray:
        return np.array([e.range_hat for e in self.per_anchor[anchor_id]])


def _pulse_spectrum(pulse: Pulse, n: int) -> np.ndarray:
    """Length-n spectrum of the pulse with its center placed at time zero."""
    s = np.zeros(n, dtype=np.complex128)
    half = (len(pulse.samples) - 1) // 2
    idx = (np.arange(len(pulse.samples)) - half) % n
    s[idx] = pulse.samples
    return np.fft.fft(s)


def _correlation_at(cross_spec: np.ndarray, freqs: np.ndarray, tau: float,
                    sample_rate: float) -> complex:
    n = cross_spec.size
    return complex(
        (cross_spec * np.exp(2j * np.pi * freqs * tau)).sum() / (n * sample_rate)
    )


def matching_pursuit(r: ReceivedSignal, pulse: Pulse, n_paths: int) -> list:
    """Extract ``n_paths`` MPC estimates from ``r`` by matching pursuit.

    Grid search at one-sample granularity, 3-point parabolic refinement of
    the squared correlation, fractional-delay subtraction in the frequency
    domain.  Ties on equal correlation resolve to the smallest delay; each
    grid delay is extracted at most once.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if pulse.sample_rate != r.sample_rate:
        raise ValueError("pulse and signal sample rates differ")
    n = len(r.samples)
    if n_paths > n:
        raise ValueError(f"cannot extract {n_paths} paths from {n} grid delays")

    fs = r.sample_rate
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    spec = _pulse_spectrum(pulse, n)
    residual_f = np.fft.fft(r.samples)
    taken = np.zeros(n, dtype=bool)

    estimates = []
    for m in range(1, n_paths + 1):
        cross = residual_f * np.conj(spec)
        corr = np.fft.ifft(cross) / fs
        power = np.abs(corr) ** 2
        power[taken] = -1.0
        g = int(np.argmax(power))
        taken[g] = True

        # parabolic vertex of |corr|^2 around the grid peak
        y0 = power[g]
        ym = np.abs(corr[(g - 1) % n]) ** 2
        yp = np.abs(corr[(g + 1) % n]) ** 2
        denom = ym - 2.0 * y0 + yp
        delta = 0.0 if abs(denom) < 1e-300 else 0.5 * (ym - yp) / denom
        delta = float(np.clip(delta, -0.5, 0.5))

        tau = (g + delta) / fs
        tau = min(max(tau, 0.0), (n - 1) / fs)
        alpha = _correlation_at(cross, freqs, tau, fs)
        residual_f -= alpha * spec * np.exp(-2j * np.pi * freqs * tau)
        estimates.append(
            MpcEstimate(m, tau, alpha, SPEED_OF_LIGHT * tau)
        )
    return estimates


def residual_energy(
    r: ReceivedSignal, estimates: Sequence[MpcEstimate], pulse: Pulse
) -> float:
    """Energy of the signal minus the reconstructed MPC template."""
    n = len(r.samples)
    fs = r.sample_rate
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    spec = _pulse_spectrum(pulse, n)
    model_f = np.zeros(n, dtype=np.complex128)
    for e in estimates:
        model_f += e.amplitude_hat * spec * np.exp(-2j * np.pi * freqs * e.delay_hat)
    resid = r.samples - np.fft.ifft(model_f)
    return float(np.sum(np.abs(resid) ** 2) / fs)
