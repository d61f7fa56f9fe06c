"""Position-related information measures.

Per-path SINR estimated from windows of associated complex amplitudes turns
into a range-variance bound; ranging directions weighted by SINR sum into the
equivalent Fisher information matrix (EFIM) whose inverse trace bounds the
position error.  Gaussian entropy of the tracker posterior is the feedback
signal for the cognitive controller.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import SPEED_OF_LIGHT, Point2, angle_to, ranging_direction

SINR_FLOOR = 1e-3
SINR_CEIL = 1e6

DEFAULT_WINDOW = 40  # amplitudes kept per (VA, frequency bin)
DEFAULT_MIN_SAMPLES = 10  # estimates start once this many are collected
DEFAULT_RANGE_STD = 0.3  # m, working std before an SINR estimate exists
DEFAULT_FALLBACK_HZ = 200e6  # nearest-bin lookup radius for unvisited bins


class SingularGeometryError(ValueError):
    """EFIM is singular: the geometry does not localize the position."""


@dataclass(frozen=True)
class Efim:
    """Equivalent Fisher information matrix for the 2D position, 1/m^2."""

    j: np.ndarray


def estimate_sinr_mom(
    window: Sequence[complex], min_samples: int = DEFAULT_MIN_SAMPLES
) -> float:
    """Method-of-moments SINR from amplitude magnitudes (Rician matching).

    Uses the second and fourth magnitude moments; the deterministic-to-
    diffuse power ratio is clamped to [1e-3, 1e6].
    """
    mags2 = np.abs(np.asarray(window, dtype=complex)) ** 2
    if mags2.size < min_samples:
        raise ValueError(
            f"window of {mags2.size} amplitudes is below the minimum {min_samples}"
        )
    m2 = mags2.mean()
    m4 = (mags2 ** 2).mean()
    det_power = math.sqrt(max(0.0, 2.0 * m2 ** 2 - m4))
    diffuse = m2 - det_power
    if diffuse <= 0.0:
        return SINR_CEIL
    return float(np.clip(det_power / diffuse, SINR_FLOOR, SINR_CEIL))


def range_variance(sinr: float, beta: float) -> float:
    """Range-variance bound of a path with the given SINR and rms bandwidth."""
    if sinr <= 0 or beta <= 0:
        raise ValueError("sinr and beta must be positive")
    return SPEED_OF_LIGHT ** 2 / (8.0 * math.pi ** 2 * beta ** 2 * sinr)


def efim(p: Point2, entries: Sequence[Tuple], beta: float) -> Efim:
    """Sum of SINR-weighted rank-1 ranging-direction contributions.

    ``entries`` holds (VirtualAnchor, sinr) pairs; an empty list gives the
    zero matrix.
    """
    j = np.zeros((2, 2))
    scale = 8.0 * math.pi ** 2 * beta ** 2 / SPEED_OF_LIGHT ** 2
    for va, sinr in entries:
        phi = angle_to(p, va.mean)
        j += scale * sinr * ranging_direction(phi).m
    return Efim(j)


def crlb_position(e) -> float:
    """Position-error bound tr(J^-1); raises if the geometry is singular."""
    j = np.asarray(e.j if isinstance(e, Efim) else e, dtype=float)
    vals = np.linalg.eigvalsh(j)
    if vals.min() <= 0 or vals.min() < 1e-15 * vals.max():
        raise SingularGeometryError("EFIM is singular; position not localizable")
    return float(np.trace(np.linalg.inv(j)))


def gaussian_entropy(cov: np.ndarray) -> float:
    """Entropy of a Gaussian with covariance ``cov``, in nats."""
    c = np.asarray(cov, dtype=float)
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    n = c.shape[0]
    return float(0.5 * (n * math.log(2.0 * math.pi * math.e) + logdet))


def gdop(e, mean_range_var: float) -> float:
    """Geometric dilution of precision: position-to-range std ratio."""
    if mean_range_var <= 0:
        raise ValueError("mean_range_var must be positive")
    return math.sqrt(crlb_position(e) / mean_range_var)


@dataclass
class SinrTrack:
    """Amplitude window and running SINR estimate for one (VA, bin) pair."""

    va_key: tuple
    action_bin: int
    window: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_WINDOW))
    min_samples: int = DEFAULT_MIN_SAMPLES
    sinr_hat: Optional[float] = None

    def record(self, amplitude: complex):
        self.window.append(complex(amplitude))
        if len(self.window) >= self.min_samples:
            self.sinr_hat = estimate_sinr_mom(self.window, self.min_samples)


class SinrMemory:
    """Per-(VA, carrier-bin) SINR memory backing association and planning.

    Queries for unvisited bins fall back to the nearest visited bin within
    ``fallback_hz``; with no usable estimate the default range variance
    applies.
    """

    def __init__(
        self,
        window_size: int = DEFAULT_WINDOW,
        min_samples: int = DEFAULT_MIN_SAMPLES,
        default_range_std: float = DEFAULT_RANGE_STD,
        bin_spacing_hz: float = 50e6,
        fallback_hz: float = DEFAULT_FALLBACK_HZ,
    ):
        self.window_size = window_size
        self.min_samples = min_samples
        self.default_range_var = default_range_std ** 2
        self.bin_spacing_hz = bin_spacing_hz
        self.fallback_hz = fallback_hz
        self._by_va = {}  # va_key -> {action_bin: SinrTrack}

    def record(self, va_key: tuple, action_bin: int, amplitude: complex):
        bins = self._by_va.setdefault(va_key, {})
        track = bins.get(int(action_bin))
        if track is None:
            track = SinrTrack(
                va_key,
                int(action_bin),
                deque(maxlen=self.window_size),
                self.min_samples,
            )
            bins[int(action_bin)] = track
        track.record(amplitude)

    def sinr(self, va_key: tuple, action_bin: int) -> Optional[float]:
        bins = self._by_va.get(va_key)
        if not bins:
            return None
        action_bin = int(action_bin)
        track = bins.get(action_bin)
        if track is not None and track.sinr_hat is not None:
            return track.sinr_hat
        max_bins = int(self.fallback_hz / self.bin_spacing_hz)
        for dist in range(1, max_bins + 1):
            for abin in (action_bin - dist, action_bin + dist):  # lower bin wins
                tr = bins.get(abin)
                if tr is not None and tr.sinr_hat is not None:
                    return tr.sinr_hat
        return None

    def range_var(self, va_key: tuple, action_bin: int, beta: float) -> float:
        sinr = self.sinr(va_key, action_bin)
        if sinr is None:
            return self.default_range_var
        return range_variance(sinr, beta)
