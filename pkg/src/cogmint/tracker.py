"""Unscented Kalman filter over the stacked agent + virtual-anchor state.

The state stacks the agent [position, velocity] with the 2D positions of all
mapped VAs and keeps the full joint covariance, so a range update through any
VA tightens the agent and the map together via the cross-covariances.  The
motion model is constant velocity for the agent and identity for VAs; the
measurement model is the stacked vector of agent-to-VA ranges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import VirtualAnchor
from .uncertainty import gaussian_entropy

UT_ALPHA = 0.1
UT_BETA = 2.0
UT_KAPPA = 0.0

COV_EIGEN_FLOOR = 1e-12
INFORMATIONLESS_VAR = 1e30  # range variances at/above this carry no update


@dataclass(frozen=True)
class MotionModel:
    """Constant-velocity transition with white acceleration noise."""

    dt: float
    accel_noise_std: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.accel_noise_std < 0:
            raise ValueError("acceleration noise must be >= 0")

    def transition(self) -> np.ndarray:
        f = np.eye(4)
        f[0, 2] = self.dt
        f[1, 3] = self.dt
        return f

    def process_noise(self) -> np.ndarray:
        g = np.array([
            [self.dt ** 2 / 2, 0.0],
            [0.0, self.dt ** 2 / 2],
            [self.dt, 0.0],
            [0.0, self.dt],
        ])
        return self.accel_noise_std ** 2 * (g @ g.T)


@dataclass
class StackedState:
    """Joint mean/covariance of [agent(4), va_1(2), ..., va_K(2)]."""

    mean: np.ndarray
    cov: np.ndarray
    va_keys: tuple

    def __post_init__(self):
        n = 4 + 2 * len(self.va_keys)
        self.mean = np.asarray(self.mean, dtype=float).reshape(n)
        self.cov = np.asarray(self.cov, dtype=float).reshape(n, n)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def agent_position(self) -> np.ndarray:
        return self.mean[:2].copy()

    @property
    def agent_velocity(self) -> np.ndarray:
        return self.mean[2:4].copy()

    @property
    def agent_cov(self) -> np.ndarray:
        return self.cov[:4, :4].copy()

    def va_slice(self, key) -> slice:
        i = self.va_keys.index(key)
        return slice(4 + 2 * i, 6 + 2 * i)

    def va_position(self, key) -> np.ndarray:
        return self.mean[self.va_slice(key)].copy()

    def copy(self) -> "StackedState":
        return StackedState(self.mean.copy(), self.cov.copy(), self.va_keys)


def init_state(
    agent_mean: np.ndarray,
    agent_cov: np.ndarray,
    vas: Sequence[VirtualAnchor],
) -> StackedState:
    """Stack the agent prior with the VA position priors (no cross terms)."""
    vas = sorted(vas, key=lambda v: v.key)
    n = 4 + 2 * len(vas)
    mean = np.zeros(n)
    cov = np.zeros((n, n))
    mean[:4] = np.asarray(agent_mean, dtype=float)
    cov[:4, :4] = np.asarray(agent_cov, dtype=float)
    for i, va in enumerate(vas):
        sl = slice(4 + 2 * i, 6 + 2 * i)
        mean[sl] = va.mean.as_array()
        cov[sl, sl] = va.cov
    return StackedState(mean, cov, tuple(va.key for va in vas))


def _repair(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and floor eigenvalues so the covariance stays usable."""
    sym = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(sym)
        vals = np.maximum(vals, COV_EIGEN_FLOOR)
        return (vecs * vals) @ vecs.T


def _sigma_points(mean: np.ndarray, cov: np.ndarray):
    n = mean.size
    lam = UT_ALPHA ** 2 * (n + UT_KAPPA) - n
    try:
        root = np.linalg.cholesky((n + lam) * cov)
    except np.linalg.LinAlgError:
        root = np.linalg.cholesky((n + lam) * _repair(cov))
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1:n + 1] = mean + root.T
    pts[n + 1:] = mean - root.T
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1 - UT_ALPHA ** 2 + UT_BETA)
    return pts, wm, wc


def unscented_update(
    mean: np.ndarray,
    cov: np.ndarray,
    h: Callable[[np.ndarray], np.ndarray],
    y: np.ndarray,
    noise_cov: np.ndarray,
):
    """One unscented measurement update; exact for linear ``h``.

    ``h`` maps a batch of states (S, n) to measurements (S, m).  Returns the
    posterior (mean, cov).  Raises on a non-positive-definite innovation
    covariance.
    """
    pts, wm, wc = _sigma_points(mean, cov)
    z = np.asarray(h(pts))
    z_hat = wm @ z
    dz = z - z_hat
    dx = pts - mean
    s = (dz.T * wc) @ dz + noise_cov
    pxz = (dx.T * wc) @ dz
    try:
        chol = np.linalg.cholesky(0.5 * (s + s.T))
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not positive definite") from exc
    gain = np.linalg.solve(chol.T, np.linalg.solve(chol, pxz.T)).T
    post_mean = mean + gain @ (np.asarray(y, dtype=float) - z_hat)
    post_cov = _repair(cov - gain @ s @ gain.T)
    return post_mean, post_cov


def predict(state: StackedState, motion: MotionModel) -> StackedState:
    """Constant-velocity prediction; VA blocks are static."""
    f = motion.transition()
    n = state.dim
    ftil = np.eye(n)
    ftil[:4, :4] = f
    mean = ftil @ state.mean
    cov = ftil @ state.cov @ ftil.T
    cov[:4, :4] += motion.process_noise()
    return StackedState(mean, _repair(cov), state.va_keys)


def _range_h(va_indices: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
    xcols = np.array([4 + 2 * i for i in va_indices])
    ycols = xcols + 1

    def h(pts: np.ndarray) -> np.ndarray:
        return np.hypot(
            pts[:, xcols] - pts[:, 0:1], pts[:, ycols] - pts[:, 1:2]
        )

    return h


def update(
    state: StackedState,
    va_keys: Sequence,
    ranges: Sequence[float],
    range_vars: Sequence[float],
) -> StackedState:
    """Joint range update through the listed VAs.

    ``range_vars`` become the diagonal measurement covariance.  With no
    associations the prediction is returned unchanged.
    """
    if len(va_keys) == 0:
        return state.copy()
    if not (len(va_keys) == len(ranges) == len(range_vars)):
        raise ValueError("va_keys, ranges and range_vars must align")
    idx = [state.va_keys.index(k) for k in va_keys]
    h = _range_h(idx)
    r = np.diag(np.asarray(range_vars, dtype=float))
    mean, cov = unscented_update(state.mean, state.cov, h, np.asarray(ranges), r)
    return StackedState(mean, cov, state.va_keys)


def posterior_entropy(state: StackedState, agent_only: bool = True) -> float:
    """Gaussian entropy of the agent block (controller feedback) or full state."""
    cov = state.agent_cov if agent_only else state.cov
    return gaussian_entropy(cov)


def predict_covariance_rollout(
    state: StackedState,
    motion: MotionModel,
    va_keys: Sequence,
    range_vars: Sequence[float],
    horizon: int,
) -> list:
    """Measurement-free covariance rollout for planning.

    For each future step: predict, then update the covariance assuming the
    listed VAs deliver ranges with the hypothetical variances, linearizing at
    the predicted mean (a zero-innovation update).  Variances at or above
    ``INFORMATIONLESS_VAR`` contribute no update.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    keys = list(va_keys)
    cur = state.copy()
    out = []
    for _ in range(horizon):
        cur = predict(cur, motion)
        usable = [
            (k, v) for k, v in zip(keys, range_vars) if v < INFORMATIONLESS_VAR
        ]
        if usable:
            idx = [cur.va_keys.index(k) for k, _ in usable]
            h = _range_h(idx)
            r = np.diag([v for _, v in usable])
            y = h(cur.mean[None, :])[0]  # zero innovation keeps linearization
            mean, cov = unscented_update(cur.mean, cur.cov, h, y, r)
            cur = StackedState(mean, cov, cur.va_keys)
        out.append(cur.cov.copy())
    return out
