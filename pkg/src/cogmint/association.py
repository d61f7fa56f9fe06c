"""Probabilistic data association between expected VA ranges and measurements.

Each anchor's VAs are matched against that anchor's extracted ranges under
missed detections and clutter, with the one-to-one constraint that a
measurement explains at most one VA.  Marginal association probabilities are
computed by belief propagation: exact forward/backward message passing over
the measurement-subset lattice for moderate measurement counts, falling back
to damped loopy bipartite message passing when the subset lattice would be
too large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .geometry import Point2, VirtualAnchor

# largest M for which exact subset-lattice marginalization (O(K 2^M)) is used
EXACT_MARGINAL_MAX_M = 16

BP_DAMPING = 0.5
BP_MAX_ITERS = 200
BP_TOL = 1e-9

DEFAULT_GATE_PROB = 0.5


class AssociationConvergenceError(RuntimeError):
    """Loopy message passing failed to converge; carries the last iterate."""

    def __init__(self, marginals: np.ndarray):
        super().__init__("association message passing did not converge")
        self.marginals = marginals


@dataclass(frozen=True)
class ClutterModel:
    """False-alarm and detection model for one anchor's measurement set."""

    mean_rate: float  # expected false alarms per scan
    density: float  # uniform false-alarm density over the observable range, 1/m
    detect_prob: float

    def __post_init__(self):
        if self.mean_rate < 0:
            raise ValueError("mean_rate must be >= 0")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ValueError("detect_prob must be in [0, 1]")


@dataclass
class AssociationResult:
    """Marginals, MAP assignment and the associated/unassociated partition."""

    marginals: np.ndarray  # K x (M+1); column 0 is "no measurement"
    map_assignment: np.ndarray  # length K, entries in {0, 1..M}
    associated_vas: set
    associated_measurements: set
    remaining_measurements: set


def local_likelihood(y: float, p: Point2, va: VirtualAnchor, sigma2: float) -> float:
    """Gaussian range likelihood of measurement ``y`` for the path via ``va``.

    VA position uncertainty is projected onto the range axis and added to the
    measurement variance.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    d = p.distance_to(va.mean)
    if d > 0:
        u = (va.mean.as_array() - p.as_array()) / d
        var = sigma2 + float(u @ va.cov @ u)
    else:
        var = sigma2 + float(np.linalg.eigvalsh(va.cov).max())
    return math.exp(-0.5 * (y - d) ** 2 / var) / math.sqrt(2 * math.pi * var)


def association_weights(
    pred_p: Point2,
    vas: Sequence[VirtualAnchor],
    measurements: Sequence[float],
    sigma2s: Sequence[float],
    clutter: ClutterModel,
) -> np.ndarray:
    """Single-VA association weights: K x (M+1) matrix.

    Column 0 is the missed-detection weight (1 - Pd); column m is the
    detection weight Pd * likelihood / clutter density.
    """
    k_count = len(vas)
    m_count = len(measurements)
    w = np.empty((k_count, m_count + 1))
    w[:, 0] = 1.0 - clutter.detect_prob
    if m_count == 0:
        return w
    p0 = pred_p.as_array()
    dists = np.empty(k_count)
    variances = np.empty(k_count)
    for k, va in enumerate(vas):
        d = pred_p.distance_to(va.mean)
        dists[k] = d
        if d > 0:
            u = (va.mean.as_array() - p0) / d
            variances[k] = float(sigma2s[k]) + float(u @ va.cov @ u)
        else:
            variances[k] = float(sigma2s[k]) + float(np.linalg.eigvalsh(va.cov).max())
    y = np.asarray(measurements, dtype=float)
    diff = y[None, :] - dists[:, None]
    lik = np.exp(-0.5 * diff ** 2 / variances[:, None]) / np.sqrt(
        2 * np.pi * variances[:, None]
    )
    w[:, 1:] = clutter.detect_prob * lik / clutter.density
    return w


@lru_cache(maxsize=8)
def _subset_indices(m_count: int):
    """For each measurement bit: subset ids with the bit set, and their pair."""
    subsets = np.arange(1 << m_count)
    with_bit, without_bit = [], []
    for m in range(m_count):
        bit = 1 << m
        wi = np.flatnonzero(subsets & bit)
        with_bit.append(wi)
        without_bit.append(wi ^ bit)
    return with_bit, without_bit


def _marginals_exact_core(w: np.ndarray) -> np.ndarray:
    """Exact marginals via forward/backward passing over measurement subsets.

    Messages are indexed by the set of measurements already claimed; stages
    are normalized to keep the products in range.  Equivalent to brute-force
    enumeration of all feasible association vectors.
    """
    k_count, m1 = w.shape
    m_count = m1 - 1
    n_sub = 1 << m_count
    with_bit, without_bit = _subset_indices(m_count)

    fwd = [None] * (k_count + 1)
    f = np.zeros(n_sub)
    f[0] = 1.0
    fwd[0] = f
    for k in range(k_count):
        nf = fwd[k] * w[k, 0]
        for m in range(m_count):
            nf[with_bit[m]] += fwd[k][without_bit[m]] * w[k, m + 1]
        s = nf.sum()
        fwd[k + 1] = nf / s if s > 0 else nf

    bwd = [None] * (k_count + 2)
    bwd[k_count + 1] = np.ones(n_sub)
    for k in range(k_count, 0, -1):
        nb = bwd[k + 1] * w[k - 1, 0]
        for m in range(m_count):
            nb[without_bit[m]] += bwd[k + 1][with_bit[m]] * w[k - 1, m + 1]
        s = nb.sum()
        bwd[k] = nb / s if s > 0 else nb

    p = np.zeros((k_count, m1))
    for k in range(k_count):
        p[k, 0] = float(fwd[k] @ (w[k, 0] * bwd[k + 2]))
        for m in range(m_count):
            p[k, m + 1] = float(
                fwd[k][without_bit[m]]
                @ (w[k, m + 1] * bwd[k + 2][with_bit[m]])
            )
        row = p[k].sum()
        if row > 0:
            p[k] /= row
        else:
            p[k, 0] = 1.0
    return p


PRUNE_REL = 1e-12  # edges this far below the row scale cannot move a marginal


def _marginals_exact(w: np.ndarray) -> np.ndarray:
    """Exact marginals after splitting the association graph into components.

    Edges negligible relative to their row scale are zeroed (perturbing any
    marginal by far less than the 1e-6 contract); the remaining bipartite
    graph splits into independent components whose marginals factor, so each
    component runs the subset-lattice passing on its own few measurements.
    """
    k_count, m1 = w.shape
    m_count = m1 - 1
    row_scale = np.maximum(w[:, 0], w[:, 1:].max(axis=1) if m_count else 0.0)
    kept = w[:, 1:] > PRUNE_REL * row_scale[:, None]

    # union-find over VAs (0..K-1) and measurements (K..K+M-1)
    parent = list(range(k_count + m_count))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k in range(k_count):
        for m in np.flatnonzero(kept[k]):
            a, b = find(k), find(k_count + int(m))
            if a != b:
                parent[b] = a

    p = np.zeros((k_count, m1))
    groups = {}
    for k in range(k_count):
        groups.setdefault(find(k), []).append(k)
    for rows in groups.values():
        cols = sorted(
            {int(m) for k in rows for m in np.flatnonzero(kept[k])}
        )
        if not cols:  # isolated VA: sure miss
            for k in rows:
                p[k, 0] = 1.0
            continue
        if len(rows) == 1:  # one VA: its row is already the posterior
            k = rows[0]
            row = np.concatenate(([w[k, 0]], w[k, 1:][cols] * kept[k][cols]))
            total = row.sum()
            if total > 0:
                p[k, 0] = row[0] / total
                p[k, np.asarray(cols) + 1] = row[1:] / total
            else:
                p[k, 0] = 1.0
            continue
        sub = np.zeros((len(rows), len(cols) + 1))
        sub[:, 0] = w[rows, 0]
        for j, m in enumerate(cols):
            sub[:, j + 1] = w[rows, m + 1] * kept[rows, m]
        p_sub = _marginals_exact_core(sub)
        for i, k in enumerate(rows):
            p[k, 0] = p_sub[i, 0]
            for j, m in enumerate(cols):
                p[k, m + 1] = p_sub[i, j + 1]
    return p


def _marginals_loopy(w: np.ndarray) -> np.ndarray:
    """Damped loopy bipartite message passing (approximate for large M)."""
    k_count, m1 = w.shape
    m_count = m1 - 1
    wm = w[:, 1:]
    mu = np.ones((k_count, m_count))  # VA -> measurement
    nu = np.ones((k_count, m_count))  # measurement -> VA
    converged = False
    for _ in range(BP_MAX_ITERS):
        s = w[:, [0]] + (wm * nu).sum(axis=1, keepdims=True)
        mu_new = wm / np.maximum(s - wm * nu, 1e-300)
        t = 1.0 + mu_new.sum(axis=0, keepdims=True)
        nu_new = 1.0 / np.maximum(t - mu_new, 1e-300)
        mu_next = BP_DAMPING * mu + (1 - BP_DAMPING) * mu_new
        nu_next = BP_DAMPING * nu + (1 - BP_DAMPING) * nu_new
        delta = max(
            np.abs(mu_next - mu).max(initial=0.0),
            np.abs(nu_next - nu).max(initial=0.0),
        )
        mu, nu = mu_next, nu_next
        if delta < BP_TOL:
            converged = True
            break
    p = np.empty((k_count, m1))
    p[:, 0] = w[:, 0]
    p[:, 1:] = wm * nu
    p /= p.sum(axis=1, keepdims=True)
    if not converged:
        raise AssociationConvergenceError(p)
    return p


def association_marginals(weights: np.ndarray) -> np.ndarray:
    """Marginal probabilities p(VA k is explained by measurement m).

    Rows sum to one; column 0 is the missed-detection probability.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[1] < 1:
        raise ValueError("weights must be K x (M+1)")
    k_count, m1 = w.shape
    if k_count == 0:
        return np.zeros((0, m1))
    if m1 == 1:
        out = np.zeros((k_count, 1))
        out[:, 0] = 1.0
        return out
    if m1 - 1 <= EXACT_MARGINAL_MAX_M:
        return _marginals_exact(w)
    return _marginals_loopy(w)


def map_association(
    marginals: np.ndarray, gate_prob: float = DEFAULT_GATE_PROB
) -> np.ndarray:
    """Feasible MAP-style assignment from the marginals.

    Per-VA argmax with conflict repair: when two VAs claim one measurement
    the higher marginal wins (ties to the lower VA index) and the loser moves
    to its next-best feasible option.  An association is accepted only when
    its marginal reaches ``gate_prob``; otherwise the VA keeps none.
    """
    p = np.asarray(marginals, dtype=float)
    k_count, m1 = p.shape
    assignment = np.zeros(k_count, dtype=int)
    blocked = [set() for _ in range(k_count)]

    def best_choice(k):
        order = np.argsort(-p[k], kind="stable")
        for m in order:
            if m == 0:
                return 0
            if m not in blocked[k] and p[k, m] >= gate_prob:
                return int(m)
        return 0

    for k in range(k_count):
        assignment[k] = best_choice(k)

    while True:
        conflict = None
        for m in range(1, m1):
            claimants = np.flatnonzero(assignment == m)
            if len(claimants) > 1:
                conflict = (m, claimants)
                break
        if conflict is None:
            break
        m, claimants = conflict
        # stable argsort keeps lower va index first on equal marginals
        winner = claimants[np.argsort(-p[claimants, m], kind="stable")[0]]
        for k in claimants:
            if k != winner:
                blocked[k].add(m)
                assignment[k] = best_choice(k)
    return assignment


def partition_sets(
    map_assignment: np.ndarray,
    vas: Sequence[VirtualAnchor],
    measurements: Sequence[float],
):
    """Split VAs and measurements into associated / remaining sets.

    Returns (associated VA keys, associated measurement indices, remaining
    measurement indices); measurement indices are 0-based.
    """
    assignment = np.asarray(map_assignment, dtype=int)
    associated_vas = {vas[k].key for k in np.flatnonzero(assignment > 0)}
    associated_meas = {int(m) - 1 for m in assignment if m > 0}
    remaining = set(range(len(measurements))) - associated_meas
    return associated_vas, associated_meas, remaining


def associate(
    pred_p: Point2,
    vas: Sequence[VirtualAnchor],
    measurements: Sequence[float],
    sigma2s: Sequence[float],
    clutter: ClutterModel,
    gate_prob: float = DEFAULT_GATE_PROB,
) -> AssociationResult:
    """Full per-anchor association pipeline: weights, marginals, MAP, sets."""
    w = association_weights(pred_p, vas, measurements, sigma2s, clutter)
    marg = association_marginals(w)
    assignment = map_association(marg, gate_prob)
    ass_vas, ass_meas, remaining = partition_sets(assignment, vas, measurements)
    return AssociationResult(marg, assignment, ass_vas, ass_meas, remaining)
