"""Floor-plan geometry and virtual-anchor construction by recursive mirroring.

A specular wall reflection behaves like a direct path from a mirror image of
the transmitting anchor, a *virtual anchor* (VA).  First-order VAs are the
anchor mirrored across each wall line; higher orders mirror lower-order VAs
again.  Walls act as infinite lines here: visibility is handled downstream by
per-path SINR weighting, not by ray tracing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s

_DEDUP_TOL = 1e-9  # m; VA positions closer than this are the same image


@dataclass(frozen=True)
class Point2:
    """A 2D position in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


def as_point(p) -> Point2:
    """Coerce a Point2, tuple or array into a Point2."""
    if isinstance(p, Point2):
        return p
    x, y = p
    return Point2(float(x), float(y))


@dataclass(frozen=True)
class Wall:
    """A wall segment; mirroring uses the infinite line through it."""

    endpoint_a: Point2
    endpoint_b: Point2
    id: int

    def __post_init__(self):
        if self.endpoint_a.distance_to(self.endpoint_b) == 0.0:
            raise ValueError(f"wall {self.id} has coincident endpoints")


@dataclass(frozen=True)
class FloorPlan:
    """A set of walls with unique ids."""

    walls: tuple

    def __post_init__(self):
        if len(self.walls) == 0:
            raise ValueError("floor plan needs at least one wall")
        ids = [w.id for w in self.walls]
        if len(set(ids)) != len(ids):
            raise ValueError("wall ids must be unique")

    @staticmethod
    def from_segments(segments: Iterable[Sequence[Sequence[float]]]) -> "FloorPlan":
        """Build from [[x1, y1], [x2, y2]] pairs; ids assigned 1..N in order."""
        walls = tuple(
            Wall(as_point(a), as_point(b), i + 1)
            for i, (a, b) in enumerate(segments)
        )
        return FloorPlan(walls)

    @staticmethod
    def rectangle(xmin: float, ymin: float, xmax: float, ymax: float) -> "FloorPlan":
        return FloorPlan.from_segments([
            [[xmin, ymin], [xmax, ymin]],
            [[xmax, ymin], [xmax, ymax]],
            [[xmax, ymax], [xmin, ymax]],
            [[xmin, ymax], [xmin, ymin]],
        ])

    def bounding_box(self) -> tuple:
        """(xmin, ymin, xmax, ymax) over all wall endpoints."""
        xs = [p.x for w in self.walls for p in (w.endpoint_a, w.endpoint_b)]
        ys = [p.y for w in self.walls for p in (w.endpoint_a, w.endpoint_b)]
        return min(xs), min(ys), max(xs), max(ys)


@dataclass(frozen=True)
class VirtualAnchor:
    """Mirror image of a physical anchor with Gaussian position uncertainty.

    ``order`` counts the reflections; order 0 is the physical anchor itself,
    whose position may be known exactly (zero covariance).
    """

    anchor_id: int
    va_index: int
    mean: Point2
    cov: np.ndarray
    order: int
    wall_sequence: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.order != len(self.wall_sequence):
            raise ValueError("order must equal the reflection count")
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (2, 2) or not np.allclose(c, c.T):
            raise ValueError("cov must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(c).min() < -1e-12:
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "cov", c)

    @property
    def key(self) -> tuple:
        return (self.anchor_id, self.va_index)


@dataclass(frozen=True)
class RangingDirectionMatrix:
    """Rank-1 projector u u^T onto the agent-to-VA direction."""

    m: np.ndarray
    angle: float


def mirror_point(p: Point2, wall: Wall) -> Point2:
    """Reflect ``p`` across the infinite line through ``wall``."""
    a = wall.endpoint_a.as_array()
    d = wall.endpoint_b.as_array() - a
    nrm2 = float(d @ d)
    if nrm2 == 0.0:
        raise ValueError(f"wall {wall.id} is degenerate")
    v = p.as_array() - a
    proj = (v @ d) / nrm2 * d
    r = a + 2.0 * proj - v
    return Point2(float(r[0]), float(r[1]))


def build_virtual_anchors(
    plan: FloorPlan,
    anchor: Point2,
    anchor_id: int,
    max_order: int,
    position_std: float = 0.05,
) -> list:
    """Enumerate VAs of ``anchor`` up to ``max_order`` reflections.

    Breadth-first mirroring without immediate wall repetition.  Positions that
    coincide within 1e-9 m are deduplicated keeping the lowest order, ties
    broken by lexicographic wall sequence.  Order-0 gets zero covariance
    (anchor known exactly); reflections get an isotropic ``position_std**2``
    prior.

    Returns VAs sorted by (order, wall_sequence) with va_index 1..K.
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    walls = sorted(plan.walls, key=lambda w: w.id)
    kept = [(anchor, ())]  # (position, wall_sequence), BFS front is the tail
    frontier = [(anchor, ())]
    for _ in range(max_order):
        new_frontier = []
        for pos, seq in frontier:
            for w in walls:
                if seq and seq[-1] == w.id:
                    continue
                cand = mirror_point(pos, w)
                if any(cand.distance_to(q) <= _DEDUP_TOL for q, _ in kept):
                    continue
                entry = (cand, seq + (w.id,))
                kept.append(entry)
                new_frontier.append(entry)
        frontier = new_frontier

    kept.sort(key=lambda e: (len(e[1]), e[1]))
    out = []
    for idx, (pos, seq) in enumerate(kept, start=1):
        order = len(seq)
        cov = np.zeros((2, 2)) if order == 0 else (position_std ** 2) * np.eye(2)
        out.append(VirtualAnchor(anchor_id, idx, pos, cov, order, seq))
    return out


def expected_delay(p: Point2, va: VirtualAnchor) -> float:
    """Propagation delay from ``p`` to the VA mean, in seconds."""
    return p.distance_to(va.mean) / SPEED_OF_LIGHT


def angle_to(p: Point2, a: Point2) -> float:
    """Direction angle from ``p`` to ``a`` in (-pi, pi]."""
    if p.distance_to(a) == 0.0:
        raise ValueError("angle undefined for coincident points")
    ang = math.atan2(a.y - p.y, a.x - p.x)
    if ang <= -math.pi:
        ang = math.pi
    return ang


def ranging_direction(phi: float) -> RangingDirectionMatrix:
    """Rank-1 ranging direction matrix for direction angle ``phi``."""
    u = np.array([math.cos(phi), math.sin(phi)])
    return RangingDirectionMatrix(np.outer(u, u), phi)
