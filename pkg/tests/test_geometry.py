import math

import numpy as np
import pytest

from cogmint.geometry import (
    SPEED_OF_LIGHT,
    FloorPlan,
    Point2,
    VirtualAnchor,
    Wall,
    angle_to,
    build_virtual_anchors,
    expected_delay,
    mirror_point,
    ranging_direction,
)


def brute_force_vas(plan, anchor, max_order):
    """Independent oracle: enumerate every wall sequence, then dedup.

    Same dedup rule as the production builder: 1e-9 position tolerance,
    lowest order wins, ties by lexicographic wall sequence.
    """
    walls = {w.id: w for w in plan.walls}
    candidates = [(anchor, ())]
    frontier = [(anchor, ())]
    for _ in range(max_order):
        nxt = []
        for pos, seq in frontier:
            for wid in sorted(walls):
                if seq and seq[-1] == wid:
                    continue
                nxt.append((mirror_point(pos, walls[wid]), seq + (wid,)))
        candidates.extend(nxt)
        frontier = nxt
    candidates.sort(key=lambda e: (len(e[1]), e[1]))
    kept = []
    for pos, seq in candidates:
        if not any(pos.distance_to(q) <= 1e-9 for q, _ in kept):
            kept.append((pos, seq))
    return kept


@pytest.fixture
def room():
    return FloorPlan.rectangle(0.0, 0.0, 5.0, 6.0)


def wall_x0():
    return Wall(Point2(0, 0), Point2(0, 6), 1)


def test_mirror_across_x_axis_line():
    m = mirror_point(Point2(1, 2), wall_x0())
    assert m.x == pytest.approx(-1.0, abs=1e-12)
    assert m.y == pytest.approx(2.0, abs=1e-12)


def test_mirror_fixed_point_on_wall_line():
    p = Point2(0.0, 3.7)
    m = mirror_point(p, wall_x0())
    assert p.distance_to(m) < 1e-12


def test_mirror_involution_and_isometry():
    rng = np.random.default_rng(7)
    for _ in range(300):
        a = Point2(*rng.uniform(-5, 5, 2))
        b = Point2(*rng.uniform(-5, 5, 2))
        if a.distance_to(b) < 1e-6:
            continue
        w = Wall(a, b, 1)
        p = Point2(*rng.uniform(-10, 10, 2))
        q = Point2(*rng.uniform(-10, 10, 2))
        assert mirror_point(mirror_point(p, w), w).distance_to(p) < 1e-12
        assert abs(mirror_point(p, w).distance_to(mirror_point(q, w))
                   - p.distance_to(q)) < 1e-12


def test_degenerate_wall_rejected():
    with pytest.raises(ValueError):
        Wall(Point2(1, 1), Point2(1, 1), 1)


def test_first_order_rectangle(room):
    vas = build_virtual_anchors(room, Point2(1, 2), anchor_id=1, max_order=1)
    assert len(vas) == 5
    assert vas[0].order == 0
    assert vas[0].mean == Point2(1, 2)
    assert np.allclose(vas[0].cov, 0.0)
    got = sorted((round(v.mean.x, 9), round(v.mean.y, 9)) for v in vas[1:])
    assert got == sorted([(-1.0, 2.0), (1.0, -2.0), (9.0, 2.0), (1.0, 10.0)])
    for v in vas[1:]:
        assert np.allclose(v.cov, 0.05 ** 2 * np.eye(2))


def test_order_zero_is_anchor_only(room):
    vas = build_virtual_anchors(room, Point2(2, 3), 1, max_order=0)
    assert len(vas) == 1
    assert vas[0].order == 0 and vas[0].wall_sequence == ()


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_matches_brute_force_enumeration(room, order):
    anchor = Point2(1.3, 2.6)
    vas = build_virtual_anchors(room, anchor, 1, max_order=order)
    oracle = brute_force_vas(room, anchor, order)
    assert len(vas) == len(oracle)
    got = sorted((round(v.mean.x, 6), round(v.mean.y, 6)) for v in vas)
    want = sorted((round(p.x, 6), round(p.y, 6)) for p, _ in oracle)
    assert got == want


def test_no_consecutive_wall_repetition(room):
    vas = build_virtual_anchors(room, Point2(1, 2), 1, max_order=3)
    for v in vas:
        for w1, w2 in zip(v.wall_sequence, v.wall_sequence[1:]):
            assert w1 != w2


def test_va_indices_and_ordering(room):
    vas = build_virtual_anchors(room, Point2(1, 2), 1, max_order=2)
    assert [v.va_index for v in vas] == list(range(1, len(vas) + 1))
    orders = [v.order for v in vas]
    assert orders == sorted(orders)


def test_expected_delay():
    va = VirtualAnchor(1, 1, Point2(3, 4), np.zeros((2, 2)), 0, ())
    assert expected_delay(Point2(3, 4), va) == 0.0
    assert expected_delay(Point2(0, 0), va) == pytest.approx(5.0 / SPEED_OF_LIGHT)
    far = VirtualAnchor(1, 2, Point2(299.792458, 0), np.zeros((2, 2)), 0, ())
    assert expected_delay(Point2(0, 0), far) == pytest.approx(1e-6)


def test_angle_to():
    assert angle_to(Point2(0, 0), Point2(1, 0)) == pytest.approx(0.0)
    assert angle_to(Point2(0, 0), Point2(0, 2)) == pytest.approx(math.pi / 2)
    assert angle_to(Point2(1, 1), Point2(0, 0)) == pytest.approx(-3 * math.pi / 4)
    with pytest.raises(ValueError):
        angle_to(Point2(1, 1), Point2(1, 1))


def test_angle_to_range_is_half_open():
    ang = angle_to(Point2(0, 0), Point2(-1, 0))
    assert ang == pytest.approx(math.pi)
    assert -math.pi < ang <= math.pi


@pytest.mark.parametrize(
    "phi,expected",
    [
        (0.0, [[1, 0], [0, 0]]),
        (math.pi / 2, [[0, 0], [0, 1]]),
        (math.pi / 4, [[0.5, 0.5], [0.5, 0.5]]),
    ],
)
def test_ranging_direction_examples(phi, expected):
    assert np.allclose(ranging_direction(phi).m, expected, atol=1e-12)


def test_ranging_direction_properties():
    rng = np.random.default_rng(3)
    for phi in rng.uniform(-np.pi, np.pi, 50):
        m = ranging_direction(phi).m
        u = np.array([np.cos(phi), np.sin(phi)])
        assert abs(np.trace(m) - 1.0) < 1e-12
        assert abs(np.linalg.det(m)) < 1e-12
        assert np.allclose(m @ u, u, atol=1e-12)


def test_floor_plan_validation():
    with pytest.raises(ValueError):
        FloorPlan(())
    with pytest.raises(ValueError):
        FloorPlan((wall_x0(), Wall(Point2(1, 0), Point2(1, 5), 1)))
