import math

import numpy as np
import pytest

from cogmint.geometry import Point2, VirtualAnchor
from cogmint.tracker import (
    INFORMATIONLESS_VAR,
    MotionModel,
    StackedState,
    init_state,
    posterior_entropy,
    predict,
    predict_covariance_rollout,
    unscented_update,
    update,
)


def make_vas(coords, cov_scale=0.0):
    return [
        VirtualAnchor(1, i + 1, Point2(*c), cov_scale * np.eye(2), 0, ())
        for i, c in enumerate(coords)
    ]


def basic_state(pos=(0.0, 0.0), vel=(0.0, 0.0), pos_var=0.09, vel_var=0.04,
                va_coords=((10.0, 0.0), (0.0, 12.0)), va_var=0.0):
    vas = make_vas(va_coords, va_var)
    agent_mean = np.array([*pos, *vel])
    agent_cov = np.diag([pos_var, pos_var, vel_var, vel_var])
    return init_state(agent_mean, agent_cov, vas)


class TestPredict:
    def test_stationary_zero_noise(self):
        s = basic_state()
        m = MotionModel(0.5, 0.0)
        out = predict(s, m)
        assert np.allclose(out.mean, s.mean)

    def test_constant_velocity_arithmetic(self):
        s = basic_state(pos=(0, 0), vel=(1.0, 2.0))
        out = predict(s, MotionModel(0.5, 0.0))
        assert np.allclose(out.mean[:4], [0.5, 1.0, 1.0, 2.0])

    def test_va_blocks_untouched(self):
        s = basic_state(va_var=0.01)
        s.cov[4:, 4:] += 0.001  # add VA-VA cross terms
        s.cov = 0.5 * (s.cov + s.cov.T)
        out = predict(s, MotionModel(0.1, 0.7))
        assert np.allclose(out.mean[4:], s.mean[4:])
        assert np.allclose(out.cov[4:, 4:], s.cov[4:, 4:], atol=1e-12)

    def test_prediction_only_divergence(self):
        s = basic_state()
        m = MotionModel(0.1, 0.5)
        traces = []
        for _ in range(20):
            s = predict(s, m)
            traces.append(np.trace(s.cov[:2, :2]))
        assert all(b > a for a, b in zip(traces, traces[1:]))


class TestUpdateLinearOracle:
    def test_ukf_equals_kalman_on_linear_map(self):
        rng = np.random.default_rng(4)
        n, m = 6, 3
        a = rng.standard_normal((n, n))
        cov = a @ a.T + n * np.eye(n)
        mean = rng.standard_normal(n)
        h_mat = rng.standard_normal((m, n))
        r = np.diag(rng.uniform(0.1, 1.0, m))
        y = rng.standard_normal(m)

        got_mean, got_cov = unscented_update(
            mean, cov, lambda pts: pts @ h_mat.T, y, r
        )
        s = h_mat @ cov @ h_mat.T + r
        gain = cov @ h_mat.T @ np.linalg.inv(s)
        want_mean = mean + gain @ (y - h_mat @ mean)
        want_cov = cov - gain @ s @ gain.T
        assert np.abs(got_mean - want_mean).max() < 1e-8
        assert np.abs(got_cov - want_cov).max() < 1e-8

    def test_non_pd_innovation_raises(self):
        mean = np.zeros(4)
        cov = np.eye(4)
        bad_r = -10.0 * np.eye(2)
        with pytest.raises(ValueError):
            unscented_update(mean, cov, lambda pts: pts[:, :2], np.zeros(2), bad_r)


class TestUpdate:
    def test_zero_innovation_keeps_mean_reduces_range_variance(self):
        # prior tight enough that the unscented curvature term is negligible
        s = basic_state(pos=(0.0, 0.0), pos_var=1e-4, va_coords=((5.0, 0.0),))
        pred_range = float(np.hypot(*(s.mean[4:6] - s.mean[:2])))
        out = update(s, [(1, 1)], [pred_range], [1e-4])
        assert np.abs(out.mean[:2] - s.mean[:2]).max() < 1e-5
        u = np.array([1.0, 0.0])  # VA direction from the agent
        var_before = u @ s.cov[:2, :2] @ u
        var_after = u @ out.cov[:2, :2] @ u
        assert var_after < 0.6 * var_before

    def test_no_associations_returns_prediction(self):
        s = basic_state()
        out = update(s, [], [], [])
        assert np.array_equal(out.mean, s.mean)
        assert np.array_equal(out.cov, s.cov)

    def test_posterior_trace_never_grows(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            coords = rng.uniform(-10, 10, size=(3, 2))
            s = basic_state(
                pos=rng.uniform(-2, 2, 2),
                vel=rng.uniform(-1, 1, 2),
                pos_var=rng.uniform(0.01, 1.0),
                va_coords=coords,
                va_var=rng.uniform(0.0, 0.01),
            )
            keys = [(1, i + 1) for i in range(3)]
            h_true = [
                float(np.hypot(*(s.mean[4 + 2 * i:6 + 2 * i] - s.mean[:2])))
                for i in range(3)
            ]
            ranges = [h + rng.normal(0, 0.05) for h in h_true]
            out = update(s, keys, ranges, [0.01, 0.02, 0.04])
            assert np.trace(out.cov) <= np.trace(s.cov) * (1 + 1e-9)

    def test_cov_symmetric_psd_after_steps(self):
        s = basic_state(va_var=0.0025)
        m = MotionModel(0.1, 0.5)
        rng = np.random.default_rng(3)
        for _ in range(30):
            s = predict(s, m)
            ranges = [
                float(np.hypot(*(s.mean[4 + 2 * i:6 + 2 * i] - s.mean[:2])))
                + rng.normal(0, 0.02)
                for i in range(2)
            ]
            s = update(s, [(1, 1), (1, 2)], ranges, [4e-4, 4e-4])
            assert np.allclose(s.cov, s.cov.T)
            assert np.linalg.eigvalsh(s.cov).min() >= -1e-10


class TestEntropy:
    def test_identity_agent_block(self):
        s = basic_state()
        s.cov[:4, :4] = np.eye(4)
        assert posterior_entropy(s) == pytest.approx(2 * math.log(2 * math.pi * math.e))

    def test_scaling_shifts_by_2_log_k(self):
        s = basic_state()
        s.cov[:4, :4] = np.eye(4)
        h1 = posterior_entropy(s)
        k = 0.3
        s.cov[:4, :4] = k * np.eye(4)
        assert posterior_entropy(s) == pytest.approx(h1 + 2 * math.log(k))

    def test_update_reduces_entropy(self):
        s = basic_state(va_coords=((8.0, 0.0), (0.0, 9.0)))
        h_before = posterior_entropy(s)
        ranges = [
            float(np.hypot(*(s.mean[4 + 2 * i:6 + 2 * i] - s.mean[:2])))
            for i in range(2)
        ]
        out = update(s, [(1, 1), (1, 2)], ranges, [1e-4, 1e-4])
        assert posterior_entropy(out) < h_before

    def test_full_state_entropy_larger_dimension(self):
        s = basic_state(va_var=0.01)
        assert posterior_entropy(s, agent_only=False) != posterior_entropy(s)


class TestRollout:
    def test_horizon_one_matches_real_update_covariance(self):
        s = basic_state(va_coords=((7.0, 1.0), (1.0, 9.0)), va_var=0.0025)
        m = MotionModel(0.1, 0.5)
        keys = [(1, 1), (1, 2)]
        vars_ = [2e-4, 5e-4]
        (cov_roll,) = predict_covariance_rollout(s, m, keys, vars_, 1)

        pred = predict(s, m)
        ranges = [
            float(np.hypot(*(pred.mean[4 + 2 * i:6 + 2 * i] - pred.mean[:2])))
            for i in range(2)
        ]
        real = update(pred, keys, ranges, vars_)
        assert np.abs(cov_roll - real.cov).max() < 1e-9

    def test_informationless_variances_reduce_to_prediction(self):
        s = basic_state()
        m = MotionModel(0.1, 0.5)
        covs = predict_covariance_rollout(
            s, m, [(1, 1), (1, 2)], [INFORMATIONLESS_VAR, np.inf], 3
        )
        ref = s
        for cov in covs:
            ref = predict(ref, m)
            assert np.abs(cov - ref.cov).max() < 1e-12

    def test_smaller_variances_give_smaller_trace(self):
        rng = np.random.default_rng(6)
        m = MotionModel(0.1, 0.5)
        for _ in range(100):
            coords = rng.uniform(-10, 10, size=(2, 2))
            s = basic_state(pos=rng.uniform(-2, 2, 2), va_coords=coords)
            base = rng.uniform(1e-4, 1e-2, size=2)
            lo = predict_covariance_rollout(s, m, [(1, 1), (1, 2)], base, 2)
            hi = predict_covariance_rollout(s, m, [(1, 1), (1, 2)], base * 10, 2)
            for c_lo, c_hi in zip(lo, hi):
                assert np.trace(c_lo) <= np.trace(c_hi) * (1 + 1e-9)


class TestInit:
    def test_keys_sorted_blocks_placed(self):
        vas = [
            VirtualAnchor(2, 1, Point2(1, 2), 0.01 * np.eye(2), 0, ()),
            VirtualAnchor(1, 2, Point2(3, 4), 0.04 * np.eye(2), 1, (1,)),
            VirtualAnchor(1, 1, Point2(5, 6), np.zeros((2, 2)), 0, ()),
        ]
        s = init_state(np.zeros(4), np.eye(4), vas)
        assert s.va_keys == ((1, 1), (1, 2), (2, 1))
        assert np.allclose(s.va_position((1, 2)), [3, 4])
        sl = s.va_slice((1, 2))
        assert np.allclose(s.cov[sl, sl], 0.04 * np.eye(2))
