"""Scenario configuration, the perception-action loop and the Monte Carlo driver.

One perception-action cycle per trajectory step: synthesize the received
signals with the current waveform, extract MPC ranges, predict the tracker,
associate ranges to VAs per anchor, update the tracker jointly, refresh the
SINR memory, and (in cognitive mode) learn/plan/select the next carrier.
Monte Carlo runs are seeded independently and may execute in parallel with
results identical to serial execution.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import association, chest, cognition, signal, tracker
from .geometry import (
    SPEED_OF_LIGHT,
    FloorPlan,
    Point2,
    VirtualAnchor,
    build_virtual_anchors,
)
from .uncertainty import SinrMemory

MODE_FIXED = "fixed"
MODE_COGNITIVE = "cognitive"

CSV_HEADER = (
    "run_id,step,truth_x,truth_y,est_x,est_y,error_m,"
    "entropy_nats,fc_hz,n_assoc,reward"
)

# measurements this much weaker than the scan maximum are ignored when
# picking the earliest arrival for the trilateration fix
LOS_PICK_REL_AMPLITUDE = 0.25


def _from_dict(cls, data):
    data = data or {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: v for k, v in data.items() if k in names})


@dataclass(frozen=True)
class TrajectoryConfig:
    waypoints: tuple = ((1.2, 1.2), (4.8, 1.6), (5.0, 6.6), (1.5, 7.2))
    n_steps: int = 200
    smoothing_rounds: int = 3  # corner-cutting passes before resampling

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("trajectory needs at least 2 steps")
        object.__setattr__(
            self, "waypoints", tuple(tuple(map(float, w)) for w in self.waypoints)
        )


@dataclass(frozen=True)
class WaveformConfig:
    pulse_duration: float = 0.5e-9
    sample_rate: float = 16e9
    duration: float = 100e-9
    band_lo_hz: float = 6.0e9
    spacing_hz: float = 50e6
    n_actions: int = 40
    initial_fc_hz: float = 7.0e9

    @property
    def band_hi_hz(self) -> float:
        return self.band_lo_hz + self.spacing_hz * (self.n_actions - 1)


@dataclass(frozen=True)
class DmConfig:
    enabled: bool = True
    omega1: float = 1.1615e-8
    gamma1: float = 20e-9
    gamma_rise: float = 5e-9
    chi: float = 0.98
    carrier_hz: float = 7.0e9
    bandwidth_hz: float = 2.0e9
    active_steps: tuple = (80, 140)  # inclusive step interval

    def active_at(self, step: int) -> bool:
        return self.enabled and self.active_steps[0] <= step <= self.active_steps[1]


@dataclass(frozen=True)
class ClutterConfig:
    detect_prob: float = 0.95
    mean_rate: float = 2.0


@dataclass(frozen=True)
class EstimationConfig:
    n_mpc: int = 12
    w_past: int = 40
    w_init: int = 10
    sigma_d_init: float = 0.3
    gate_prob: float = 0.5


@dataclass(frozen=True)
class TrackerConfig:
    dt: float = 0.1
    sigma_a: float = 1.0
    init_pos_var: float = 1.0
    init_vel_var: float = 0.5


@dataclass(frozen=True)
class RlConfig:
    learn_rate: float = 0.3
    discount: float = 0.8
    epsilon: float = 0.1
    temperature: float = 1.0
    horizon: int = 1
    plan_subset: int = 20
    reward_kind: str = cognition.REWARD_LOG_MAGNITUDE

    def to_params(self) -> cognition.RlParams:
        return cognition.RlParams(
            self.learn_rate,
            self.discount,
            self.epsilon,
            self.temperature,
            self.horizon,
            self.plan_subset,
            self.reward_kind,
        )


@dataclass(frozen=True)
class MonteCarloConfig:
    runs: int = 30
    base_seed: int = 20260809


@dataclass(frozen=True)
class ScenarioConfig:
    floor_plan: tuple = (
        ((0.0, 0.0), (6.0, 0.0)),
        ((6.0, 0.0), (6.0, 8.0)),
        ((6.0, 8.0), (0.0, 8.0)),
        ((0.0, 8.0), (0.0, 0.0)),
    )
    anchors: tuple = ((0.5, 7.0), (5.2, 3.2))
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    va_max_order: int = 2
    va_position_std: float = 0.05
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    dm: DmConfig = field(default_factory=DmConfig)
    noise_psd: float = 4e-13
    ref_gain: float = 3e-4
    clutter: ClutterConfig = field(default_factory=ClutterConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    scenario_seed: int = 777
    mode: str = MODE_COGNITIVE

    def __post_init__(self):
        if self.mode not in (MODE_FIXED, MODE_COGNITIVE):
            raise ValueError(f"mode must be fixed or cognitive, got {self.mode!r}")
        if len(self.anchors) < 2:
            raise ValueError("at least two anchors are required")
        object.__setattr__(
            self, "anchors", tuple(tuple(map(float, a)) for a in self.anchors)
        )
        object.__setattr__(
            self,
            "floor_plan",
            tuple(tuple(tuple(map(float, p)) for p in w) for w in self.floor_plan),
        )
        plan = self.build_floor_plan()
        xmin, ymin, xmax, ymax = plan.bounding_box()
        for x, y in self.trajectory.waypoints:
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                raise ValueError(
                    f"trajectory waypoint ({x}, {y}) outside the room bounding box"
                )
        # the initial carrier must sit on the action grid
        self.action_space().index_of(self.waveform.initial_fc_hz)

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        data = dict(data or {})
        nested = {
            "trajectory": TrajectoryConfig,
            "waveform": WaveformConfig,
            "dm": DmConfig,
            "clutter": ClutterConfig,
            "estimation": EstimationConfig,
            "tracker": TrackerConfig,
            "rl": RlConfig,
            "monte_carlo": MonteCarloConfig,
        }
        kwargs = {}
        for key, cls in nested.items():
            if key in data:
                sub = data.pop(key)
                if "active_steps" in (sub or {}):
                    sub = dict(sub)
                    sub["active_steps"] = tuple(sub["active_steps"])
                kwargs[key] = _from_dict(cls, sub)
        for key in ("floor_plan", "anchors", "va_max_order", "va_position_std",
                    "noise_psd", "ref_gain", "scenario_seed", "mode"):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return ScenarioConfig(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)

    def build_floor_plan(self) -> FloorPlan:
        return FloorPlan.from_segments(self.floor_plan)

    def action_space(self) -> cognition.ActionSpace:
        return cognition.ActionSpace.build(
            self.waveform.band_lo_hz,
            self.waveform.spacing_hz,
            self.waveform.n_actions,
            self.waveform.pulse_duration,
        )

    def build_vas(self) -> dict:
        """anchor_id (1-based) -> list of VirtualAnchor."""
        plan = self.build_floor_plan()
        out = {}
        for j, (x, y) in enumerate(self.anchors, start=1):
            out[j] = build_virtual_anchors(
                plan, Point2(x, y), j, self.va_max_order, self.va_position_std
            )
        return out


@dataclass
class RunResult:
    seed: int
    mode: str
    truth: np.ndarray  # (n, 2)
    estimate: np.ndarray  # (n, 2)
    error: np.ndarray
    entropy: np.ndarray
    fc_hz: np.ndarray
    n_assoc: np.ndarray
    reward: np.ndarray

    def n_steps(self) -> int:
        return self.truth.shape[0]


@dataclass
class MetricsSummary:
    sorted_errors: np.ndarray
    quantiles: dict
    mean_error: float
    median_error: float
    entropy_mean: np.ndarray  # per step, over runs
    entropy_std: np.ndarray
    carrier_mean_hz: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n_errors": int(self.sorted_errors.size),
            "quantiles": {k: float(v) for k, v in self.quantiles.items()},
            "mean_error_m": float(self.mean_error),
            "median_error_m": float(self.median_error),
            "entropy_mean_nats": [float(v) for v in self.entropy_mean],
            "entropy_std_nats": [float(v) for v in self.entropy_std],
            "carrier_mean_hz": [float(v) for v in self.carrier_mean_hz],
        }


def chaikin_smooth(points: np.ndarray, rounds: int) -> np.ndarray:
    """Corner-cutting smoothing keeping the end points."""
    pts = np.asarray(points, dtype=float)
    for _ in range(rounds):
        if len(pts) < 3:
            break
        q = 0.75 * pts[:-1] + 0.25 * pts[1:]
        r = 0.25 * pts[:-1] + 0.75 * pts[1:]
        mid = np.empty((2 * (len(pts) - 1), 2))
        mid[0::2] = q
        mid[1::2] = r
        pts = np.vstack([pts[:1], mid, pts[-1:]])
    return pts


def build_trajectory(cfg: TrajectoryConfig) -> np.ndarray:
    """Arc-length resampling of the (smoothed) waypoint polyline."""
    pts = chaikin_smooth(np.asarray(cfg.waypoints, dtype=float),
                         cfg.smoothing_rounds)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], cfg.n_steps)
    x = np.interp(target, s, pts[:, 0])
    y = np.interp(target, s, pts[:, 1])
    return np.column_stack([x, y])


def trilaterate(
    r1: float, r2: float, a1: Point2, a2: Point2, bbox: tuple
) -> Point2:
    """Two-circle intersection; ambiguity resolved toward the room interior."""
    base = a2.as_array() - a1.as_array()
    d = float(np.linalg.norm(base))
    if d == 0:
        raise ValueError("anchors coincide")
    ex = base / d
    ey = np.array([-ex[1], ex[0]])
    x = (d ** 2 + r1 ** 2 - r2 ** 2) / (2 * d)
    h = math.sqrt(max(r1 ** 2 - x ** 2, 0.0))
    c1 = a1.as_array() + x * ex + h * ey
    c2 = a1.as_array() + x * ex - h * ey
    xmin, ymin, xmax, ymax = bbox
    center = np.array([(xmin + xmax) / 2, (ymin + ymax) / 2])

    def inside(p):
        return xmin - 0.5 <= p[0] <= xmax + 0.5 and ymin - 0.5 <= p[1] <= ymax + 0.5

    cands = [c for c in (c1, c2) if inside(c)] or [c1, c2]
    best = min(cands, key=lambda c: float(np.linalg.norm(c - center)))
    return Point2(float(best[0]), float(best[1]))


def _los_range(estimates: Sequence[chest.MpcEstimate]) -> float:
    """Earliest arrival among the non-negligible amplitudes."""
    peak = max(abs(e.amplitude_hat) for e in estimates)
    good = [e for e in estimates if abs(e.amplitude_hat) >= LOS_PICK_REL_AMPLITUDE * peak]
    return min(good, key=lambda e: e.delay_hat).range_hat


def _state_va_view(state: tracker.StackedState, geometry: dict) -> dict:
    """VAs with mean/cov taken from the current tracker state."""
    out = {}
    for anchor_id, vas in geometry.items():
        cur = []
        for va in vas:
            sl = state.va_slice(va.key)
            mean = state.mean[sl]
            cov = state.cov[sl, sl]
            cur.append(
                VirtualAnchor(
                    va.anchor_id,
                    va.va_index,
                    Point2(float(mean[0]), float(mean[1])),
                    0.5 * (cov + cov.T),
                    va.order,
                    va.wall_sequence,
                )
            )
        out[anchor_id] = cur
    return out


def run_pac_loop(cfg: ScenarioConfig, run_seed: int) -> RunResult:
    """Run one full trajectory and return the per-step record."""
    plan = cfg.build_floor_plan()
    bbox = plan.bounding_box()
    geometry = cfg.build_vas()
    space = cfg.action_space()
    wf_cfg = cfg.waveform
    pulse = signal.make_pulse(
        signal.WaveformParams(wf_cfg.pulse_duration, wf_cfg.initial_fc_hz),
        wf_cfg.sample_rate,
    )
    beta = pulse.rms_bandwidth
    traj = build_trajectory(cfg.trajectory)
    n_steps = traj.shape[0]
    motion = tracker.MotionModel(cfg.tracker.dt, cfg.tracker.sigma_a)
    clutter = association.ClutterModel(
        cfg.clutter.mean_rate,
        1.0 / (SPEED_OF_LIGHT * wf_cfg.duration),
        cfg.clutter.detect_prob,
    )
    memory = SinrMemory(
        window_size=cfg.estimation.w_past,
        min_samples=cfg.estimation.w_init,
        default_range_std=cfg.estimation.sigma_d_init,
        bin_spacing_hz=wf_cfg.spacing_hz,
    )
    root = np.random.SeedSequence(run_seed)
    chan_ss, ctrl_ss = root.spawn(2)
    chan_rng = np.random.default_rng(chan_ss)
    params = cfg.rl.to_params()
    controller = cognition.CognitiveController(
        space, params, np.random.default_rng(ctrl_ss),
        initial_action=space.index_of(wf_cfg.initial_fc_hz),
    )

    anchor_points = [Point2(x, y) for x, y in cfg.anchors]
    anchor_ids = sorted(geometry)

    truth = traj
    estimate = np.zeros_like(traj)
    error = np.zeros(n_steps)
    entropy = np.zeros(n_steps)
    fc_trace = np.zeros(n_steps)
    n_assoc = np.zeros(n_steps, dtype=int)
    rewards = np.zeros(n_steps)

    action = controller.action
    state = None
    h_prev = 0.0

    for step in range(n_steps):
        p_true = Point2(float(traj[step, 0]), float(traj[step, 1]))
        wf = signal.WaveformParams(wf_cfg.pulse_duration, float(space.fc_bins[action]))

        measurements = {}
        for j in anchor_ids:
            prof = None
            if cfg.dm.active_at(step):
                los = p_true.distance_to(anchor_points[j - 1]) / SPEED_OF_LIGHT
                prof = signal.DmProfile(
                    cfg.dm.omega1,
                    cfg.dm.gamma1,
                    cfg.dm.gamma_rise,
                    cfg.dm.chi,
                    los,
                    cfg.dm.carrier_hz,
                    cfg.dm.bandwidth_hz,
                )
            rx = signal.synthesize_received(
                p_true,
                geometry[j],
                wf,
                prof,
                cfg.noise_psd,
                wf_cfg.duration,
                chan_rng,
                wf_cfg.sample_rate,
                cfg.scenario_seed,
                cfg.ref_gain,
            )
            measurements[j] = chest.matching_pursuit(rx, pulse, cfg.estimation.n_mpc)

        if state is None:
            # first fix: earliest strong arrival per anchor, two-circle solve
            fix = trilaterate(
                _los_range(measurements[anchor_ids[0]]),
                _los_range(measurements[anchor_ids[1]]),
                anchor_points[0],
                anchor_points[1],
                bbox,
            )
            agent_mean = np.array([fix.x, fix.y, 0.0, 0.0])
            agent_cov = np.diag([
                cfg.tracker.init_pos_var,
                cfg.tracker.init_pos_var,
                cfg.tracker.init_vel_var,
                cfg.tracker.init_vel_var,
            ])
            all_vas = [va for j in anchor_ids for va in geometry[j]]
            state = tracker.init_state(agent_mean, agent_cov, all_vas)
            pairs = []
        else:
            state = tracker.predict(state, motion)
            pred_p = Point2(*state.agent_position)
            va_view = _state_va_view(state, geometry)
            pairs = []  # (va_key, measured range, range variance, amplitude)
            for j in anchor_ids:
                vas_j = va_view[j]
                ests = measurements[j]
                sigma2s = [
                    memory.range_var(va.key, action, beta) for va in vas_j
                ]
                result = association.associate(
                    pred_p,
                    vas_j,
                    [e.range_hat for e in ests],
                    sigma2s,
                    clutter,
                    cfg.estimation.gate_prob,
                )
                for k, m in enumerate(result.map_assignment):
                    if m > 0:
                        pairs.append(
                            (
                                vas_j[k].key,
                                ests[m - 1].range_hat,
                                sigma2s[k],
                                ests[m - 1].amplitude_hat,
                            )
                        )
            if pairs:
                state = tracker.update(
                    state,
                    [p[0] for p in pairs],
                    [p[1] for p in pairs],
                    [p[2] for p in pairs],
                )

        for key, _y, _var, amp in pairs:
            memory.record(key, action, amp)

        h_now = tracker.posterior_entropy(state)
        est_p = state.agent_position
        estimate[step] = est_p
        error[step] = float(np.hypot(est_p[0] - traj[step, 0], est_p[1] - traj[step, 1]))
        entropy[step] = h_now
        fc_trace[step] = space.fc_bins[action]
        n_assoc[step] = len(pairs)
        reward = 0.0 if step == 0 else cognition.immediate_reward(
            h_prev, h_now, params.reward_kind
        )
        rewards[step] = reward
        h_prev = h_now

        if cfg.mode == MODE_COGNITIVE:
            if step == 0:
                action = controller.action  # nothing learned yet
            else:
                snapshot = cognition.PlanningSnapshot(
                    state,
                    motion,
                    tuple(p[0] for p in pairs),
                    beta,
                    h_now,
                )
                action = controller.finish_cycle(reward, snapshot, memory)
        # fixed mode keeps the initial carrier

    return RunResult(
        run_seed, cfg.mode, truth.copy(), estimate, error, entropy,
        fc_trace, n_assoc, rewards,
    )


def summarize(results: Sequence[RunResult],
              quantiles: Sequence[float] = (0.5, 0.9, 0.95)) -> MetricsSummary:
    errors = np.sort(np.concatenate([r.error for r in results]))
    q = {f"{p:g}": float(np.quantile(errors, p)) for p in quantiles}
    entropy = np.vstack([r.entropy for r in results])
    carriers = np.vstack([r.fc_hz for r in results])
    return MetricsSummary(
        errors,
        q,
        float(errors.mean()),
        float(np.median(errors)),
        entropy.mean(axis=0),
        entropy.std(axis=0),
        carriers.mean(axis=0),
    )


def _run_one(args) -> RunResult:
    cfg_dict, seed = args
    return run_pac_loop(ScenarioConfig.from_dict(cfg_dict), seed)


def run_monte_carlo(
    cfg: ScenarioConfig,
    n_runs: Optional[int] = None,
    n_workers: int = 1,
) -> Tuple[List[RunResult], MetricsSummary]:
    """Seeded runs base_seed + i; parallel execution matches serial output."""
    runs = cfg.monte_carlo.runs if n_runs is None else n_runs
    if runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = [cfg.monte_carlo.base_seed + i for i in range(runs)]
    if n_workers > 1:
        payload = [(cfg.to_dict(), s) for s in seeds]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_one, payload))
    else:
        results = [run_pac_loop(cfg, s) for s in seeds]
    return results, summarize(results)


def emit_results(
    results: Sequence[RunResult],
    summary: MetricsSummary,
    cfg: ScenarioConfig,
    out_dir: str,
):
    """Write runs.csv, summary.json and config_resolved.json."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "runs.csv")
    try:
        with open(csv_path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for run_id, r in enumerate(results):
                for step in range(r.n_steps()):
                    row = (
                        f"{run_id},{step},"
                        f"{r.truth[step, 0]!r},{r.truth[step, 1]!r},"
                        f"{r.estimate[step, 0]!r},{r.estimate[step, 1]!r},"
                        f"{r.error[step]!r},{r.entropy[step]!r},"
                        f"{r.fc_hz[step]!r},{int(r.n_assoc[step])},"
                        f"{r.reward[step]!r}"
                    )
                    fh.write(row + "\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out_dir, "config_resolved.json"), "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing results under {out_dir!r}: {exc}") from exc
    return csv_path


def load_errors(csv_path: str) -> np.ndarray:
    """Position errors from a runs.csv written by emit_results."""
    try:
        data = np.genfromtxt(csv_path, delimiter=",", names=True)
    except OSError as exc:
        raise OSError(f"cannot read {csv_path!r}: {exc}") from exc
    return np.atleast_1d(data["error_m"])
