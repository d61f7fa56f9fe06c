"""Cognitive controller: entropy rewards, value-to-go learning and planning.

Actions are discrete carrier frequencies.  A real reward (scaled posterior
entropy change) updates the value-to-go for the applied action; planning
rolls the tracker covariance forward under hypothetical SINR-derived range
variances for a policy-sampled action subset and feeds back predicted
rewards.  The policy is a Boltzmann-updated PMF used for exploration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tracker import MotionModel, StackedState, predict_covariance_rollout
from .uncertainty import SinrMemory, gaussian_entropy

REWARD_DELTA_FLOOR = 1e-12
REWARD_DELTA_CEIL = 1e6
POLICY_FLOOR = 1e-12

REWARD_LOG_MAGNITUDE = "log-magnitude"
REWARD_PLAIN_DELTA = "delta"


@dataclass(frozen=True)
class ActionSpace:
    """Equidistant carrier-frequency grid with a fixed pulse duration."""

    fc_bins: np.ndarray
    pulse_duration: float

    def __post_init__(self):
        bins = np.asarray(self.fc_bins, dtype=float)
        if bins.size < 1:
            raise ValueError("action space needs at least one carrier")
        if bins.size > 1:
            gaps = np.diff(bins)
            if gaps.min() <= 0 or not np.allclose(gaps, gaps[0], rtol=1e-9):
                raise ValueError("carriers must be sorted and equidistant")
        object.__setattr__(self, "fc_bins", bins)

    @staticmethod
    def build(f_lo: float, spacing: float, count: int, pulse_duration: float):
        return ActionSpace(f_lo + spacing * np.arange(count), pulse_duration)

    @property
    def size(self) -> int:
        return self.fc_bins.size

    @property
    def spacing(self) -> float:
        return float(self.fc_bins[1] - self.fc_bins[0]) if self.size > 1 else 0.0

    def index_of(self, fc: float) -> int:
        i = int(np.argmin(np.abs(self.fc_bins - fc)))
        if abs(self.fc_bins[i] - fc) > 1e-3:
            raise ValueError(f"carrier {fc} Hz is not on the action grid")
        return i


@dataclass
class ValueTable:
    """Value-to-go per action."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value table must be finite")

    @staticmethod
    def zeros(n: int) -> "ValueTable":
        return ValueTable(np.zeros(n))


@dataclass
class PolicyPmf:
    """Probability mass function over the action grid."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("policy must be a normalized PMF")
        self.probs = p

    @staticmethod
    def uniform(n: int) -> "PolicyPmf":
        return PolicyPmf(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class RlParams:
    learn_rate: float = 0.3
    discount: float = 0.8
    epsilon: float = 0.1
    temperature: float = 1.0
    horizon: int = 1
    plan_subset: int = 20
    reward_kind: str = REWARD_LOG_MAGNITUDE

    def __post_init__(self):
        if not 0.0 < self.learn_rate <= 1.0:
            raise ValueError("learn_rate must be in (0, 1]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.plan_subset < 0:
            raise ValueError("plan_subset must be >= 0")
        if self.reward_kind not in (REWARD_LOG_MAGNITUDE, REWARD_PLAIN_DELTA):
            raise ValueError(f"unknown reward kind {self.reward_kind!r}")


@dataclass
class PlanningSnapshot:
    """Frozen tracker view handed to the planner."""

    state: StackedState
    motion: MotionModel
    va_keys: tuple  # VAs expected to deliver measurements
    beta: float
    current_entropy: float


def immediate_reward(
    h_prev: float, h_curr: float, kind: str = REWARD_LOG_MAGNITUDE
) -> float:
    """Scaled posterior-entropy change: sign(dh) * |log|dh|| (or plain dh)."""
    dh = h_prev - h_curr
    if dh == 0.0:
        return 0.0
    if kind == REWARD_PLAIN_DELTA:
        return dh
    mag = min(max(abs(dh), REWARD_DELTA_FLOOR), REWARD_DELTA_CEIL)
    return math.copysign(abs(math.log(mag)), dh)


def update_value(
    table: ValueTable,
    action: int,
    expected_reward: float,
    pi: PolicyPmf,
    params: RlParams,
) -> ValueTable:
    """Recursive value-to-go update of one action entry."""
    j = table.values.copy()
    cont = params.discount * float(pi.probs @ j)
    j[action] += params.learn_rate * (expected_reward + cont - j[action])
    return ValueTable(j)


def learn(
    table: ValueTable,
    applied_action: int,
    measured_reward: float,
    pi: PolicyPmf,
    params: RlParams,
) -> ValueTable:
    """Incorporate the real reward observed for the applied action."""
    return update_value(table, applied_action, measured_reward, pi, params)


def plan(
    table: ValueTable,
    pi: PolicyPmf,
    snapshot: PlanningSnapshot,
    memory: SinrMemory,
    params: RlParams,
    rng: np.random.Generator,
) -> ValueTable:
    """Update the value table with model-predicted rewards.

    Samples a subset of actions from the policy (without replacement); for
    each, queries the SINR memory at that carrier bin, rolls the tracker
    covariance forward and converts the predicted entropy trajectory into a
    discounted reward sum.
    """
    n = table.values.size
    size = min(params.plan_subset, n)
    if size == 0:
        return ValueTable(table.values.copy())
    chosen = rng.choice(n, size=size, replace=False, p=pi.probs)
    chosen.sort()  # deterministic merge order

    out = table
    for action in chosen:
        hyp_vars = [
            memory.range_var(key, int(action), snapshot.beta)
            for key in snapshot.va_keys
        ]
        covs = predict_covariance_rollout(
            snapshot.state,
            snapshot.motion,
            snapshot.va_keys,
            hyp_vars,
            params.horizon,
        )
        h_prev = snapshot.current_entropy
        reward = 0.0
        for step, cov in enumerate(covs, start=1):
            h_step = gaussian_entropy(cov[:4, :4])
            reward += params.discount ** step * immediate_reward(
                h_prev, h_step, params.reward_kind
            )
            h_prev = h_step
        out = update_value(out, int(action), reward, pi, params)
    return out


def update_policy_boltzmann(
    pi: PolicyPmf, delta_values: np.ndarray, temperature: float
) -> PolicyPmf:
    """Multiplicative Boltzmann policy update on value-to-go changes."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(delta_values, dtype=float) / temperature
    z = z - z.max()  # common factor, cancels in the normalization
    raw = np.maximum(pi.probs * np.exp(z), POLICY_FLOOR)
    return PolicyPmf(raw / raw.sum())


def select_action(
    pi: PolicyPmf, table: ValueTable, params: RlParams, rng: np.random.Generator
) -> int:
    """Epsilon-greedy choice: explore from the policy, exploit the argmax."""
    if rng.random() < params.epsilon:
        return int(rng.choice(pi.probs.size, p=pi.probs))
    return int(np.argmax(table.values))  # first max = lowest carrier


class CognitiveController:
    """Bundles value table, policy and SINR-memory-driven planning."""

    def __init__(
        self,
        space: ActionSpace,
        params: RlParams,
        rng: np.random.Generator,
        initial_action: int = 0,
    ):
        self.space = space
        self.params = params
        self.rng = rng
        self.table = ValueTable.zeros(space.size)
        self.policy = PolicyPmf.uniform(space.size)
        self.action = initial_action
        self._prev_values = self.table.values.copy()

    def finish_cycle(
        self,
        measured_reward: float,
        snapshot: Optional[PlanningSnapshot],
        memory: SinrMemory,
    ) -> int:
        """Learn, plan, refresh the policy and pick the next action."""
        self.table = learn(
            self.table, self.action, measured_reward, self.policy, self.params
        )
        if snapshot is not None:
            self.table = plan(
                self.table, self.policy, snapshot, memory, self.params, self.rng
            )
        delta = self.table.values - self._prev_values
        self.policy = update_policy_boltzmann(
            self.policy, delta, self.params.temperature
        )
        self._prev_values = self.table.values.copy()
        self.action = select_action(self.policy, self.table, self.params, self.rng)
        return self.action
