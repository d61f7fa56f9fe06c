"""Cognitive multipath-assisted indoor navigation and tracking (MINT).

Synthesizes UWB multipath signals from floor-plan geometry, estimates and
associates multipath components, tracks an agent jointly with its
virtual-anchor map, and adapts the transmit carrier via reinforcement
learning to maximize position-related information.
"""

from .geometry import (
    SPEED_OF_LIGHT,
    FloorPlan,
    Point2,
    RangingDirectionMatrix,
    VirtualAnchor,
    Wall,
    angle_to,
    build_virtual_anchors,
    expected_delay,
    mirror_point,
    ranging_direction,
)
from .signal import (
    ChannelRealization,
    DmProfile,
    Pulse,
    ReceivedSignal,
    WaveformParams,
    dm_pdp,
    effective_bandwidth,
    make_pulse,
    synthesize_received,
    true_sinr,
    va_frequency_gain,
)
from .chest import MeasurementSet, MpcEstimate, matching_pursuit, residual_energy
from .uncertainty import (
    Efim,
    SingularGeometryError,
    SinrMemory,
    SinrTrack,
    crlb_position,
    efim,
    estimate_sinr_mom,
    gaussian_entropy,
    gdop,
    range_variance,
)
from .association import (
    AssociationResult,
    ClutterModel,
    associate,
    association_marginals,
    association_weights,
    local_likelihood,
    map_association,
    partition_sets,
)
from .tracker import (
    MotionModel,
    StackedState,
    init_state,
    posterior_entropy,
    predict,
    predict_covariance_rollout,
    unscented_update,
    update,
)
from .cognition import (
    ActionSpace,
    CognitiveController,
    PlanningSnapshot,
    PolicyPmf,
    RlParams,
    ValueTable,
    immediate_reward,
    learn,
    plan,
    select_action,
    update_policy_boltzmann,
    update_value,
)
from .harness import (
    MetricsSummary,
    RunResult,
    ScenarioConfig,
    emit_results,
    run_monte_carlo,
    run_pac_loop,
    summarize,
)

__version__ = "0.1.0"
