"""Value-based intervention-policy learning for simulated counseling.

Subpackages cover the domain vocabulary and strategy matrix, the state
encoder, the seeker environment, the hierarchical reward, the Q-network and
its learner, safety and strategy-matching analysis, the dual-stream masked
loss, dataset statistics, and the CLI.
"""

from .domain import (
    Action,
    CognitiveLabels,
    DistortionType,
    Intensity,
    MatchKind,
    RiskLevel,
    classify_action,
    gold_strategy,
    silver_strategies,
)
from .encoding import EncoderConfig, encode_state
from .env import (
    EnvConfig,
    EpisodeState,
    ScenarioDistribution,
    Transition,
    default_scenario_distribution,
    run_actors,
)
from .learner import LearnerConfig, LossBreakdown, MetricsTrace, ReplayBuffer, train
from .network import AdamW, QNetwork, hard_update, load_checkpoint, save_checkpoint
from .rewards import RewardBreakdown, RewardConfig, hybrid_reward, match_reward, safety_fuse
from .safety import (
    SafetyReport,
    boltzmann_policy,
    crisis_metrics,
    hrmdr,
    safety_advantage,
    safety_concentration_sweep,
)

__version__ = "0.1.0"
