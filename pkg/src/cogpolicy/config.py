"""Run configuration: a flat ``section.key = value`` text format validated
against every module's invariants before any work starts.

Unknown keys are rejected with their full path. Scenario/intensity/risk prior
overrides are all-or-none per group so a partially specified distribution can
never slip through normalization.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .domain import DistortionType, Intensity, RiskLevel
from .encoding import EncoderConfig
from .env import EnvConfig, ScenarioDistribution, default_scenario_distribution
from .learner import LearnerConfig
from .rewards import RewardConfig


class ConfigError(ValueError):
    """A config problem, with the offending field path in the message."""


@dataclass(frozen=True)
class EvalConfig:
    repeats: int = 20
    natural: bool = False
    natural_samples: int = 2000

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError(f"eval.repeats must be >= 1, got {self.repeats}")
        if self.natural_samples < 1:
            raise ConfigError(f"eval.natural_samples must be >= 1, got {self.natural_samples}")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: str
    actors: int
    encoder: EncoderConfig
    env: EnvConfig
    scenario: ScenarioDistribution
    reward: RewardConfig
    learner: LearnerConfig
    eval: EvalConfig


_INT = "int"
_FLOAT = "float"
_STR = "str"
_BOOL = "bool"
_INT_LIST = "int_list"
_OPT_FLOAT = "opt_float"

_SCHEMA: Dict[str, str] = {
    "seed": _INT,
    "out_dir": _STR,
    "encoder.dim": _INT,
    "encoder.noise_sigma": _FLOAT,
    "env.actors": _INT,
    "env.max_turns": _INT,
    "env.p_improve_gold": _FLOAT,
    "env.p_improve_silver": _FLOAT,
    "env.p_improve_mismatch": _FLOAT,
    "env.p_worsen_mismatch": _FLOAT,
    "env.p_no_distortion": _FLOAT,
    "reward.r_crisis_hit": _FLOAT,
    "reward.r_crisis_miss": _FLOAT,
    "reward.r_false_positive": _FLOAT,
    "reward.r_gold": _FLOAT,
    "reward.r_silver": _FLOAT,
    "reward.r_mismatch": _FLOAT,
    "reward.r_severe_bonus": _FLOAT,
    "reward.r_mild_penalty": _FLOAT,
    "reward.w_imp": _FLOAT,
    "reward.w_match": _FLOAT,
    "reward.w_safe": _FLOAT,
    "reward.p_risk_override": _OPT_FLOAT,
    "learner.gamma": _FLOAT,
    "learner.batch_size": _INT,
    "learner.epsilon_start": _FLOAT,
    "learner.epsilon_end": _FLOAT,
    "learner.decay_steps": _INT,
    "learner.kl_beta": _FLOAT,
    "learner.temperature": _FLOAT,
    "learner.target_update_every": _INT,
    "learner.total_episodes": _INT,
    "learner.replay_capacity": _INT,
    "learner.learning_rate": _FLOAT,
    "learner.weight_decay": _FLOAT,
    "learner.hidden_dims": _INT_LIST,
    "learner.dropout": _FLOAT,
    "learner.grad_clip": _OPT_FLOAT,
    "learner.warmup_transitions": _INT,
    "learner.train_every": _INT,
    "learner.updates_per_step": _INT,
    "learner.metrics_interval": _INT,
    "eval.repeats": _INT,
    "eval.natural": _BOOL,
    "eval.natural_samples": _INT,
}
for _d in DistortionType:
    _SCHEMA[f"env.scenario.{_d.label}"] = _FLOAT
for _i in Intensity:
    _SCHEMA[f"env.intensity.{_i.label}"] = _FLOAT
for _r in RiskLevel:
    _SCHEMA[f"env.risk.{_r.label}"] = _FLOAT


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, raw: str):
    kind = _SCHEMA[key]
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _OPT_FLOAT:
            return None if raw.lower() in ("none", "off") else float(raw)
        if kind == _BOOL:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == _INT_LIST:
            return tuple(int(x.strip()) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _group(values: Dict[str, object], prefix: str, labels, from_label):
    """Collect an all-or-none override group keyed by enum labels."""
    present = {lab: values.get(f"{prefix}.{lab}") for lab in labels}
    given = {k: v for k, v in present.items() if v is not None}
    if not given:
        return None
    if len(given) != len(labels):
        missing = sorted(set(labels) - set(given))
        raise ConfigError(
            f"{prefix}.*: override group must be complete; missing {', '.join(missing)}"
        )
    return {from_label(lab): float(v) for lab, v in given.items()}


def build_run_config(values: Dict[str, str]) -> RunConfig:
    unknown = sorted(set(values) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    typed = {k: _coerce(k, v) for k, v in values.items()}

    def get(key: str, default):
        return typed.get(key, default)

    seed = int(get("seed", 0))
    try:
        encoder = EncoderConfig(
            dim=get("encoder.dim", 64),
            noise_sigma=get("encoder.noise_sigma", 0.0),
            seed=seed,
        )
        env = EnvConfig(
            max_turns=get("env.max_turns", 8),
            p_improve_gold=get("env.p_improve_gold", 0.8),
            p_improve_silver=get("env.p_improve_silver", 0.4),
            p_improve_mismatch=get("env.p_improve_mismatch", 0.05),
            p_worsen_mismatch=get("env.p_worsen_mismatch", 0.2),
            seed=seed,
        )
        reward = RewardConfig(
            r_crisis_hit=get("reward.r_crisis_hit", 4.0),
            r_crisis_miss=get("reward.r_crisis_miss", -1.0),
            r_false_positive=get("reward.r_false_positive", -2.0),
            r_gold=get("reward.r_gold", 1.8),
            r_silver=get("reward.r_silver", 0.2),
            r_mismatch=get("reward.r_mismatch", -0.5),
            r_severe_bonus=get("reward.r_severe_bonus", 1.2),
            r_mild_penalty=get("reward.r_mild_penalty", -0.8),
            w_imp=get("reward.w_imp", 1.0),
            w_match=get("reward.w_match", 1.0),
            w_safe=get("reward.w_safe", 1.0),
            p_risk_override=get("reward.p_risk_override", None),
        )
        learner = LearnerConfig(
            gamma=get("learner.gamma", 0.8),
            batch_size=get("learner.batch_size", 32),
            epsilon_start=get("learner.epsilon_start", 0.9),
            epsilon_end=get("learner.epsilon_end", 0.1),
            decay_steps=get("learner.decay_steps", 50_000),
            kl_beta=get("learner.kl_beta", 0.1),
            temperature=get("learner.temperature", 1.0),
            target_update_every=get("learner.target_update_every", 10),
            total_episodes=get("learner.total_episodes", 100_000),
            replay_capacity=get("learner.replay_capacity", 100_000),
            learning_rate=get("learner.learning_rate", 1e-4),
            weight_decay=get("learner.weight_decay", 0.01),
            hidden_dims=get("learner.hidden_dims", (256, 128)),
            dropout=get("learner.dropout", 0.1),
            grad_clip=get("learner.grad_clip", None),
            warmup_transitions=get("learner.warmup_transitions", 1_000),
            train_every=get("learner.train_every", 1),
            updates_per_step=get("learner.updates_per_step", 1),
            metrics_interval=get("learner.metrics_interval", 100),
            seed=seed,
        )
        eval_cfg = EvalConfig(
            repeats=get("eval.repeats", 20),
            natural=get("eval.natural", False),
            natural_samples=get("eval.natural_samples", 2000),
        )

        p_none = get("env.p_no_distortion", 0.0)
        type_probs = _group(typed, "env.scenario", [d.label for d in DistortionType], DistortionType.from_label)
        intensity_probs = _group(typed, "env.intensity", [i.label for i in Intensity], Intensity.from_label)
        risk_probs = _group(typed, "env.risk", [r.label for r in RiskLevel], RiskLevel.from_label)
        base = default_scenario_distribution(p_no_distortion=p_none)
        scenario = ScenarioDistribution(
            probabilities=type_probs if type_probs is not None else base.probabilities,
            p_no_distortion=p_none,
            intensity_probs=intensity_probs if intensity_probs is not None else base.intensity_probs,
            risk_probs=risk_probs if risk_probs is not None else base.risk_probs,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    actors = int(get("env.actors", 1))
    if actors < 1:
        raise ConfigError(f"env.actors must be >= 1, got {actors}")
    return RunConfig(
        seed=seed,
        out_dir=str(get("out_dir", "runs/latest")),
        actors=actors,
        encoder=encoder,
        env=env,
        scenario=scenario,
        reward=reward,
        learner=learner,
        eval=eval_cfg,
    )


def load_run_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return build_run_config(parse_config_text(f.read()))
