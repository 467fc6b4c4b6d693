"""Hierarchical reward: safety fuse, strategy-matrix layer, intensity
modifier, combined with the improvement signal as a weighted sum.

Layer priority: if the safety fuse fires for (risk, action), the matrix layer
is skipped entirely and contributes exactly 0. The weighted-sum form
``total = w_imp*improvement + w_match*match + w_safe*safety`` always holds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .domain import (
    Action,
    CognitiveLabels,
    DistortionType,
    Intensity,
    MatchKind,
    RiskLevel,
    classify_action,
)


@dataclass(frozen=True)
class RewardConfig:
    r_crisis_hit: float = 4.0
    r_crisis_miss: float = -1.0
    r_false_positive: float = -2.0
    r_gold: float = 1.8
    r_silver: float = 0.2
    r_mismatch: float = -0.5
    r_severe_bonus: float = 1.2
    r_mild_penalty: float = -0.8
    w_imp: float = 1.0
    w_match: float = 1.0
    w_safe: float = 1.0
    # When set, the crisis-miss reward becomes -p_risk_override (used by the
    # safety concentration sweep to dial the miss penalty).
    p_risk_override: Optional[float] = None

    def __post_init__(self):
        if not (self.r_gold > self.r_silver > self.r_mismatch):
            raise ValueError(
                "reward ordering violated: need r_gold > r_silver > r_mismatch, got "
                f"{self.r_gold}, {self.r_silver}, {self.r_mismatch}"
            )
        if self.p_risk_override is not None and self.p_risk_override < 0:
            raise ValueError(f"reward.p_risk_override must be >= 0, got {self.p_risk_override}")


@dataclass(frozen=True)
class RewardBreakdown:
    safety: float
    match: float
    improvement: float
    total: float
    fused: bool  # safety fuse fired


def safety_fuse(risk: RiskLevel, action: Action, cfg: RewardConfig) -> Optional[float]:
    """Top-priority layer. Returns the fuse reward, or None when it does not fire.

    High risk + A9 is a crisis hit; High risk + anything else is a missed
    intervention; A9 outside High risk is a false positive.
    """
    crisis = action is Action.CRISIS_INTERVENTION
    if risk is RiskLevel.HIGH:
        if crisis:
            return cfg.r_crisis_hit
        if cfg.p_risk_override is not None:
            return -cfg.p_risk_override
        return cfg.r_crisis_miss
    if crisis:
        return cfg.r_false_positive
    return None


def match_reward(
    d: Optional[DistortionType], i: Intensity, action: Action, cfg: RewardConfig
) -> float:
    """Strategy-matrix layer with the intensity modifier on gold matches.

    Callers must ensure the fuse did not fire; with no distortion present,
    A0 earns the silver reward and every other action the mismatch penalty.
    """
    kind = classify_action(d, action)
    if kind is MatchKind.GOLD:
        r = cfg.r_gold
        if i is Intensity.SEVERE:
            r += cfg.r_severe_bonus
        elif i is Intensity.MILD:
            r += cfg.r_mild_penalty
        return r
    if kind is MatchKind.SILVER:
        return cfg.r_silver
    return cfg.r_mismatch


def hybrid_reward(
    labels: CognitiveLabels, action: Action, improvement: int, cfg: RewardConfig
) -> RewardBreakdown:
    """Compose the per-step reward from its three channels."""
    fuse = safety_fuse(labels.risk, action, cfg)
    fused = fuse is not None
    safety = fuse if fused else 0.0
    match = 0.0 if fused else match_reward(labels.distortion, labels.intensity, action, cfg)
    imp = float(improvement)
    total = cfg.w_imp * imp + cfg.w_match * match + cfg.w_safe * safety
    return RewardBreakdown(
        safety=safety, match=match, improvement=imp, total=total, fused=fused
    )
