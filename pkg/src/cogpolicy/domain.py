"""Core domain vocabulary: distortion taxonomy, intervention actions, and the
gold/silver strategy matrix.

All enums carry a stable integer index (used in state encodings and binary
checkpoints) and a stable CamelCase wire name (used in JSONL records, CSV
reports, and config files). Both are frozen; serialized artifacts depend on
them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class DistortionType(enum.IntEnum):
    """The eight distortion categories, indexed 0-7."""

    EMOTIONAL_REASONING = 0
    CATASTROPHIZING = 1
    ALL_OR_NOTHING = 2
    PERSONALIZATION = 3
    LABELING = 4
    OVERGENERALIZATION = 5
    MIND_READING = 6
    SHOULD_STATEMENTS = 7

    @property
    def label(self) -> str:
        return _DISTORTION_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "DistortionType":
        try:
            return _DISTORTION_BY_LABEL[label]
        except KeyError:
            raise ValueError(f"unknown distortion type: {label!r}") from None


_DISTORTION_LABELS = {
    DistortionType.EMOTIONAL_REASONING: "EmotionalReasoning",
    DistortionType.CATASTROPHIZING: "Catastrophizing",
    DistortionType.ALL_OR_NOTHING: "AllOrNothing",
    DistortionType.PERSONALIZATION: "Personalization",
    DistortionType.LABELING: "Labeling",
    DistortionType.OVERGENERALIZATION: "Overgeneralization",
    DistortionType.MIND_READING: "MindReading",
    DistortionType.SHOULD_STATEMENTS: "ShouldStatements",
}
_DISTORTION_BY_LABEL = {v: k for k, v in _DISTORTION_LABELS.items()}


class Intensity(enum.IntEnum):
    """Distortion severity; totally ordered Mild < Moderate < Severe."""

    MILD = 0
    MODERATE = 1
    SEVERE = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "Intensity":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown intensity: {label!r}") from None


class RiskLevel(enum.IntEnum):
    """Clinical risk; totally ordered Low < Medium < High."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "RiskLevel":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown risk level: {label!r}") from None


class Action(enum.IntEnum):
    """The ten intervention strategies. A9 is the sole crisis/safe action."""

    EMPATHIC_VALIDATION = 0
    FINDING_THE_GRAY = 1
    EXAMINE_THE_EVIDENCE = 2
    REALITY_TESTING = 3
    DE_CATASTROPHIZING = 4
    COST_BENEFIT_ANALYSIS = 5
    REATTRIBUTION = 6
    BEHAVIOR_VS_IDENTITY = 7
    FEELINGS_VS_FACTS = 8
    CRISIS_INTERVENTION = 9

    @property
    def code(self) -> str:
        """Canonical short identifier A0..A9 (authoritative in serialized records)."""
        return f"A{int(self)}"

    @property
    def label(self) -> str:
        return _ACTION_LABELS[self]

    @classmethod
    def from_code(cls, code: str) -> "Action":
        if len(code) == 2 and code[0] == "A" and code[1].isdigit():
            return cls(int(code[1]))
        raise ValueError(f"unknown action code: {code!r}")


_ACTION_LABELS = {
    Action.EMPATHIC_VALIDATION: "EmpathicValidation",
    Action.FINDING_THE_GRAY: "FindingTheGray",
    Action.EXAMINE_THE_EVIDENCE: "ExamineTheEvidence",
    Action.REALITY_TESTING: "RealityTesting",
    Action.DE_CATASTROPHIZING: "DeCatastrophizing",
    Action.COST_BENEFIT_ANALYSIS: "CostBenefitAnalysis",
    Action.REATTRIBUTION: "Reattribution",
    Action.BEHAVIOR_VS_IDENTITY: "BehaviorVsIdentity",
    Action.FEELINGS_VS_FACTS: "FeelingsVsFacts",
    Action.CRISIS_INTERVENTION: "CrisisIntervention",
}

N_ACTIONS = 10
SAFE_ACTIONS = frozenset({Action.CRISIS_INTERVENTION})


@dataclass(frozen=True)
class StrategyEntry:
    gold: Action
    silvers: frozenset


def _entry(gold: Action, *silvers: Action) -> StrategyEntry:
    return StrategyEntry(gold=gold, silvers=frozenset(silvers))


# Optimal (gold) and acceptable-alternative (silver) interventions per
# distortion type. A9 never appears here: it is reachable only through the
# safety fuse.
STRATEGY_MATRIX = {
    DistortionType.ALL_OR_NOTHING: _entry(
        Action.FINDING_THE_GRAY,
        Action.FEELINGS_VS_FACTS,
        Action.EXAMINE_THE_EVIDENCE,
    ),
    DistortionType.OVERGENERALIZATION: _entry(
        Action.EXAMINE_THE_EVIDENCE,
        Action.EMPATHIC_VALIDATION,
        Action.FINDING_THE_GRAY,
    ),
    DistortionType.CATASTROPHIZING: _entry(
        Action.DE_CATASTROPHIZING,
        Action.EMPATHIC_VALIDATION,
        Action.EXAMINE_THE_EVIDENCE,
    ),
    DistortionType.MIND_READING: _entry(
        Action.REALITY_TESTING,
        Action.EMPATHIC_VALIDATION,
        Action.FEELINGS_VS_FACTS,
    ),
    DistortionType.EMOTIONAL_REASONING: _entry(
        Action.FEELINGS_VS_FACTS,
        Action.EMPATHIC_VALIDATION,
        Action.REALITY_TESTING,
    ),
    DistortionType.SHOULD_STATEMENTS: _entry(
        Action.COST_BENEFIT_ANALYSIS,
        Action.EMPATHIC_VALIDATION,
        Action.BEHAVIOR_VS_IDENTITY,
    ),
    DistortionType.PERSONALIZATION: _entry(
        Action.REATTRIBUTION,
        Action.EMPATHIC_VALIDATION,
        Action.REALITY_TESTING,
    ),
    DistortionType.LABELING: _entry(
        Action.BEHAVIOR_VS_IDENTITY,
        Action.EMPATHIC_VALIDATION,
        Action.COST_BENEFIT_ANALYSIS,
    ),
}


def gold_strategy(d: DistortionType) -> Action:
    """The unique optimal intervention for a distortion type."""
    return STRATEGY_MATRIX[d].gold


def silver_strategies(d: DistortionType) -> frozenset:
    """The two acceptable-alternative interventions for a distortion type."""
    return STRATEGY_MATRIX[d].silvers


class MatchKind(enum.Enum):
    """How an action relates to the matrix for a given (possibly absent) distortion."""

    GOLD = "gold"
    SILVER = "silver"
    MISMATCH = "mismatch"


def classify_action(d: Optional[DistortionType], action: Action) -> MatchKind:
    """Classify an action against the strategy matrix.

    With no distortion present, plain validation (A0) counts as silver and
    every other action as a mismatch; A9 is never a matrix match.
    """
    if d is None:
        if action is Action.EMPATHIC_VALIDATION:
            return MatchKind.SILVER
        return MatchKind.MISMATCH
    entry = STRATEGY_MATRIX[d]
    if action is entry.gold:
        return MatchKind.GOLD
    if action in entry.silvers:
        return MatchKind.SILVER
    return MatchKind.MISMATCH


@dataclass(frozen=True)
class CognitiveLabels:
    """The seeker-state label triple.

    ``distortion`` is None for no-distortion control states, in which case
    ``intensity`` is ignored by every consumer.
    """

    distortion: Optional[DistortionType]
    intensity: Intensity
    risk: RiskLevel

    def to_dict(self) -> dict:
        present = self.distortion is not None
        return {
            "distortion": self.distortion.label if present else None,
            "intensity": self.intensity.label if present else None,
            "risk": self.risk.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CognitiveLabels":
        raw = d.get("distortion")
        distortion = DistortionType.from_label(raw) if raw is not None else None
        raw_i = d.get("intensity")
        intensity = Intensity.from_label(raw_i) if raw_i is not None else Intensity.MILD
        return cls(
            distortion=distortion,
            intensity=intensity,
            risk=RiskLevel.from_label(d["risk"]),
        )
