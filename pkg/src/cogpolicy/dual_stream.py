"""Target-only masked loss over token log-probabilities, split into a
diagnosis stream and an intervention stream, plus construction of the
policy-labeled training-pair records.

Token log-probabilities arrive from the caller; nothing here touches a
language model. Each masked loss is the negative mean of the stream's
log-probabilities, normalized by that stream's own token count.
"""
from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .domain import Action, CognitiveLabels
from .encoding import EncoderConfig, encode_state


class TokenRole(enum.Enum):
    CONTEXT = "Context"
    DIAGNOSIS_TARGET = "DiagnosisTarget"
    INTERVENTION_TARGET = "InterventionTarget"


class StreamKind(enum.Enum):
    DIAGNOSIS = "Diagnosis"
    INTERVENTION = "Intervention"


_STREAM_ROLE = {
    StreamKind.DIAGNOSIS: TokenRole.DIAGNOSIS_TARGET,
    StreamKind.INTERVENTION: TokenRole.INTERVENTION_TARGET,
}


@dataclass(frozen=True)
class TokenSequence:
    log_probs: Tuple[float, ...]
    roles: Tuple[TokenRole, ...]

    def __post_init__(self):
        if len(self.log_probs) != len(self.roles):
            raise ValueError("log_probs and roles must have equal lengths")
        if any(lp > 0.0 for lp in self.log_probs):
            raise ValueError("log-probabilities must be <= 0")

    def __len__(self) -> int:
        return len(self.log_probs)


def build_mask(roles: Sequence[TokenRole], stream: StreamKind) -> np.ndarray:
    """1 at positions belonging to the requested target stream, 0 elsewhere."""
    if len(roles) == 0:
        raise ValueError("roles must be non-empty")
    want = _STREAM_ROLE[stream]
    return np.array([1 if r is want else 0 for r in roles], dtype=np.int64)


def masked_loss(seq: TokenSequence, mask: np.ndarray) -> float:
    """Negative masked mean log-probability; rejects an all-zero mask since
    the normalizer would be zero."""
    m = np.asarray(mask, dtype=np.float64)
    if len(m) != len(seq):
        raise ValueError("mask length must match the sequence")
    total = m.sum()
    if total == 0:
        raise ValueError("mask selects no tokens; the normalizer would be zero")
    lp = np.asarray(seq.log_probs, dtype=np.float64)
    return float(-(m * lp).sum() / total)


@dataclass(frozen=True)
class DualStreamLoss:
    diagnosis: Optional[float]
    intervention: Optional[float]
    total: float


def dual_stream_loss(seq: TokenSequence) -> DualStreamLoss:
    """Per-stream masked losses and their sum. A stream with no target tokens
    is reported as absent (with a warning) and excluded from the total."""
    parts = {}
    for stream in StreamKind:
        mask = build_mask(seq.roles, stream)
        if mask.sum() == 0:
            warnings.warn(
                f"{stream.value} stream has no target tokens; excluded from the total",
                stacklevel=2,
            )
            parts[stream] = None
        else:
            parts[stream] = masked_loss(seq, mask)
    total = sum(v for v in parts.values() if v is not None)
    return DualStreamLoss(
        diagnosis=parts[StreamKind.DIAGNOSIS],
        intervention=parts[StreamKind.INTERVENTION],
        total=float(total),
    )


@dataclass(frozen=True)
class TrainingPair:
    context_id: str
    labels: CognitiveLabels
    policy_action: Action
    target_kind: StreamKind

    def to_dict(self) -> dict:
        d = self.labels.to_dict()
        return {
            "context_id": self.context_id,
            "distortion": d["distortion"],
            "intensity": d["intensity"],
            "risk": d["risk"],
            "policy_action": self.policy_action.code,
            "target_kind": self.target_kind.value,
        }


def build_training_pairs(
    policy,
    scenarios: Sequence[CognitiveLabels],
    enc_cfg: EncoderConfig,
    rng: np.random.Generator,
) -> List[TrainingPair]:
    """One diagnosis-kind and one intervention-kind record per scenario, with
    the greedy policy action attached."""
    pairs = []
    for idx, labels in enumerate(scenarios):
        v = encode_state(labels, enc_cfg, rng)
        action = Action(int(np.argmax(policy.forward(v))))
        context_id = f"ctx-{idx:06d}"
        for kind in (StreamKind.DIAGNOSIS, StreamKind.INTERVENTION):
            pairs.append(
                TrainingPair(
                    context_id=context_id,
                    labels=labels,
                    policy_action=action,
                    target_kind=kind,
                )
            )
    return pairs


def write_pairs_jsonl(pairs: Sequence[TrainingPair], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p.to_dict()) + "\n")
