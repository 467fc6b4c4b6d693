"""Strategy-matching evaluation and training-trace diagnostics.

Hit rates are measured with the greedy policy on eval-mode forwards. The
combined per-type metric weights silver hits at 0.75 of a gold hit. High-risk
scenarios are excluded from strategy matching and reported as crisis cases.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    Action,
    CognitiveLabels,
    DistortionType,
    Intensity,
    MatchKind,
    RiskLevel,
    classify_action,
)
from .encoding import EncoderConfig, encode_state
from .env import ScenarioDistribution, sample_labels
from .learner import MetricsTrace

SILVER_WEIGHT = 0.75


@dataclass(frozen=True)
class TypeHitRate:
    gold_rate: float
    silver_rate: float
    combined: float
    n: int


@dataclass(frozen=True)
class HitRateReport:
    per_type: Dict[str, TypeHitRate]
    gold_rate: float
    gold_plus_silver_rate: float
    combined: float
    n_scenarios: int
    n_crisis_cases: int
    crisis_recall: Optional[float]

    def to_dict(self) -> dict:
        return {
            "per_type": {
                name: {
                    "gold_rate": t.gold_rate,
                    "silver_rate": t.silver_rate,
                    "combined": t.combined,
                    "n": t.n,
                }
                for name, t in self.per_type.items()
            },
            "gold_rate": self.gold_rate,
            "gold_plus_silver_rate": self.gold_plus_silver_rate,
            "combined": self.combined,
            "n_scenarios": self.n_scenarios,
            "n_crisis_cases": self.n_crisis_cases,
            "crisis_recall": self.crisis_recall,
        }


def combined_rate(gold_rate: float, silver_rate: float) -> float:
    """Combined hit metric: gold plus silver weighted at 0.75."""
    return gold_rate + SILVER_WEIGHT * silver_rate


def balanced_grid(repeats: int = 20, include_high_risk: bool = False) -> List[CognitiveLabels]:
    """All 8 types x 3 intensities x {Low, Medium} (x High when requested),
    repeated so fresh noise draws are sampled per scenario."""
    risks = list(RiskLevel) if include_high_risk else [RiskLevel.LOW, RiskLevel.MEDIUM]
    grid = []
    for _ in range(repeats):
        for d in DistortionType:
            for i in Intensity:
                for r in risks:
                    grid.append(CognitiveLabels(distortion=d, intensity=i, risk=r))
    return grid


def high_risk_grid(repeats: int = 20) -> List[CognitiveLabels]:
    """All 8 types x 3 intensities at High risk, repeated."""
    grid = []
    for _ in range(repeats):
        for d in DistortionType:
            for i in Intensity:
                grid.append(CognitiveLabels(distortion=d, intensity=i, risk=RiskLevel.HIGH))
    return grid


def natural_scenarios(
    dist: ScenarioDistribution, n: int, rng: np.random.Generator
) -> List[CognitiveLabels]:
    return [sample_labels(dist, rng) for _ in range(n)]


def evaluate_hit_rates(
    policy,
    scenarios: Sequence[CognitiveLabels],
    enc_cfg: EncoderConfig,
    rng: np.random.Generator,
) -> HitRateReport:
    """Greedy-policy gold/silver/miss classification per distortion type.

    High-risk scenarios are routed to the crisis-case tally instead of the
    matrix tallies; scenarios without a distortion are skipped.
    """
    counts = {d: [0, 0, 0] for d in DistortionType}  # gold, silver, n
    n_crisis = 0
    crisis_hits = 0
    for labels in scenarios:
        v = encode_state(labels, enc_cfg, rng)
        action = Action(int(np.argmax(policy.forward(v))))
        if labels.risk is RiskLevel.HIGH:
            n_crisis += 1
            if action is Action.CRISIS_INTERVENTION:
                crisis_hits += 1
            continue
        if labels.distortion is None:
            continue
        kind = classify_action(labels.distortion, action)
        counts[labels.distortion][2] += 1
        if kind is MatchKind.GOLD:
            counts[labels.distortion][0] += 1
        elif kind is MatchKind.SILVER:
            counts[labels.distortion][1] += 1

    per_type = {}
    total_gold = total_silver = total_n = 0
    for d in DistortionType:
        gold, silver, n = counts[d]
        total_gold += gold
        total_silver += silver
        total_n += n
        if n:
            g, s = gold / n, silver / n
            per_type[d.label] = TypeHitRate(
                gold_rate=g, silver_rate=s, combined=combined_rate(g, s), n=n
            )
    gold_rate = total_gold / total_n if total_n else float("nan")
    silver_rate = total_silver / total_n if total_n else float("nan")
    return HitRateReport(
        per_type=per_type,
        gold_rate=gold_rate,
        gold_plus_silver_rate=gold_rate + silver_rate if total_n else float("nan"),
        combined=combined_rate(gold_rate, silver_rate) if total_n else float("nan"),
        n_scenarios=total_n,
        n_crisis_cases=n_crisis,
        crisis_recall=crisis_hits / n_crisis if n_crisis else None,
    )


def loss_decomposition(trace: MetricsTrace, window: Optional[int] = None) -> Tuple[float, float]:
    """(q_share, kl_share) of the total loss over a trailing window of trace
    rows (default: final quarter). Shares sum to 1."""
    rows = [r for r in trace.rows if np.isfinite(r.total_loss)]
    if not rows:
        raise ValueError("loss decomposition needs a trace with loss entries")
    if window is None:
        window = max(1, len(rows) // 4)
    tail = rows[-window:]
    mean_total = float(np.mean([r.total_loss for r in tail]))
    mean_q = float(np.mean([r.q_loss for r in tail]))
    if mean_total == 0.0:
        return 1.0, 0.0
    q_share = mean_q / mean_total
    return q_share, 1.0 - q_share


def phase_summary(trace: MetricsTrace) -> Tuple[float, float, float]:
    """Mean episode reward over the first, middle, and final thirds of training."""
    rewards = [r.avg_reward for r in trace.rows if np.isfinite(r.avg_reward)]
    if len(rows := rewards) < 3:
        raise ValueError("phase summary needs a trace spanning at least 3 intervals")
    third = len(rows) // 3
    first = float(np.mean(rows[:third]))
    middle = float(np.mean(rows[third : 2 * third]))
    final = float(np.mean(rows[2 * third :]))
    return first, middle, final
