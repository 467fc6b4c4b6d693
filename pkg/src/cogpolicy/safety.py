"""Safety instrumentation: the crisis-action value advantage, the Boltzmann
policy lens, the penalty-concentration sweep, and crisis-detection metrics.

The sweep evaluates the worst-case Q-vector a bounded-reward environment can
produce for a high-risk state: the safe action keeps its fixed reward but is
charged the largest admissible future loss, every other action collects the
miss penalty plus the largest admissible present and future gains. The safe
action's Boltzmann probability under that adversarial vector rises to 1 as the
penalty grows; the sweep returns the finite-range curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .domain import Action, CognitiveLabels, N_ACTIONS, RiskLevel
from .encoding import EncoderConfig, encode_state

SAFE_INDEX = int(Action.CRISIS_INTERVENTION)


@dataclass(frozen=True)
class SafetyReport:
    mean_advantage: Optional[float]
    median_advantage: Optional[float]
    positive_fraction: Optional[float]
    crisis_recall: Optional[float]
    crisis_precision: Optional[float]
    crisis_f1: Optional[float]
    false_positive_rate: Optional[float]
    n_high_risk: int

    def to_dict(self) -> dict:
        return {
            "mean_advantage": self.mean_advantage,
            "median_advantage": self.median_advantage,
            "positive_fraction": self.positive_fraction,
            "crisis_recall": self.crisis_recall,
            "crisis_precision": self.crisis_precision,
            "crisis_f1": self.crisis_f1,
            "false_positive_rate": self.false_positive_rate,
            "n_high_risk": self.n_high_risk,
        }


def safety_advantage(q_values: np.ndarray) -> float:
    """Q(s, A9) minus the best non-A9 value; positive iff A9 is the strict argmax."""
    q = np.asarray(q_values, dtype=np.float64)
    others = np.delete(q, SAFE_INDEX)
    return float(q[SAFE_INDEX] - others.max())


def boltzmann_policy(q_values: np.ndarray, tau: float) -> np.ndarray:
    """softmax(q / tau) with max-subtraction for overflow safety."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    z = np.asarray(q_values, dtype=np.float64) / tau
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _worst_case_q(p_risk: float, base_bound: float, r_safe: float, gamma: float) -> np.ndarray:
    """Adversarial Q-vector for a high-risk state under a base-reward bound."""
    future = gamma * base_bound / (1.0 - gamma)
    q = np.full(N_ACTIONS, -p_risk + base_bound + future)
    q[SAFE_INDEX] = r_safe - future
    return q


def safety_concentration_sweep(
    p_risk_values: Sequence[float],
    base_bound: float,
    r_safe: float,
    gamma: float,
    tau: float,
) -> List[Tuple[float, float]]:
    """Safe-action Boltzmann probability under the worst-case construction,
    for each penalty value. Requires gamma in [0, 1) so future value is bounded."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(
            f"gamma must be in [0, 1) so the discounted value stays bounded, got {gamma}"
        )
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    out = []
    for p in p_risk_values:
        q = _worst_case_q(p, base_bound, r_safe, gamma)
        out.append((float(p), float(boltzmann_policy(q, tau)[SAFE_INDEX])))
    return out


def log_nonsafe_mass(
    p_risk: float, base_bound: float, r_safe: float, gamma: float, tau: float
) -> float:
    """log of the total non-safe Boltzmann mass relative to the safe action,
    i.e. log((K-1) * exp(-gap/tau)) for the worst-case construction.

    pi(safe) = 1 / (1 + exp(log_nonsafe_mass)), so pi is strictly increasing
    exactly when this quantity is strictly decreasing. Unlike pi itself it
    never saturates in double precision, which makes strict-monotonicity
    checks exact for arbitrarily large penalties.
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(
            f"gamma must be in [0, 1) so the discounted value stays bounded, got {gamma}"
        )
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    future = gamma * base_bound / (1.0 - gamma)
    gap = p_risk + r_safe - base_bound - 2.0 * future
    return math.log(N_ACTIONS - 1) - gap / tau


def safety_threshold(
    target_pi: float, base_bound: float, r_safe: float, gamma: float, tau: float
) -> float:
    """Smallest penalty for which the worst-case safe-action probability
    reaches ``target_pi`` (closed form of the sweep curve)."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(
            f"gamma must be in [0, 1) so the discounted value stays bounded, got {gamma}"
        )
    if not (0.0 < target_pi < 1.0):
        raise ValueError(f"target probability must be in (0, 1), got {target_pi}")
    gap_needed = tau * math.log((N_ACTIONS - 1) * target_pi / (1.0 - target_pi))
    future = gamma * base_bound / (1.0 - gamma)
    return gap_needed + base_bound + 2.0 * future - r_safe


def hrmdr(predicted_risk: Sequence[Optional[RiskLevel]], true_risk: Sequence[RiskLevel]) -> float:
    """Fraction of truly High-risk samples whose prediction is not High."""
    if len(predicted_risk) != len(true_risk):
        raise ValueError("prediction and truth lengths differ")
    high_idx = [i for i, r in enumerate(true_risk) if r is RiskLevel.HIGH]
    if not high_idx:
        raise ValueError("hrmdr needs at least one truly High-risk sample")
    missed = sum(1 for i in high_idx if predicted_risk[i] is not RiskLevel.HIGH)
    return missed / len(high_idx)


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def crisis_metrics(
    policy_actions: Sequence[Action], true_risk: Sequence[RiskLevel]
) -> SafetyReport:
    """Confusion metrics with A9 as the positive prediction and High risk as
    the positive label. Degenerate denominators yield None, not 0."""
    if len(policy_actions) != len(true_risk):
        raise ValueError("actions and risk labels lengths differ")
    tp = fp = fn = tn = 0
    for a, r in zip(policy_actions, true_risk):
        pred = a is Action.CRISIS_INTERVENTION
        pos = r is RiskLevel.HIGH
        if pred and pos:
            tp += 1
        elif pred and not pos:
            fp += 1
        elif pos:
            fn += 1
        else:
            tn += 1
    recall = tp / (tp + fn) if (tp + fn) else None
    precision = tp / (tp + fp) if (tp + fp) else None
    f1 = harmonic_f1(precision, recall) if (precision is not None and recall is not None) else None
    fpr = fp / (fp + tn) if (fp + tn) else None
    return SafetyReport(
        mean_advantage=None,
        median_advantage=None,
        positive_fraction=None,
        crisis_recall=recall,
        crisis_precision=precision,
        crisis_f1=f1,
        false_positive_rate=fpr,
        n_high_risk=tp + fn,
    )


def advantage_report(
    policy,
    scenarios: Sequence[CognitiveLabels],
    enc_cfg: EncoderConfig,
    rng: np.random.Generator,
    hist_bins: int = 40,
):
    """Greedy-policy safety report over labeled scenarios.

    The advantage statistics aggregate over the High-risk subset; the crisis
    confusion metrics use every scenario. Returns (SafetyReport, bin_edges,
    counts) where the histogram covers the High-risk advantages.
    """
    advantages = []
    actions = []
    risks = []
    for labels in scenarios:
        v = encode_state(labels, enc_cfg, rng)
        q = policy.forward(v)
        actions.append(Action(int(np.argmax(q))))
        risks.append(labels.risk)
        if labels.risk is RiskLevel.HIGH:
            advantages.append(safety_advantage(q))
    base = crisis_metrics(actions, risks)
    if advantages:
        arr = np.array(advantages)
        counts, edges = np.histogram(arr, bins=hist_bins)
        report = SafetyReport(
            mean_advantage=float(arr.mean()),
            median_advantage=float(np.median(arr)),
            positive_fraction=float((arr > 0).mean()),
            crisis_recall=base.crisis_recall,
            crisis_precision=base.crisis_precision,
            crisis_f1=base.crisis_f1,
            false_positive_rate=base.false_positive_rate,
            n_high_risk=base.n_high_risk,
        )
        return report, edges, counts
    return base, np.array([]), np.array([])
