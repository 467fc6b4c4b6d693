"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. The heavy training runs
are session-cached fixtures shared across criteria; everything is driven by
configs/desk.cfg with a fixed seed in deterministic lockstep mode.
"""
from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np
import pytest

from cogpolicy import cli
from cogpolicy.config import load_run_config
from cogpolicy.domain import (
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
from cogpolicy.dual_stream import (
    StreamKind,
    TokenRole,
    TokenSequence,
    build_mask,
    build_training_pairs,
    dual_stream_loss,
    masked_loss,
)
from cogpolicy.encoding import encode_state
from cogpolicy.evaluation import (
    balanced_grid,
    combined_rate,
    evaluate_hit_rates,
    high_risk_grid,
    loss_decomposition,
    phase_summary,
)
from cogpolicy.learner import LearnerConfig, train
from cogpolicy.network import LearnerFooter, QNetwork, save_checkpoint
from cogpolicy.rewards import RewardConfig
from cogpolicy.safety import (
    advantage_report,
    crisis_metrics,
    hrmdr,
    log_nonsafe_mass,
    safety_concentration_sweep,
    safety_threshold,
)
from cogpolicy.seeding import EVAL_KEY, substream

import oracle_helpers as oh

ROOT = Path(__file__).resolve().parents[1]
DESK_CFG = ROOT / "configs" / "desk.cfg"


def _report(criterion: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {status} ({detail})")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="session")
def desk_config():
    return load_run_config(str(DESK_CFG))


def _train_run(cfg, sigma=None, episodes=None, w_safe=None):
    encoder = cfg.encoder if sigma is None else dataclasses.replace(cfg.encoder, noise_sigma=sigma)
    learner = cfg.learner if episodes is None else dataclasses.replace(cfg.learner, total_episodes=episodes)
    reward = cfg.reward if w_safe is None else dataclasses.replace(cfg.reward, w_safe=w_safe)
    started = time.time()
    result = train(cfg.scenario, cfg.env, encoder, reward, learner, n_actors=cfg.actors)
    return {
        "result": result,
        "encoder": encoder,
        "seconds": time.time() - started,
        "seed": cfg.seed,
        "eval_repeats": cfg.eval.repeats,
    }


@pytest.fixture(scope="session")
def desk_run(desk_config):
    """configs/desk.cfg verbatim (noise_sigma = 0)."""
    return _train_run(desk_config)


@pytest.fixture(scope="session")
def desk_run_noisy(desk_config):
    """desk.cfg with the ambiguity dial at 0.5."""
    return _train_run(desk_config, sigma=0.5)


@pytest.fixture(scope="session")
def ablation_run_no_safety(desk_config):
    """Shorter desk run with the safety channel weight zeroed."""
    return _train_run(desk_config, episodes=5_000, w_safe=0.0)


def _hit_report(run):
    rng = substream(run["seed"], EVAL_KEY)
    return evaluate_hit_rates(
        run["result"].policy, balanced_grid(run["eval_repeats"]), run["encoder"], rng
    )


def _safety_report(run):
    rng = substream(run["seed"], EVAL_KEY)
    scenarios = high_risk_grid(run["eval_repeats"]) + balanced_grid(run["eval_repeats"])
    return advantage_report(run["result"].policy, scenarios, run["encoder"], rng)


# ---------------------------------------------------------------- criterion 1
def test_criterion_1_safety_concentration():
    started = time.time()
    p_values = [0.0, 1.0, 10.0, 100.0, 1000.0]
    rows = safety_concentration_sweep(p_values, base_bound=2.0, r_safe=4.0, gamma=0.8, tau=1.0)
    probs = [pi for _, pi in rows]
    nondecreasing = all(b >= a for a, b in zip(probs, probs[1:]))
    # strict increase is checked in log space, exact even past float saturation
    masses = [log_nonsafe_mass(p, 2.0, 4.0, 0.8, 1.0) for p in p_values]
    strictly = all(b < a for a, b in zip(masses, masses[1:]))
    at_30 = safety_concentration_sweep([30.0], 2.0, 4.0, 0.8, 1.0)[0][1]
    threshold = safety_threshold(0.999, 2.0, 4.0, 0.8, 1.0)
    elapsed = time.time() - started
    _report(
        "1 safety-concentration",
        nondecreasing and strictly and at_30 >= 0.999 and threshold <= 30.0 and elapsed < 1.0,
        f"pi(30)={at_30:.6f}, threshold={threshold:.2f} <= 30, strict in log space, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------- criterion 2
def test_criterion_2_tabular_oracle_equivalence():
    started = time.time()
    err = oh.run_tabular_ddqn(steps=50_000, gamma=0.8, seed=0)
    elapsed = time.time() - started
    _report(
        "2 tabular-oracle",
        err <= 0.05 and elapsed < 60.0,
        f"max-norm Q error {err:.4f} <= 0.05 after 50k steps, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------- criterion 3
def test_criterion_3_gradient_correctness():
    started = time.time()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        net = QNetwork([16, 12, 8, 10], dropout_p=0.0, rng=np.random.default_rng(seed))
        target = QNetwork([16, 12, 8, 10], dropout_p=0.0, rng=np.random.default_rng(50 + seed))
        cfg = LearnerConfig(kl_beta=0.1, hidden_dims=(12, 8))
        batch = (
            rng.normal(size=(4, 16)),
            rng.integers(0, 10, size=4),
            rng.normal(size=4),
            rng.normal(size=(4, 16)),
            (rng.random(4) < 0.3).astype(np.float64),
        )
        worst = max(worst, oh.fd_gradient_worst_error(net, target, cfg, batch))
    elapsed = time.time() - started
    _report(
        "3 gradient-correctness",
        worst <= 1e-4 and elapsed < 10.0,
        f"worst relative error {worst:.2e} <= 1e-4 over 5 seeds, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------- criterion 4
def test_criterion_4_strategy_learning(desk_run, desk_run_noisy):
    clean = _hit_report(desk_run)
    noisy = _hit_report(desk_run_noisy)
    ok = (
        clean.gold_rate >= 0.90
        and noisy.gold_rate >= 0.60
        and noisy.gold_plus_silver_rate >= 0.70
        and desk_run["seconds"] < 600.0
        and desk_run_noisy["seconds"] < 600.0
    )
    _report(
        "4 strategy-learning",
        ok,
        f"sigma=0 gold {clean.gold_rate:.3f} >= 0.90; sigma=0.5 gold {noisy.gold_rate:.3f} >= 0.60, "
        f"gold+silver {noisy.gold_plus_silver_rate:.3f} >= 0.70; "
        f"runtimes {desk_run['seconds']:.0f}s / {desk_run_noisy['seconds']:.0f}s < 600s",
    )


# ---------------------------------------------------------------- criterion 5
def test_criterion_5_safety_behavior(desk_run, ablation_run_no_safety):
    base, _, _ = _safety_report(desk_run)
    ablated, _, _ = _safety_report(ablation_run_no_safety)
    drop = base.crisis_recall - ablated.crisis_recall
    ok = (
        base.crisis_recall >= 0.95
        and base.positive_fraction >= 0.85
        and drop >= 0.20
    )
    _report(
        "5 safety-behavior",
        ok,
        f"crisis recall {base.crisis_recall:.3f} >= 0.95, positive advantage fraction "
        f"{base.positive_fraction:.3f} >= 0.85; no-safety-reward ablation recall "
        f"{ablated.crisis_recall:.3f} (drop {drop:.3f} >= 0.20)",
    )


# ---------------------------------------------------------------- criterion 6
def test_criterion_6_loss_convergence(desk_run):
    history = desk_run["result"].loss_history
    total = np.array([lb.total for lb in history])
    first = float(total[:1000].mean())
    last = float(total[-1000:].mean())
    ratio = last / first
    _, kl_share = loss_decomposition(desk_run["result"].trace)
    ok = ratio <= 0.6 and kl_share < 0.25
    _report(
        "6 loss-convergence",
        ok,
        f"final-1k/first-1k loss ratio {ratio:.3f} <= 0.6; kl share {kl_share:.4f} < 0.25",
    )


# ---------------------------------------------------------------- criterion 7
def test_criterion_7_dual_stream_loss_oracle():
    C, D, I = TokenRole.CONTEXT, TokenRole.DIAGNOSIS_TARGET, TokenRole.INTERVENTION_TARGET

    seq = TokenSequence(log_probs=(-1.0, -3.0, -8.0), roles=(D, D, C))
    fixture_ok = abs(masked_loss(seq, build_mask(seq.roles, StreamKind.DIAGNOSIS)) - 2.0) <= 1e-12
    seq2 = TokenSequence(log_probs=(-9.0, -1.0, -2.0, -4.0), roles=(C, D, D, I))
    dual = dual_stream_loss(seq2)
    fixture_ok = (
        fixture_ok
        and abs(dual.diagnosis - 1.5) <= 1e-12
        and abs(dual.intervention - 4.0) <= 1e-12
        and abs(dual.total - 5.5) <= 1e-12
    )

    rng = np.random.default_rng(2024)
    roles_pool = list(TokenRole)
    invariance_ok = True
    disjoint_ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 24))
        roles = tuple(roles_pool[int(rng.integers(3))] for _ in range(n))
        if not any(r is D for r in roles):
            roles = (D,) + roles[1:]
        lp = -rng.random(n) * 4
        mask_d = build_mask(roles, StreamKind.DIAGNOSIS)
        mask_i = build_mask(roles, StreamKind.INTERVENTION)
        disjoint_ok = disjoint_ok and bool(np.all(mask_d * mask_i == 0))
        base = masked_loss(TokenSequence(tuple(lp), roles), mask_d)
        lp2 = lp.copy()
        for k in range(n):
            if mask_d[k] == 0:
                lp2[k] = -rng.random() * 60
        perturbed = masked_loss(TokenSequence(tuple(lp2), roles), mask_d)
        invariance_ok = invariance_ok and abs(perturbed - base) <= 1e-12
    _report(
        "7 dual-stream-oracle",
        fixture_ok and invariance_ok and disjoint_ok,
        "hand fixtures within 1e-12; masking invariance and stream disjointness over 1000 sequences",
    )


# ---------------------------------------------------------------- criterion 8
def test_criterion_8_metric_correctness():
    rng = np.random.default_rng(99)

    hrmdr_ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        true = [RiskLevel(int(rng.integers(3))) for _ in range(n)]
        if not any(r is RiskLevel.HIGH for r in true):
            true[0] = RiskLevel.HIGH
        pred = [None if rng.random() < 0.2 else RiskLevel(int(rng.integers(3))) for _ in range(n)]
        high = [k for k in range(n) if true[k] is RiskLevel.HIGH]
        brute = sum(1 for k in high if pred[k] is not RiskLevel.HIGH) / len(high)
        hrmdr_ok = hrmdr_ok and abs(hrmdr(pred, true) - brute) <= 1e-12

    crisis_ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        true = [RiskLevel(int(rng.integers(3))) for _ in range(n)]
        actions = [Action(int(rng.integers(10))) for _ in range(n)]
        tp, fp, fn, tn = oh.brute_force_crisis_counts(actions, true)
        got = crisis_metrics(actions, true)
        want_recall = tp / (tp + fn) if tp + fn else None
        want_precision = tp / (tp + fp) if tp + fp else None
        want_fpr = fp / (fp + tn) if fp + tn else None
        for got_v, want_v in (
            (got.crisis_recall, want_recall),
            (got.crisis_precision, want_precision),
            (got.false_positive_rate, want_fpr),
        ):
            if want_v is None:
                crisis_ok = crisis_ok and got_v is None
            else:
                crisis_ok = crisis_ok and abs(got_v - want_v) <= 1e-12

    combined_ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        gold = int(rng.integers(0, n + 1))
        silver = int(rng.integers(0, n - gold + 1))
        got = combined_rate(gold / n, silver / n)
        combined_ok = combined_ok and abs(got - (gold + 0.75 * silver) / n) <= 1e-12

    # dataset summarize vs naive recount
    from cogpolicy.dataset import AnnotationRecord, Speaker, summarize

    dataset_ok = True
    for _ in range(1000):
        records = []
        for k in range(int(rng.integers(1, 25))):
            speaker = Speaker.SEEKER if rng.random() < 0.6 else Speaker.COUNSELOR
            labels = ()
            if speaker is Speaker.SEEKER and rng.random() < 0.5:
                labels = tuple(
                    CognitiveLabels(
                        DistortionType(int(rng.integers(8))),
                        Intensity(int(rng.integers(3))),
                        RiskLevel(int(rng.integers(3))),
                    )
                    for _ in range(int(rng.integers(1, 4)))
                )
            records.append(
                AnnotationRecord(f"d{int(rng.integers(1, 5))}", f"s{k}", speaker, labels)
            )
        s = summarize(records)
        n_dialogues = len({r.dialogue_id for r in records})
        n_labels = sum(len(r.labels) for r in records)
        dataset_ok = dataset_ok and s.n_dialogues == n_dialogues
        dataset_ok = dataset_ok and s.n_labels == n_labels
        dataset_ok = dataset_ok and abs(s.avg_labels_per_dialogue - n_labels / n_dialogues) <= 1e-12
        dataset_ok = dataset_ok and s.n_segments == sum(1 for r in records if r.labels)
        dataset_ok = dataset_ok and s.n_seeker + s.n_counselor == s.n_utterances

    _report(
        "8 metric-correctness",
        hrmdr_ok and crisis_ok and combined_ok and dataset_ok,
        "hrmdr, crisis metrics, combined formula, dataset summarize each match "
        "brute-force counting over 1000 randomized trials",
    )


# ---------------------------------------------------------------- criterion 9
def test_criterion_9_determinism(desk_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("determinism")
    lib_dir = out / "library"
    lib_dir.mkdir()
    result = desk_run["result"]
    result.trace.to_csv(str(lib_dir / cli.METRICS_CSV))
    save_checkpoint(
        result.policy,
        result.optimizer,
        str(lib_dir / cli.CHECKPOINT),
        footer=LearnerFooter(result.env_steps, result.episodes, result.batches),
    )

    cli_dir = out / "cli"
    code = cli.main(["train", "--config", str(DESK_CFG), "--out", str(cli_dir)])
    assert code == 0

    metrics_same = (lib_dir / cli.METRICS_CSV).read_bytes() == (cli_dir / cli.METRICS_CSV).read_bytes()
    ckpt_same = (lib_dir / cli.CHECKPOINT).read_bytes() == (cli_dir / cli.CHECKPOINT).read_bytes()
    _report(
        "9 determinism",
        metrics_same and ckpt_same,
        "independent desk.cfg train runs emit byte-identical metrics CSV and checkpoint",
    )


# ------------------------------------------------- trained-run supplementaries
def test_trained_policy_phases_improve(desk_run):
    first, _, final = phase_summary(desk_run["result"].trace)
    assert final > first


def test_trained_policy_pairs_use_a9_on_high_risk(desk_run):
    scenarios = [
        CognitiveLabels(d, Intensity.SEVERE, RiskLevel.HIGH) for d in DistortionType
    ]
    pairs = build_training_pairs(
        desk_run["result"].policy,
        scenarios,
        desk_run["encoder"],
        substream(desk_run["seed"], EVAL_KEY),
    )
    assert len(pairs) == 2 * len(scenarios)
    assert all(p.policy_action is Action.CRISIS_INTERVENTION for p in pairs)


def test_trained_policy_greedy_matches_matrix_everywhere(desk_run):
    # at sigma=0 the converged policy should read the matrix exactly
    policy = desk_run["result"].policy
    rng = substream(desk_run["seed"], EVAL_KEY)
    for d in DistortionType:
        for i in Intensity:
            labels = CognitiveLabels(d, i, RiskLevel.LOW)
            q = policy.forward(encode_state(labels, desk_run["encoder"], rng))
            kind = classify_action(d, Action(int(np.argmax(q))))
            assert kind in (MatchKind.GOLD, MatchKind.SILVER)
