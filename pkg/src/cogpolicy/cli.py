"""Command-line surface: train, eval, safety-sweep, dataset-stats, build-pairs.

Commands are thin orchestration over the library modules; every number they
emit is computable through module-level calls. Report files are CSV/JSON with
matplotlib figures rendered alongside. The output directory comes from
``--out``, the COGPOLICY_OUT_DIR environment variable, or the config file, in
that order of precedence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import figures
from .config import ConfigError, RunConfig, load_run_config
from .dataset import ParseError, read_records, summarize
from .domain import N_ACTIONS
from .dual_stream import build_training_pairs, write_pairs_jsonl
from .evaluation import balanced_grid, evaluate_hit_rates, high_risk_grid, natural_scenarios
from .learner import TrainingDivergedError, train
from .network import CheckpointError, LearnerFooter, load_checkpoint, save_checkpoint
from .safety import advantage_report, log_nonsafe_mass, safety_concentration_sweep, safety_threshold
from .seeding import EVAL_KEY, PAIRS_KEY, substream

OUT_DIR_ENV = "COGPOLICY_OUT_DIR"

METRICS_CSV = "metrics.csv"
CHECKPOINT = "policy.ckpt"
HIT_RATES_JSON = "hit_rates.json"
HIT_RATES_CSV = "hit_rates.csv"
SAFETY_JSON = "safety_report.json"
ADVANTAGE_CSV = "advantage_hist.csv"
SWEEP_CSV = "sweep.csv"
SUMMARY_JSON = "dataset_summary.json"
PAIRS_JSONL = "training_pairs.jsonl"

FIG_CURVES = "training_curves.png"
FIG_HITS = "hit_rates.png"
FIG_ADVANTAGE = "advantage_hist.png"
FIG_SWEEP = "sweep.png"
FIG_TYPES = "type_distribution.png"


def _resolve_out_dir(cfg_out: Optional[str], flag: Optional[str]) -> Path:
    out = flag or os.environ.get(OUT_DIR_ENV) or cfg_out or "runs/latest"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _expected_dims(cfg: RunConfig) -> List[int]:
    return [cfg.encoder.dim, *cfg.learner.hidden_dims, N_ACTIONS]


def _write_reports(policy, cfg: RunConfig, out: Path) -> dict:
    """Hit-rate + safety reports with figures; shared by train and eval so an
    eval of a fresh checkpoint reproduces the training-end reports exactly."""
    rng = substream(cfg.seed, EVAL_KEY)
    if cfg.eval.natural:
        scenarios = natural_scenarios(cfg.scenario, cfg.eval.natural_samples, rng)
    else:
        scenarios = balanced_grid(cfg.eval.repeats)
    hit = evaluate_hit_rates(policy, scenarios, cfg.encoder, rng)

    safety_scenarios = high_risk_grid(cfg.eval.repeats) + balanced_grid(cfg.eval.repeats)
    report, edges, counts = advantage_report(policy, safety_scenarios, cfg.encoder, rng)

    (out / HIT_RATES_JSON).write_text(json.dumps(hit.to_dict(), indent=2) + "\n")
    with open(out / HIT_RATES_CSV, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["distortion", "n", "gold_rate", "silver_rate", "combined"])
        for name, row in hit.per_type.items():
            writer.writerow([name, row.n, repr(row.gold_rate), repr(row.silver_rate), repr(row.combined)])
    (out / SAFETY_JSON).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    with open(out / ADVANTAGE_CSV, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i in range(len(counts)):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i])])

    figures.render_hit_rates(hit, str(out / FIG_HITS))
    figures.render_advantage_histogram(edges, counts, str(out / FIG_ADVANTAGE))
    return {"hit": hit, "safety": report}


def cmd_train(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = _resolve_out_dir(cfg.out_dir, args.out)
    try:
        result = train(
            cfg.scenario, cfg.env, cfg.encoder, cfg.reward, cfg.learner, n_actors=cfg.actors
        )
    except TrainingDivergedError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 1

    result.trace.to_csv(str(out / METRICS_CSV))
    save_checkpoint(
        result.policy,
        result.optimizer,
        str(out / CHECKPOINT),
        footer=LearnerFooter(
            env_steps=result.env_steps, episodes=result.episodes, batches=result.batches
        ),
    )
    figures.render_training_curves(result.trace, str(out / FIG_CURVES))
    reports = _write_reports(result.policy, cfg, out)
    hit, safety = reports["hit"], reports["safety"]
    print(
        f"train: {result.episodes} episodes, {result.env_steps} steps, {result.batches} updates | "
        f"gold {hit.gold_rate:.3f} gold+silver {hit.gold_plus_silver_rate:.3f} | "
        f"crisis recall {safety.crisis_recall if safety.crisis_recall is None else round(safety.crisis_recall, 3)} | "
        f"out {out}"
    )
    return 0


def cmd_eval(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.natural:
        cfg = RunConfig(
            seed=cfg.seed,
            out_dir=cfg.out_dir,
            actors=cfg.actors,
            encoder=cfg.encoder,
            env=cfg.env,
            scenario=cfg.scenario,
            reward=cfg.reward,
            learner=cfg.learner,
            eval=type(cfg.eval)(
                repeats=cfg.eval.repeats, natural=True, natural_samples=cfg.eval.natural_samples
            ),
        )
    try:
        policy, _opt, _footer = load_checkpoint(args.checkpoint)
    except (CheckpointError, OSError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    expected = _expected_dims(cfg)
    if policy.layer_dims != expected:
        print(
            f"checkpoint error: layer dims {policy.layer_dims} do not match config {expected}",
            file=sys.stderr,
        )
        return 2
    out = _resolve_out_dir(cfg.out_dir, args.out)
    reports = _write_reports(policy, cfg, out)
    hit, safety = reports["hit"], reports["safety"]
    print(
        f"eval: gold {hit.gold_rate:.3f} gold+silver {hit.gold_plus_silver_rate:.3f} | "
        f"crisis recall {safety.crisis_recall if safety.crisis_recall is None else round(safety.crisis_recall, 3)} | "
        f"out {out}"
    )
    return 0


def cmd_safety_sweep(args) -> int:
    try:
        p_values = [float(x) for x in args.p_risk.split(",") if x.strip()]
        if not p_values:
            raise ValueError("empty p-risk list")
        rows = safety_concentration_sweep(p_values, args.bound, args.r_safe, args.gamma, args.tau)
        threshold = safety_threshold(args.target, args.bound, args.r_safe, args.gamma, args.tau)
    except ValueError as exc:
        print(f"sweep error: {exc}", file=sys.stderr)
        return 2

    # strict monotonicity is asserted in log space, where it stays exact even
    # after pi has saturated to 1.0 in double precision
    ordered = sorted(p_values)
    for p0, p1 in zip(ordered, ordered[1:]):
        if p1 > p0:
            m0 = log_nonsafe_mass(p0, args.bound, args.r_safe, args.gamma, args.tau)
            m1 = log_nonsafe_mass(p1, args.bound, args.r_safe, args.gamma, args.tau)
            if m1 >= m0:
                print(
                    f"sweep error: safe-action probability not increasing between {p0} and {p1}",
                    file=sys.stderr,
                )
                return 1

    out = _resolve_out_dir(None, args.out)
    with open(out / SWEEP_CSV, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["p_risk", "pi_safe"])
        for p, pi in rows:
            writer.writerow([repr(p), repr(pi)])
    figures.render_sweep(rows, str(out / FIG_SWEEP))
    print(
        f"safety-sweep: {len(rows)} points, monotone increasing | "
        f"smallest penalty reaching pi_safe >= {args.target}: {threshold:.4f} | out {out}"
    )
    return 0


def cmd_dataset_stats(args) -> int:
    try:
        records, errors = read_records(args.input, lenient=args.lenient)
    except ParseError as exc:
        for line in exc.errors:
            print(f"parse error: {line}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    for line in errors:
        print(f"skipped: {line}", file=sys.stderr)
    s = summarize(records)
    out = _resolve_out_dir(None, args.out)
    (out / SUMMARY_JSON).write_text(json.dumps(s.to_dict(), indent=2) + "\n")
    figures.render_type_distribution(s, str(out / FIG_TYPES))
    print(
        f"dataset-stats: {s.n_dialogues} dialogues, {s.n_utterances} utterances, "
        f"{s.n_segments} segments, {s.n_labels} labels | out {out}"
    )
    return 0


def cmd_build_pairs(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        policy, _opt, _footer = load_checkpoint(args.checkpoint)
    except (CheckpointError, OSError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    if policy.layer_dims != _expected_dims(cfg):
        print("checkpoint error: layer dims do not match config", file=sys.stderr)
        return 2
    rng = substream(cfg.seed, PAIRS_KEY)
    if args.balanced:
        scenarios = balanced_grid(args.repeats, include_high_risk=True)
    else:
        scenarios = natural_scenarios(cfg.scenario, args.count, rng)
    pairs = build_training_pairs(policy, scenarios, cfg.encoder, rng)
    out = _resolve_out_dir(cfg.out_dir, args.out)
    write_pairs_jsonl(pairs, str(out / PAIRS_JSONL))
    print(f"build-pairs: {len(pairs)} records from {len(scenarios)} scenarios | out {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogpolicy",
        description="Intervention-policy learning over simulated counseling scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy and emit reports")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument(
        "--natural", action="store_true", help="sample eval scenarios from the scenario distribution"
    )
    p_eval.set_defaults(fn=cmd_eval)

    p_sweep = sub.add_parser("safety-sweep", help="penalty concentration sweep")
    p_sweep.add_argument("--p-risk", default="0,1,10,100,1000")
    p_sweep.add_argument("--r-safe", type=float, default=4.0)
    p_sweep.add_argument("--bound", type=float, default=2.0)
    p_sweep.add_argument("--gamma", type=float, default=0.8)
    p_sweep.add_argument("--tau", type=float, default=1.0)
    p_sweep.add_argument("--target", type=float, default=0.999)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(fn=cmd_safety_sweep)

    p_stats = sub.add_parser("dataset-stats", help="summarize a JSONL annotation file")
    p_stats.add_argument("input")
    p_stats.add_argument("--out", default=None)
    p_stats.add_argument("--lenient", action="store_true")
    p_stats.set_defaults(fn=cmd_dataset_stats)

    p_pairs = sub.add_parser("build-pairs", help="emit policy-labeled training pairs")
    p_pairs.add_argument("--checkpoint", required=True)
    p_pairs.add_argument("--config", required=True)
    p_pairs.add_argument("--out", default=None)
    p_pairs.add_argument("--count", type=int, default=256)
    p_pairs.add_argument("--balanced", action="store_true")
    p_pairs.add_argument("--repeats", type=int, default=4)
    p_pairs.set_defaults(fn=cmd_build_pairs)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
