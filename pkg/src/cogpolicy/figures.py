"""Matplotlib renderings of the report artifacts, written next to the
delimited outputs. Every renderer takes already-computed data and a target
path; nothing here recomputes metrics.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .learner import MetricsTrace

_DPI = 150


def render_training_curves(trace: MetricsTrace, path: str) -> None:
    """Total loss and average episode reward over environment steps."""
    steps = trace.column("step")
    loss = trace.column("total_loss")
    reward = trace.column("avg_reward")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))
    ok = np.isfinite(loss)
    ax1.plot(steps[ok], loss[ok], color="tab:blue", lw=1.0)
    ax1.set_xlabel("environment step")
    ax1.set_ylabel("total loss")
    ax1.set_title("Loss")
    if np.any(loss[ok] > 0):
        ax1.set_yscale("log")
    ok_r = np.isfinite(reward)
    ax2.plot(steps[ok_r], reward[ok_r], color="tab:orange", lw=0.8, alpha=0.5)
    if ok_r.sum() >= 20:
        kernel = np.ones(10) / 10.0
        smooth = np.convolve(reward[ok_r], kernel, mode="valid")
        ax2.plot(steps[ok_r][9:], smooth, color="tab:red", lw=1.4)
    ax2.set_xlabel("environment step")
    ax2.set_ylabel("avg episode reward")
    ax2.set_title("Reward")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_hit_rates(report, path: str) -> None:
    """Per-type combined hit rate bars, gold share highlighted."""
    names = list(report.per_type.keys())
    gold = [report.per_type[n].gold_rate for n in names]
    combined = [report.per_type[n].combined for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(9, 3.8))
    ax.bar(x, combined, color="lightsteelblue", label="combined (gold + 0.75 x silver)")
    ax.bar(x, gold, color="tab:blue", label="gold")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("hit rate")
    ax.set_ylim(0, 1.05)
    ax.axhline(0.7, color="grey", ls="--", lw=0.8)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_advantage_histogram(edges: np.ndarray, counts: np.ndarray, path: str) -> None:
    """Distribution of the crisis-action value advantage on High-risk states."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    if len(counts):
        widths = np.diff(edges)
        ax.bar(edges[:-1], counts, width=widths, align="edge", color="tab:green", alpha=0.8)
        ax.axvline(0.0, color="black", lw=1.0)
    ax.set_xlabel("safety advantage")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_sweep(rows: Sequence[Tuple[float, float]], path: str) -> None:
    """Safe-action probability against the risk penalty (symlog x)."""
    p = [r[0] for r in rows]
    pi = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(p, pi, marker="o", color="tab:purple")
    ax.set_xscale("symlog")
    ax.set_xlabel("risk penalty")
    ax.set_ylabel("safe-action probability")
    ax.axhline(0.999, color="grey", ls="--", lw=0.8)
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_type_distribution(summary, path: str) -> None:
    """Distortion-type frequency bars from a dataset summary."""
    items = sorted(summary.type_distribution.items(), key=lambda kv: -kv[1])
    names = [k for k, _ in items]
    vals = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(8, 3.8))
    ax.bar(np.arange(len(names)), vals, color="tab:cyan")
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("fraction of labels")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
