"""Deterministic state encoder mapping label triples to fixed-length vectors.

Layout (first 15 positions):
    0-7   one-hot distortion type (all zero when no distortion present)
    8-10  one-hot intensity (all zero when no distortion present)
    11-13 one-hot risk level
    14    distortion-presence flag

Positions 0-14 are perturbed by additive N(0, sigma^2) noise; positions
15..dim-1 are pure N(0, sigma^2) padding. sigma acts as an ambiguity dial:
at sigma=0 the encoding is exact one-hot and consumes no randomness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import CognitiveLabels

FEATURE_BLOCK = 15  # minimum dim: 8 type + 3 intensity + 3 risk + presence


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < FEATURE_BLOCK:
            raise ValueError(f"encoder.dim must be >= {FEATURE_BLOCK}, got {self.dim}")
        if self.noise_sigma < 0:
            raise ValueError(f"encoder.noise_sigma must be >= 0, got {self.noise_sigma}")


def encode_state(
    labels: CognitiveLabels, cfg: EncoderConfig, rng: np.random.Generator
) -> np.ndarray:
    """Encode a label triple as a length-``cfg.dim`` float64 vector."""
    v = np.zeros(cfg.dim, dtype=np.float64)
    if labels.distortion is not None:
        v[int(labels.distortion)] = 1.0
        v[8 + int(labels.intensity)] = 1.0
        v[14] = 1.0
    v[11 + int(labels.risk)] = 1.0
    if cfg.noise_sigma > 0.0:
        v += rng.normal(0.0, cfg.noise_sigma, cfg.dim)
    return v
