"""Simulated counseling environment.

A scripted help-seeker samples distortion scenarios from a configurable
distribution and evolves under interventions: matrix-matched actions lower
the distortion intensity with configured probabilities, mismatches can make
it worse, and a crisis handoff (A9 in a High-risk state) ends the episode.
The per-step improvement signal is the direction of the intensity change.

Actors are independent episodes with their own RNG substreams; a pool steps
them in lockstep and emits transitions in actor order, which keeps runs
bit-deterministic for any actor count.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

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
from .rewards import RewardConfig, hybrid_reward
from .seeding import actor_stream

_PROB_TOL = 1e-9


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class ScenarioDistribution:
    """Sampling weights for seeker scenarios.

    ``probabilities`` maps every distortion type to its weight; together with
    ``p_no_distortion`` they must sum to 1. Intensity and risk priors are
    separate unit-sum groups.
    """

    probabilities: dict
    p_no_distortion: float
    intensity_probs: dict
    risk_probs: dict

    def __post_init__(self):
        type_mass = sum(self.probabilities.get(d, 0.0) for d in DistortionType)
        if abs(type_mass + self.p_no_distortion - 1.0) > _PROB_TOL:
            raise ValueError(
                f"scenario type probabilities sum to {type_mass + self.p_no_distortion}, expected 1"
            )
        for name, group, keys in (
            ("intensity", self.intensity_probs, list(Intensity)),
            ("risk", self.risk_probs, list(RiskLevel)),
        ):
            total = sum(group.get(k, 0.0) for k in keys)
            if abs(total - 1.0) > _PROB_TOL:
                raise ValueError(f"scenario {name} probabilities sum to {total}, expected 1")
        for v in (
            list(self.probabilities.values())
            + [self.p_no_distortion]
            + list(self.intensity_probs.values())
            + list(self.risk_probs.values())
        ):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"scenario probability out of [0, 1]: {v}")


# Published head-category frequencies; the tail mass is split per the
# configured tail weights (equal by default).
_HEAD_FREQUENCIES = {
    DistortionType.EMOTIONAL_REASONING: 0.369,
    DistortionType.PERSONALIZATION: 0.150,
    DistortionType.CATASTROPHIZING: 0.128,
}


def default_scenario_distribution(
    tail_weights: Optional[dict] = None,
    p_no_distortion: float = 0.0,
) -> ScenarioDistribution:
    """The default scenario mix: published head frequencies, configurable tail."""
    tail_types = [d for d in DistortionType if d not in _HEAD_FREQUENCIES]
    head_mass = sum(_HEAD_FREQUENCIES.values())
    tail_mass = 1.0 - head_mass - p_no_distortion
    if tail_weights is None:
        tail_weights = {d: 1.0 for d in tail_types}
    weight_total = sum(tail_weights[d] for d in tail_types)
    probs = dict(_HEAD_FREQUENCIES)
    for d in tail_types:
        probs[d] = tail_mass * tail_weights[d] / weight_total
    uniform3 = 1.0 / 3.0
    return ScenarioDistribution(
        probabilities=probs,
        p_no_distortion=p_no_distortion,
        intensity_probs={i: uniform3 for i in Intensity},
        risk_probs={r: uniform3 for r in RiskLevel},
    )


@dataclass(frozen=True)
class EpisodeState:
    labels: CognitiveLabels
    turn: int
    resolved: bool


@dataclass(frozen=True)
class EnvConfig:
    max_turns: int = 8
    p_improve_gold: float = 0.8
    p_improve_silver: float = 0.4
    p_improve_mismatch: float = 0.05
    p_worsen_mismatch: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValueError(f"env.max_turns must be >= 1, got {self.max_turns}")
        for name in ("p_improve_gold", "p_improve_silver", "p_improve_mismatch", "p_worsen_mismatch"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"env.{name} must be in [0, 1], got {v}")
        if self.p_improve_mismatch + self.p_worsen_mismatch > 1.0:
            raise ValueError("env.p_improve_mismatch + env.p_worsen_mismatch must be <= 1")


def sample_labels(dist: ScenarioDistribution, rng: np.random.Generator) -> CognitiveLabels:
    """Draw one scenario. Category, then (if present) intensity, then risk."""
    u = rng.random()
    distortion = None
    acc = 0.0
    for d in DistortionType:
        acc += dist.probabilities.get(d, 0.0)
        if u < acc:
            distortion = d
            break
    # u >= total type mass means the no-distortion control case
    if distortion is None:
        intensity = Intensity.MILD
    else:
        intensity = _draw(dist.intensity_probs, list(Intensity), rng)
    risk = _draw(dist.risk_probs, list(RiskLevel), rng)
    return CognitiveLabels(distortion=distortion, intensity=intensity, risk=risk)


def _draw(probs: dict, keys: list, rng: np.random.Generator):
    u = rng.random()
    acc = 0.0
    for k in keys:
        acc += probs.get(k, 0.0)
        if u < acc:
            return k
    return keys[-1]


def reset(dist: ScenarioDistribution, rng: np.random.Generator) -> EpisodeState:
    return EpisodeState(labels=sample_labels(dist, rng), turn=0, resolved=False)


def step(
    state: EpisodeState, action: Action, cfg: EnvConfig, rng: np.random.Generator
) -> Tuple[EpisodeState, int, bool]:
    """Advance one turn. Returns (next state, improvement signal, done).

    The improvement signal is +1 when intensity strictly decreased (or the
    distortion resolved), -1 when it strictly increased, else 0.
    """
    if state.resolved or state.turn >= cfg.max_turns:
        raise EpisodeDoneError("cannot step a finished episode")

    labels = state.labels
    turn = state.turn + 1
    horizon = turn >= cfg.max_turns

    # Crisis handoff: escalating out of the conversation ends the episode.
    if labels.risk is RiskLevel.HIGH and action is Action.CRISIS_INTERVENTION:
        return EpisodeState(labels=labels, turn=turn, resolved=False), 0, True

    if labels.distortion is None:
        return EpisodeState(labels=labels, turn=turn, resolved=False), 0, horizon

    kind = classify_action(labels.distortion, action)
    u = rng.random()
    if kind is MatchKind.GOLD:
        improve, worsen = u < cfg.p_improve_gold, False
    elif kind is MatchKind.SILVER:
        improve, worsen = u < cfg.p_improve_silver, False
    else:
        improve = u < cfg.p_improve_mismatch
        worsen = (not improve) and u < cfg.p_improve_mismatch + cfg.p_worsen_mismatch

    if improve:
        if labels.intensity is Intensity.MILD:
            resolved_labels = CognitiveLabels(
                distortion=None, intensity=Intensity.MILD, risk=labels.risk
            )
            return EpisodeState(labels=resolved_labels, turn=turn, resolved=True), 1, True
        new_labels = CognitiveLabels(
            distortion=labels.distortion,
            intensity=Intensity(int(labels.intensity) - 1),
            risk=labels.risk,
        )
        return EpisodeState(labels=new_labels, turn=turn, resolved=False), 1, horizon
    if worsen and labels.intensity is not Intensity.SEVERE:
        new_labels = CognitiveLabels(
            distortion=labels.distortion,
            intensity=Intensity(int(labels.intensity) + 1),
            risk=labels.risk,
        )
        return EpisodeState(labels=new_labels, turn=turn, resolved=False), -1, horizon
    return EpisodeState(labels=labels, turn=turn, resolved=False), 0, horizon


@dataclass
class Transition:
    """One environment step as seen by the learner."""

    s: np.ndarray
    action: Action
    reward: float
    s_next: np.ndarray
    done: bool
    labels: CognitiveLabels  # labels at decision time, retained for analysis


@dataclass
class EpisodeResult:
    total_reward: float
    length: int


class Actor:
    """A single seeker episode with its own RNG stream."""

    def __init__(
        self,
        dist: ScenarioDistribution,
        env_cfg: EnvConfig,
        enc_cfg: EncoderConfig,
        reward_cfg: RewardConfig,
        rng: np.random.Generator,
    ):
        self.dist = dist
        self.env_cfg = env_cfg
        self.enc_cfg = enc_cfg
        self.reward_cfg = reward_cfg
        self.rng = rng
        self._episode_reward = 0.0
        self._episode_length = 0
        self.reset()

    def reset(self) -> None:
        self.state = reset(self.dist, self.rng)
        self.vector = encode_state(self.state.labels, self.enc_cfg, self.rng)
        self._episode_reward = 0.0
        self._episode_length = 0

    def observe(self) -> np.ndarray:
        return self.vector

    def apply(self, action: Action) -> Tuple[Transition, Optional[EpisodeResult]]:
        """Execute one action; on episode end the actor resets itself."""
        labels = self.state.labels
        new_state, signal, done = step(self.state, action, self.env_cfg, self.rng)
        breakdown = hybrid_reward(labels, action, signal, self.reward_cfg)
        s_next = encode_state(new_state.labels, self.enc_cfg, self.rng)
        transition = Transition(
            s=self.vector,
            action=action,
            reward=breakdown.total,
            s_next=s_next,
            done=done,
            labels=labels,
        )
        self._episode_reward += breakdown.total
        self._episode_length += 1
        finished = None
        if done:
            finished = EpisodeResult(self._episode_reward, self._episode_length)
            self.reset()
        else:
            self.state = new_state
            self.vector = s_next
        return transition, finished


class ActorPool:
    """``n`` independent actors stepped in lockstep, substreams spawned from
    the master seed and actor index."""

    def __init__(
        self,
        n: int,
        dist: ScenarioDistribution,
        env_cfg: EnvConfig,
        enc_cfg: EncoderConfig,
        reward_cfg: RewardConfig,
        seed: int,
    ):
        if n < 1:
            raise ValueError(f"actor count must be >= 1, got {n}")
        self.actors = [
            Actor(dist, env_cfg, enc_cfg, reward_cfg, actor_stream(seed, i))
            for i in range(n)
        ]

    def __len__(self) -> int:
        return len(self.actors)

    def states(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        actors = self.actors if indices is None else [self.actors[i] for i in indices]
        return np.stack([a.observe() for a in actors])

    def apply(
        self, actions: Sequence[Action], indices: Optional[Sequence[int]] = None
    ) -> Tuple[List[Transition], List[EpisodeResult]]:
        actors = self.actors if indices is None else [self.actors[i] for i in indices]
        transitions, finished = [], []
        for actor, action in zip(actors, actions):
            t, result = actor.apply(action)
            transitions.append(t)
            if result is not None:
                finished.append(result)
        return transitions, finished


PolicyFn = Callable[[np.ndarray], np.ndarray]


def run_actors(
    n: int,
    policy: PolicyFn,
    episodes_per_actor: int,
    dist: ScenarioDistribution,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    seed: int = 0,
) -> Iterator[Transition]:
    """Run ``n`` actors for ``episodes_per_actor`` episodes each, yielding
    transitions at a single ordered ingestion point (actor order per tick).

    ``policy`` maps a (k, dim) batch of state vectors to k action indices.
    """
    pool = ActorPool(n, dist, env_cfg, enc_cfg, reward_cfg, seed)
    remaining = [episodes_per_actor] * n
    while any(r > 0 for r in remaining):
        active = [i for i in range(n) if remaining[i] > 0]
        actions = policy(pool.states(active))
        for i, raw in zip(active, np.asarray(actions).reshape(-1)):
            transition, finished = pool.actors[i].apply(Action(int(raw)))
            yield transition
            if finished is not None:
                remaining[i] -= 1
