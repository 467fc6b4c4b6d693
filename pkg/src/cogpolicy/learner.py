"""KL-regularized Double DQN training loop.

Action selection for the bootstrap target uses the online network while the
frozen target network evaluates it; a KL penalty between the online and
target Boltzmann action distributions (temperature tau, gradient through the
online side only) keeps updates inside a trust region. Batches are uniform
draws from a bounded FIFO replay buffer; the target is hard-synced every
``target_update_every`` batches.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .domain import Action, CognitiveLabels, DistortionType, Intensity, MatchKind, N_ACTIONS, RiskLevel, classify_action
from .encoding import EncoderConfig
from .env import ActorPool, EnvConfig, ScenarioDistribution, Transition
from .network import AdamW, QNetwork, clip_gradients, hard_update
from .rewards import RewardConfig
from .seeding import LEARNER_KEY, substream


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.8
    batch_size: int = 32
    epsilon_start: float = 0.9
    epsilon_end: float = 0.1
    decay_steps: int = 50_000
    kl_beta: float = 0.1
    temperature: float = 1.0
    target_update_every: int = 10
    total_episodes: int = 100_000
    replay_capacity: int = 100_000
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    hidden_dims: Tuple[int, ...] = (256, 128)
    dropout: float = 0.1
    grad_clip: Optional[float] = None
    warmup_transitions: int = 1_000
    train_every: int = 1
    updates_per_step: int = 1
    metrics_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"learner.gamma must be in [0, 1), got {self.gamma}")
        if not (0.0 < self.epsilon_end <= self.epsilon_start <= 1.0):
            raise ValueError(
                "learner epsilon schedule requires 0 < epsilon_end <= epsilon_start <= 1, "
                f"got {self.epsilon_start} -> {self.epsilon_end}"
            )
        if self.temperature <= 0.0:
            raise ValueError(f"learner.temperature must be > 0, got {self.temperature}")
        if self.kl_beta < 0.0:
            raise ValueError(f"learner.kl_beta must be >= 0, got {self.kl_beta}")
        for name in (
            "batch_size",
            "decay_steps",
            "target_update_every",
            "total_episodes",
            "replay_capacity",
            "warmup_transitions",
            "train_every",
            "updates_per_step",
            "metrics_interval",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"learner.{name} must be >= 1, got {getattr(self, name)}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"learner.grad_clip must be > 0 when set, got {self.grad_clip}")


@dataclass(frozen=True)
class LossBreakdown:
    q_loss: float
    kl_loss: float
    total: float


class ReplayBuffer:
    """Bounded FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._done = np.zeros(capacity, dtype=np.float64)
        # labels retained for analysis (-1 distortion index means absent)
        self._label_d = np.zeros(capacity, dtype=np.int8)
        self._label_i = np.zeros(capacity, dtype=np.int8)
        self._label_r = np.zeros(capacity, dtype=np.int8)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._next
        self._s[i] = t.s
        self._a[i] = int(t.action)
        self._r[i] = t.reward
        self._s2[i] = t.s_next
        self._done[i] = 1.0 if t.done else 0.0
        self._label_d[i] = -1 if t.labels.distortion is None else int(t.labels.distortion)
        self._label_i[i] = int(t.labels.intensity)
        self._label_r[i] = int(t.labels.risk)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def snapshot_rewards(self) -> np.ndarray:
        """Stored rewards oldest-first (test hook for eviction order)."""
        if self._size < self.capacity:
            return self._r[: self._size].copy()
        return np.concatenate([self._r[self._next :], self._r[: self._next]])

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self._size == 0:
            raise ValueError("cannot sample an empty replay buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self._s[idx],
            self._a[idx],
            self._r[idx],
            self._s2[idx],
            self._done[idx],
        )


def epsilon_schedule(step: int, cfg: LearnerConfig) -> float:
    """Linear ramp from epsilon_start at step 0 to epsilon_end at decay_steps."""
    if step >= cfg.decay_steps:
        return cfg.epsilon_end
    frac = step / cfg.decay_steps
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy with lowest-index tie-break on the greedy arm."""
    if rng.random() < epsilon:
        return Action(int(rng.integers(0, len(q_values))))
    return Action(int(np.argmax(q_values)))


def ddqn_target(t: Transition, online: QNetwork, target: QNetwork, gamma: float) -> float:
    """Bootstrap target with decoupled selection (online) and evaluation (target)."""
    if t.done:
        return float(t.reward)
    q_online = online.forward(t.s_next)
    a_star = int(np.argmax(q_online))
    q_target = target.forward(t.s_next)
    return float(t.reward + gamma * q_target[a_star])


def _log_softmax(q: np.ndarray, tau: float) -> np.ndarray:
    z = np.asarray(q, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kl_regularizer(q_online: np.ndarray, q_ref: np.ndarray, tau: float) -> float:
    """KL(softmax(q_online/tau) || softmax(q_ref/tau)); always >= 0."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    lp = _log_softmax(q_online, tau)
    lq = _log_softmax(q_ref, tau)
    p = np.exp(lp)
    return max(float(np.sum(p * (lp - lq))), 0.0)


def compute_loss_and_grads(
    batch,
    online: QNetwork,
    target: QNetwork,
    cfg: LearnerConfig,
    rng: Optional[np.random.Generator] = None,
    mode: str = "train",
):
    """Loss breakdown and parameter gradients for one batch, without applying
    an update. ``mode="eval"`` disables dropout, making the loss a
    deterministic function of the parameters (used by gradient checks)."""
    s, a, r, s2, done = batch
    a = np.asarray(a, dtype=np.int64)
    n = len(a)
    arange = np.arange(n)

    q_all, cache = online.forward(s, mode=mode, rng=rng, want_cache=True)
    q_all = np.atleast_2d(q_all)
    q_sa = q_all[arange, a]

    q2_online = np.atleast_2d(online.forward(s2))
    a_star = np.argmax(q2_online, axis=1)
    if cfg.kl_beta > 0.0:
        # one target pass covers both the bootstrap (s2) and the KL reference (s)
        q_tgt = np.atleast_2d(target.forward(np.concatenate([s2, np.atleast_2d(s)], axis=0)))
        q2_target, q_ref = q_tgt[:n], q_tgt[n:]
    else:
        q2_target = np.atleast_2d(target.forward(s2))
        q_ref = None
    y = np.asarray(r, dtype=np.float64) + cfg.gamma * q2_target[arange, a_star] * (
        1.0 - np.asarray(done, dtype=np.float64)
    )

    td = q_sa - y
    q_loss = float(np.mean(td * td))

    dq = np.zeros_like(q_all)
    dq[arange, a] = 2.0 * td / n

    kl_loss = 0.0
    if cfg.kl_beta > 0.0:
        lp = _log_softmax(q_all, cfg.temperature)
        lq = _log_softmax(q_ref, cfg.temperature)
        p = np.exp(lp)
        kl_each = np.sum(p * (lp - lq), axis=1)
        kl_loss = max(float(np.mean(kl_each)), 0.0)
        dq += (cfg.kl_beta / n) * (p / cfg.temperature) * ((lp - lq) - kl_each[:, None])

    grads = online.backward(cache, dq)
    breakdown = LossBreakdown(
        q_loss=q_loss, kl_loss=kl_loss, total=q_loss + cfg.kl_beta * kl_loss
    )
    return breakdown, grads


def train_step(
    batch,
    online: QNetwork,
    target: QNetwork,
    opt: AdamW,
    cfg: LearnerConfig,
    rng: np.random.Generator,
) -> LossBreakdown:
    """One optimizer step on mean squared TD error plus the KL penalty."""
    breakdown, grads = compute_loss_and_grads(batch, online, target, cfg, rng=rng)
    if cfg.grad_clip is not None:
        grads = clip_gradients(grads, cfg.grad_clip)
    opt.step(online, grads)
    return breakdown


METRICS_COLUMNS = (
    "step",
    "episodes",
    "epsilon",
    "avg_reward",
    "q_loss",
    "kl_loss",
    "total_loss",
    "gold_hit_rate",
    "silver_hit_rate",
    "crisis_recall",
)


@dataclass(frozen=True)
class MetricsRow:
    step: int
    episodes: int
    epsilon: float
    avg_reward: float
    q_loss: float
    kl_loss: float
    total_loss: float
    gold_hit_rate: float
    silver_hit_rate: float
    crisis_recall: float


class MetricsTrace:
    """Ordered per-interval training metrics; serializes to/from CSV."""

    def __init__(self):
        self.rows: List[MetricsRow] = []

    def append(self, row: MetricsRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError("metrics step column must be strictly increasing")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRICS_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [r.step, r.episodes]
                    + [repr(getattr(r, c)) for c in METRICS_COLUMNS[2:]]
                )

    @classmethod
    def from_csv(cls, path: str) -> "MetricsTrace":
        trace = cls()
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if tuple(header) != METRICS_COLUMNS:
                raise ValueError(f"unexpected metrics header: {header}")
            for line in reader:
                trace.append(
                    MetricsRow(
                        step=int(line[0]),
                        episodes=int(line[1]),
                        **{c: float(v) for c, v in zip(METRICS_COLUMNS[2:], line[2:])},
                    )
                )
        return trace


class _IntervalStats:
    """Counters for one metrics interval."""

    def __init__(self):
        self.episode_rewards: List[float] = []
        self.loss_q = 0.0
        self.loss_kl = 0.0
        self.loss_total = 0.0
        self.n_loss = 0
        self.n_strategy = 0
        self.gold = 0
        self.silver = 0
        self.n_high = 0
        self.crisis = 0

    def record_decision(self, labels: CognitiveLabels, action: Action) -> None:
        if labels.risk is RiskLevel.HIGH:
            self.n_high += 1
            if action is Action.CRISIS_INTERVENTION:
                self.crisis += 1
        elif labels.distortion is not None:
            self.n_strategy += 1
            kind = classify_action(labels.distortion, action)
            if kind is MatchKind.GOLD:
                self.gold += 1
            elif kind is MatchKind.SILVER:
                self.silver += 1

    def record_loss(self, lb: LossBreakdown) -> None:
        self.loss_q += lb.q_loss
        self.loss_kl += lb.kl_loss
        self.loss_total += lb.total
        self.n_loss += 1

    def row(self, step: int, episodes: int, epsilon: float) -> MetricsRow:
        def ratio(num, den):
            return num / den if den else float("nan")

        return MetricsRow(
            step=step,
            episodes=episodes,
            epsilon=epsilon,
            avg_reward=(
                float(np.mean(self.episode_rewards)) if self.episode_rewards else float("nan")
            ),
            q_loss=ratio(self.loss_q, self.n_loss),
            kl_loss=ratio(self.loss_kl, self.n_loss),
            total_loss=ratio(self.loss_total, self.n_loss),
            gold_hit_rate=ratio(self.gold, self.n_strategy),
            silver_hit_rate=ratio(self.silver, self.n_strategy),
            crisis_recall=ratio(self.crisis, self.n_high),
        )


@dataclass
class TrainResult:
    policy: QNetwork
    trace: MetricsTrace
    target: QNetwork
    optimizer: AdamW
    loss_history: List[LossBreakdown]
    env_steps: int
    episodes: int
    batches: int
    target_updates: int


def build_network(enc_cfg: EncoderConfig, cfg: LearnerConfig, seed: int) -> QNetwork:
    dims = [enc_cfg.dim, *cfg.hidden_dims, N_ACTIONS]
    return QNetwork(dims, dropout_p=cfg.dropout, rng=np.random.default_rng(seed))


def train(
    dist: ScenarioDistribution,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    cfg: LearnerConfig,
    n_actors: int = 1,
) -> TrainResult:
    """Run actors -> replay buffer -> batched updates until the episode budget
    is spent. Single-actor mode is bit-deterministic under a fixed seed; with
    several actors the pool is stepped in lockstep (still deterministic) and
    acting uses eval-mode forwards on the live online network.

    BLAS thread pools are capped to one thread for the duration: the matrices
    here are small enough that fan-out costs more than it saves, and a fixed
    thread count keeps reductions bit-reproducible across machines.
    """
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        return _train_loop(dist, env_cfg, enc_cfg, reward_cfg, cfg, n_actors)


def _train_loop(
    dist: ScenarioDistribution,
    env_cfg: EnvConfig,
    enc_cfg: EncoderConfig,
    reward_cfg: RewardConfig,
    cfg: LearnerConfig,
    n_actors: int,
) -> TrainResult:
    seed = cfg.seed
    online = build_network(enc_cfg, cfg, seed)
    target = online.copy()
    opt = AdamW(
        online,
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
    )
    buffer = ReplayBuffer(cfg.replay_capacity, enc_cfg.dim)
    pool = ActorPool(n_actors, dist, env_cfg, enc_cfg, reward_cfg, seed)
    learner_rng = substream(seed, LEARNER_KEY)

    trace = MetricsTrace()
    loss_history: List[LossBreakdown] = []
    interval = _IntervalStats()
    env_steps = 0
    episodes = 0
    batches = 0
    target_updates = 0
    pending = 0
    next_trace_at = cfg.metrics_interval
    epsilon = epsilon_schedule(0, cfg)

    while episodes < cfg.total_episodes:
        epsilon = epsilon_schedule(env_steps, cfg)
        q_batch = np.atleast_2d(online.forward(pool.states()))
        actions = [
            select_action(q_batch[k], epsilon, actor.rng)
            for k, actor in enumerate(pool.actors)
        ]
        transitions, finished = pool.apply(actions)
        for t in transitions:
            buffer.push(t)
            interval.record_decision(t.labels, t.action)
        env_steps += len(transitions)
        episodes += len(finished)
        interval.episode_rewards.extend(f.total_reward for f in finished)

        if len(buffer) >= cfg.warmup_transitions:
            pending += len(transitions)
            while pending >= cfg.train_every:
                pending -= cfg.train_every
                for _ in range(cfg.updates_per_step):
                    batch = buffer.sample(cfg.batch_size, learner_rng)
                    lb = train_step(batch, online, target, opt, cfg, learner_rng)
                    if not np.isfinite(lb.total):
                        raise TrainingDivergedError(
                            f"non-finite loss at learner step {batches} (env step {env_steps})"
                        )
                    loss_history.append(lb)
                    interval.record_loss(lb)
                    batches += 1
                    if batches % cfg.target_update_every == 0:
                        hard_update(target, online)
                        target_updates += 1

        if env_steps >= next_trace_at:
            trace.append(interval.row(env_steps, episodes, epsilon))
            interval = _IntervalStats()
            while next_trace_at <= env_steps:
                next_trace_at += cfg.metrics_interval

    if trace.rows and env_steps > trace.rows[-1].step:
        trace.append(interval.row(env_steps, episodes, epsilon))
    elif not trace.rows:
        trace.append(interval.row(max(env_steps, 1), episodes, epsilon))

    return TrainResult(
        policy=online,
        trace=trace,
        target=target,
        optimizer=opt,
        loss_history=loss_history,
        env_steps=env_steps,
        episodes=episodes,
        batches=batches,
        target_updates=target_updates,
    )
