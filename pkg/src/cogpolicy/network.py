"""Fully-connected Q-network with explicit forward/backward passes, inverted
dropout, an AdamW optimizer, and a binary checkpoint format. No ML framework:
all arithmetic is float64 numpy, which keeps gradient checks tight.

Parameters live in one flat buffer with per-layer weight/bias views, so the
optimizer and target sync touch a handful of arrays instead of one pair per
layer; gradients mirror that layout.

Checkpoint layout (little-endian):
    magic "CPRL1"
    uint32  number of layer dims, then that many uint32 layer dims
    float64 dropout probability
    per layer, row-major float64 blocks: weights (d_in x d_out), then biases
    optimizer first moments in the same parameter order, then second moments
    uint64  optimizer step counter
    optional footer: magic "LRN1", uint64 env steps, episodes, batches
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

CHECKPOINT_MAGIC = b"CPRL1"
FOOTER_MAGIC = b"LRN1"


class CheckpointError(ValueError):
    """Raised for malformed checkpoint files or header/config mismatches."""


def _layout(layer_dims: Sequence[int]):
    """(offset, shape) pairs for each weight and bias block, in layer order."""
    blocks = []
    offset = 0
    for d_in, d_out in zip(layer_dims, layer_dims[1:]):
        blocks.append((offset, (d_in, d_out)))
        offset += d_in * d_out
        blocks.append((offset, (d_out,)))
        offset += d_out
    return blocks, offset


def _views(flat: np.ndarray, blocks) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    weights, biases = [], []
    for k, (off, shape) in enumerate(blocks):
        view = flat[off : off + int(np.prod(shape))].reshape(shape)
        (weights if k % 2 == 0 else biases).append(view)
    return weights, biases


class Gradients:
    """Flat gradient buffer with per-layer (dW, db) views, indexable like a
    list of tuples."""

    def __init__(self, flat: np.ndarray, blocks):
        self.flat = flat
        weights, biases = _views(flat, blocks)
        self._layers = list(zip(weights, biases))

    def __len__(self) -> int:
        return len(self._layers)

    def __getitem__(self, i: int):
        return self._layers[i]

    def __iter__(self):
        return iter(self._layers)


GradsLike = Union[Gradients, List[Tuple[np.ndarray, np.ndarray]]]


def _flat_of(grads: GradsLike) -> np.ndarray:
    if isinstance(grads, Gradients):
        return grads.flat
    return np.concatenate([np.ravel(part) for pair in grads for part in pair])


class ForwardCache:
    """Intermediates of one training forward, consumed by backward()."""

    __slots__ = ("inputs", "preacts", "masks")

    def __init__(self, inputs, preacts, masks):
        self.inputs = inputs  # activation entering each layer
        self.preacts = preacts  # pre-activation of each hidden layer
        self.masks = masks  # dropout masks (None in eval mode)


class QNetwork:
    """MLP mapping state vectors to one Q-value per action.

    Hidden layers use ReLU; the output layer is linear. Dropout (inverted
    scaling) applies to hidden activations in train mode only, so eval-mode
    forwards are pure deterministic functions of (parameters, state).
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        dropout_p: float = 0.1,
        rng: Optional[np.random.Generator] = None,
    ):
        if len(layer_dims) < 2:
            raise ValueError("layer_dims needs at least input and output sizes")
        if not (0.0 <= dropout_p < 1.0):
            raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
        self.layer_dims = list(int(d) for d in layer_dims)
        self.dropout_p = float(dropout_p)
        self._blocks, self.n_params = _layout(self.layer_dims)
        self.params_flat = np.zeros(self.n_params)
        self.weights, self.biases = _views(self.params_flat, self._blocks)
        rng = rng or np.random.default_rng(0)
        n_layers = len(self.weights)
        for i, w in enumerate(self.weights):
            if i == n_layers - 1:
                # near-zero output layer keeps early TD targets stable
                limit = 1e-3
            else:
                limit = np.sqrt(6.0 / w.shape[0])
            w[:] = rng.uniform(-limit, limit, w.shape)

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def n_actions(self) -> int:
        return self.layer_dims[-1]

    def same_architecture(self, other: "QNetwork") -> bool:
        return self.layer_dims == other.layer_dims and self.dropout_p == other.dropout_p

    def parameters(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def zero_gradients(self) -> Gradients:
        return Gradients(np.zeros(self.n_params), self._blocks)

    def copy(self) -> "QNetwork":
        """Snapshot with a fresh parameter buffer (safe for concurrent readers)."""
        dup = QNetwork.__new__(QNetwork)
        dup.layer_dims = list(self.layer_dims)
        dup.dropout_p = self.dropout_p
        dup._blocks = self._blocks
        dup.n_params = self.n_params
        dup.params_flat = self.params_flat.copy()
        dup.weights, dup.biases = _views(dup.params_flat, dup._blocks)
        return dup

    def forward(
        self,
        s: np.ndarray,
        mode: str = "eval",
        rng: Optional[np.random.Generator] = None,
        want_cache: bool = False,
    ):
        """Compute Q-values for one state (1-D) or a batch (2-D).

        ``mode="train"`` applies inverted dropout and requires ``rng``.
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        train = mode == "train"
        if train and rng is None:
            raise ValueError("train-mode forward requires an rng")
        x = np.asarray(s, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.d_in:
            raise ValueError(f"state dim {x.shape[1]} does not match network d_in {self.d_in}")

        inputs, preacts, masks = [], [], []
        n_layers = len(self.weights)
        keep = 1.0 - self.dropout_p
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(x)
            z = x @ w
            z += b
            if i < n_layers - 1:
                preacts.append(z)
                x = np.maximum(z, 0.0)
                if train and self.dropout_p > 0.0:
                    mask = (rng.random(x.shape) < keep) / keep
                    x = x * mask
                    masks.append(mask)
                else:
                    masks.append(None)
            else:
                x = z
        q = x[0] if single else x
        if want_cache:
            return q, ForwardCache(inputs, preacts, masks)
        return q

    def backward(self, cache: ForwardCache, output_grad: np.ndarray) -> Gradients:
        """Backpropagate an arbitrary loss gradient at the output layer.

        ``output_grad`` has the output's batch shape; returns gradients in the
        flat parameter layout with per-layer views.
        """
        g = np.asarray(output_grad, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        grads = Gradients(np.empty(self.n_params), self._blocks)
        for i in range(len(self.weights) - 1, -1, -1):
            dw, db = grads[i]
            np.matmul(cache.inputs[i].T, g, out=dw)
            np.sum(g, axis=0, out=db)
            if i > 0:
                g = g @ self.weights[i].T
                if cache.masks[i - 1] is not None:
                    g *= cache.masks[i - 1]
                g *= cache.preacts[i - 1] > 0.0
        return grads

    def td_gradients(
        self,
        s: np.ndarray,
        action_index: int,
        target_y: float,
        extra_output_grad: Optional[np.ndarray] = None,
        mode: str = "eval",
        rng: Optional[np.random.Generator] = None,
    ) -> Gradients:
        """Gradients of the squared TD error (Q(s, a) - y)^2 for one state,
        plus any caller-supplied loss gradient injected at the output layer."""
        q, cache = self.forward(s, mode=mode, rng=rng, want_cache=True)
        q_row = np.atleast_2d(q)
        dq = np.zeros_like(q_row)
        dq[0, action_index] = 2.0 * (q_row[0, action_index] - target_y)
        if extra_output_grad is not None:
            dq = dq + np.atleast_2d(extra_output_grad)
        return self.backward(cache, dq)


def hard_update(target: QNetwork, online: QNetwork) -> QNetwork:
    """Copy online parameters into the target network (byte-identical)."""
    if not target.same_architecture(online):
        raise ValueError("hard_update requires identical architectures")
    np.copyto(target.params_flat, online.params_flat)
    return target


def clip_gradients(grads: GradsLike, max_norm: float) -> GradsLike:
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    flat = _flat_of(grads)
    norm = float(np.sqrt(flat @ flat))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    if isinstance(grads, Gradients):
        grads.flat *= scale
        return grads
    return [(dw * scale, db * scale) for dw, db in grads]


class AdamW:
    """Bias-corrected adaptive optimizer with decoupled weight decay.

    Moment buffers share the network's flat parameter layout.
    """

    def __init__(
        self,
        net: QNetwork,
        lr: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = np.zeros(net.n_params)
        self.v = np.zeros(net.n_params)
        self._scratch = np.empty(net.n_params)

    def moments_per_layer(self, net: QNetwork):
        """(m, v) views shaped like the network's (W, b) pairs."""
        m_w, m_b = _views(self.m, net._blocks)
        v_w, v_b = _views(self.v, net._blocks)
        return list(zip(m_w, m_b)), list(zip(v_w, v_b))

    def step(self, net: QNetwork, grads: GradsLike) -> None:
        g = _flat_of(grads)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        np.multiply(g, g, out=self._scratch)
        self._scratch *= 1.0 - self.beta2
        self.v += self._scratch
        p = net.params_flat
        if self.weight_decay:
            p *= 1.0 - self.lr * self.weight_decay
        np.sqrt(self.v, out=self._scratch)
        self._scratch *= 1.0 / np.sqrt(bc2)
        self._scratch += self.eps
        np.divide(self.m, self._scratch, out=self._scratch)
        self._scratch *= self.lr / bc1
        p -= self._scratch


@dataclass(frozen=True)
class LearnerFooter:
    env_steps: int
    episodes: int
    batches: int


def save_checkpoint(
    net: QNetwork,
    opt: Optional[AdamW],
    path: str,
    footer: Optional[LearnerFooter] = None,
) -> None:
    dims = net.layer_dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<d", net.dropout_p))
        f.write(np.ascontiguousarray(net.params_flat, dtype="<f8").tobytes())
        if opt is not None:
            f.write(np.ascontiguousarray(opt.m, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(opt.v, dtype="<f8").tobytes())
            f.write(struct.pack("<Q", opt.t))
        else:
            f.write(bytes(16 * net.n_params))
            f.write(struct.pack("<Q", 0))
        if footer is not None:
            f.write(FOOTER_MAGIC)
            f.write(struct.pack("<QQQ", footer.env_steps, footer.episodes, footer.batches))


def load_checkpoint(path: str) -> Tuple[QNetwork, AdamW, Optional[LearnerFooter]]:
    """Read a checkpoint; raises CheckpointError on format problems."""
    with open(path, "rb") as f:
        data = f.read()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise CheckpointError("checkpoint truncated")
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic; not a policy checkpoint")
    (n_dims,) = struct.unpack("<I", take(4))
    if not (2 <= n_dims <= 64):
        raise CheckpointError(f"implausible layer-dim count {n_dims}")
    dims = list(struct.unpack(f"<{n_dims}I", take(4 * n_dims)))
    (dropout_p,) = struct.unpack("<d", take(8))
    if not (0.0 <= dropout_p < 1.0):
        raise CheckpointError(f"implausible dropout value {dropout_p}")

    net = QNetwork(dims, dropout_p=dropout_p)

    def read_vector(count: int) -> np.ndarray:
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)

    net.params_flat[:] = read_vector(net.n_params)
    opt = AdamW(net)
    opt.m[:] = read_vector(net.n_params)
    opt.v[:] = read_vector(net.n_params)
    (opt.t,) = struct.unpack("<Q", take(8))

    footer = None
    if off < len(data):
        if take(len(FOOTER_MAGIC)) != FOOTER_MAGIC:
            raise CheckpointError("unrecognized trailing bytes in checkpoint")
        env_steps, episodes, batches = struct.unpack("<QQQ", take(24))
        footer = LearnerFooter(env_steps=env_steps, episodes=episodes, batches=batches)
    if off != len(data):
        raise CheckpointError("unrecognized trailing bytes in checkpoint")
    return net, opt, footer
