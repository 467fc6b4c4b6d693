from __future__ import annotations

import numpy as np
import pytest

from cogpolicy.learner import LearnerConfig, compute_loss_and_grads
from cogpolicy.network import (
    AdamW,
    CheckpointError,
    QNetwork,
    clip_gradients,
    hard_update,
    load_checkpoint,
    save_checkpoint,
)


def _zeroed(dims, dropout=0.0):
    net = QNetwork(dims, dropout_p=dropout)
    for w in net.weights:
        w[:] = 0.0
    for b in net.biases:
        b[:] = 0.0
    return net


def test_zero_network_maps_to_zero():
    net = _zeroed([6, 4, 3])
    q = net.forward(np.ones(6))
    assert np.array_equal(q, np.zeros(3))


def test_hand_traced_toy_forward():
    # dims [1, 1, 1], all weights 1, biases 0:
    #   input 2  -> hidden relu(2) = 2 -> output 2
    #   input -2 -> hidden relu(-2) = 0 -> output 0
    net = _zeroed([1, 1, 1])
    net.weights[0][:] = 1.0
    net.weights[1][:] = 1.0
    assert net.forward(np.array([2.0]))[0] == pytest.approx(2.0)
    assert net.forward(np.array([-2.0]))[0] == pytest.approx(0.0)
    # with hidden bias 1: relu(1*2 + 1) = 3 -> 3
    net.biases[0][:] = 1.0
    assert net.forward(np.array([2.0]))[0] == pytest.approx(3.0)


def test_forward_rejects_dimension_mismatch():
    net = QNetwork([8, 4, 2])
    with pytest.raises(ValueError):
        net.forward(np.zeros(9))


def test_train_mode_deterministic_under_fixed_seed():
    net = QNetwork([16, 32, 10], dropout_p=0.3, rng=np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=16)
    a = net.forward(x, mode="train", rng=np.random.default_rng(7))
    b = net.forward(x, mode="train", rng=np.random.default_rng(7))
    assert np.array_equal(a, b)
    c = net.forward(x, mode="train", rng=np.random.default_rng(8))
    assert not np.array_equal(a, c)


def test_eval_mode_has_no_dropout():
    net = QNetwork([16, 32, 10], dropout_p=0.5, rng=np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=16)
    assert np.array_equal(net.forward(x), net.forward(x))


def test_backward_zero_residual_gives_zero_grads():
    net = QNetwork([5, 4, 3], rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=5)
    q = net.forward(x)
    grads = net.td_gradients(x, action_index=1, target_y=float(q[1]))
    for dw, db in grads:
        assert np.allclose(dw, 0.0)
        assert np.allclose(db, 0.0)


def test_scalar_td_gradient_hand_case():
    # Q = w*s with s=2, w=1, y=5: dLoss/dw = 2*(Q - y)*s = 2*(2-5)*2 = -12
    net = _zeroed([1, 1])
    net.weights[0][0, 0] = 1.0
    grads = net.td_gradients(np.array([2.0]), action_index=0, target_y=5.0)
    assert grads[0][0][0, 0] == pytest.approx(-12.0)
    assert grads[0][1][0] == pytest.approx(-6.0)  # bias path: 2*(Q - y)


def _fd_check(net, target, cfg, batch, h=1e-5):
    """Central finite differences of the full training loss over every
    parameter; returns the worst relative error vs the analytic gradients."""

    def loss_of_params():
        breakdown, _ = compute_loss_and_grads(batch, net, target, cfg, mode="eval")
        return breakdown.total

    _, grads = compute_loss_and_grads(batch, net, target, cfg, mode="eval")
    worst = 0.0
    for layer, (dw, db) in enumerate(grads):
        for arr, g in ((net.weights[layer], dw), (net.biases[layer], db)):
            flat = arr.reshape(-1)
            gflat = np.asarray(g).reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                up = loss_of_params()
                flat[j] = orig - h
                down = loss_of_params()
                flat[j] = orig
                fd = (up - down) / (2 * h)
                denom = max(abs(fd) + abs(gflat[j]), 1e-6)
                worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst


def _random_batch(rng, n, dim, n_actions):
    return (
        rng.normal(size=(n, dim)),
        rng.integers(0, n_actions, size=n),
        rng.normal(size=n),
        rng.normal(size=(n, dim)),
        (rng.random(n) < 0.3).astype(np.float64),
    )


@pytest.mark.parametrize("beta", [0.0, 0.1])
def test_gradient_check_against_finite_differences(beta):
    rng = np.random.default_rng(3)
    net = QNetwork([10, 8, 6, 4], dropout_p=0.0, rng=np.random.default_rng(11))
    target = QNetwork([10, 8, 6, 4], dropout_p=0.0, rng=np.random.default_rng(12))
    cfg = LearnerConfig(kl_beta=beta, batch_size=4, hidden_dims=(8, 6))
    batch = _random_batch(rng, 4, 10, 4)
    assert _fd_check(net, target, cfg, batch) <= 1e-4


def test_adamw_zero_grad_is_fixed_point():
    net = QNetwork([4, 3], rng=np.random.default_rng(0))
    opt = AdamW(net, lr=0.1, weight_decay=0.0)
    before = [w.copy() for w in net.weights]
    zero_grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
    opt.step(net, zero_grads)
    for b, w in zip(before, net.weights):
        assert np.array_equal(b, w)


def test_adamw_first_step_moves_by_lr():
    net = _zeroed([1, 1])
    opt = AdamW(net, lr=0.1, weight_decay=0.0)
    opt.step(net, [(np.array([[1.0]]), np.array([0.0]))])
    # bias-corrected first step is ~ -lr * sign(g)
    assert net.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-6)
    assert opt.t == 1


def test_adamw_weight_decay_shrinks_parameters():
    net = _zeroed([1, 1])
    net.weights[0][0, 0] = 1.0
    opt = AdamW(net, lr=0.1, weight_decay=0.5)
    opt.step(net, [(np.array([[0.0]]), np.array([0.0]))])
    assert 0.0 < net.weights[0][0, 0] < 1.0


def test_adamw_keeps_parameters_finite():
    rng = np.random.default_rng(0)
    net = QNetwork([6, 5, 3], rng=rng)
    opt = AdamW(net, lr=1e-2)
    for _ in range(50):
        grads = [
            (rng.normal(size=w.shape), rng.normal(size=b.shape))
            for w, b in zip(net.weights, net.biases)
        ]
        opt.step(net, grads)
    for p in net.parameters():
        assert np.all(np.isfinite(p))


def test_clip_gradients_global_norm():
    grads = [(np.array([[3.0]]), np.array([4.0]))]
    clipped = clip_gradients(grads, 1.0)
    norm = np.sqrt(clipped[0][0] ** 2 + clipped[0][1] ** 2).item()
    assert norm == pytest.approx(1.0)
    untouched = clip_gradients(grads, 100.0)
    assert untouched[0][0][0, 0] == 3.0


def test_hard_update_copies_and_is_idempotent():
    online = QNetwork([6, 5, 3], rng=np.random.default_rng(1))
    target = QNetwork([6, 5, 3], rng=np.random.default_rng(2))
    hard_update(target, online)
    x = np.random.default_rng(3).normal(size=(4, 6))
    assert np.array_equal(target.forward(x), online.forward(x))
    snapshot = [w.copy() for w in target.weights]
    hard_update(target, online)
    for a, b in zip(snapshot, target.weights):
        assert np.array_equal(a, b)


def test_hard_update_rejects_architecture_mismatch():
    with pytest.raises(ValueError):
        hard_update(QNetwork([6, 5, 3]), QNetwork([6, 4, 3]))


def test_copy_is_detached():
    net = QNetwork([4, 3], rng=np.random.default_rng(0))
    dup = net.copy()
    net.weights[0][0, 0] += 1.0
    assert dup.weights[0][0, 0] != net.weights[0][0, 0]


def test_checkpoint_round_trip(tmp_path):
    net = QNetwork([12, 8, 5], dropout_p=0.1, rng=np.random.default_rng(4))
    opt = AdamW(net, lr=1e-3)
    rng = np.random.default_rng(5)
    for _ in range(3):
        grads = [
            (rng.normal(size=w.shape), rng.normal(size=b.shape))
            for w, b in zip(net.weights, net.biases)
        ]
        opt.step(net, grads)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, opt, str(path))
    loaded, loaded_opt, footer = load_checkpoint(str(path))
    assert footer is None
    assert loaded.layer_dims == net.layer_dims
    assert loaded.dropout_p == net.dropout_p
    assert loaded_opt.t == opt.t
    for a, b in zip(loaded.parameters(), net.parameters()):
        assert np.array_equal(a, b)
    assert np.array_equal(loaded_opt.m, opt.m)
    assert np.array_equal(loaded_opt.v, opt.v)
    # byte-identical re-save
    path2 = tmp_path / "net2.ckpt"
    save_checkpoint(loaded, loaded_opt, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_corrupt_magic(tmp_path):
    net = QNetwork([6, 4, 3])
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, None, str(path))
    raw = bytearray(path.read_bytes())
    raw[0:5] = b"NOPE!"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_checkpoint_rejects_truncation(tmp_path):
    net = QNetwork([6, 4, 3])
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, None, str(path))
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
