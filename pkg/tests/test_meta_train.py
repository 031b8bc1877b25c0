import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metacolloc.errors import InvalidConfig, TrainingDiverged
from metacolloc.grf import GRFConfig, GRFTask
from metacolloc.meta_train import (
    OptimizerState,
    TrainConfig,
    adamw_step,
    cosine_lr,
    task_loss_and_grads,
    train,
)
from metacolloc.network import BasisParams, forward, init_params


def _task(rng, n_train=20, n_test=10, Y=None):
    X = rng.uniform(size=(n_train + n_test, 2))
    Y = rng.normal(size=n_train + n_test) if Y is None else Y
    return GRFTask(X[:n_train], Y[:n_train], X[n_train:], Y[n_train:], "rbf")


def _scalar_params(theta):
    return BasisParams(2, 4, {"t": np.array([theta], dtype=float)})


@pytest.mark.parametrize("mode", ["same_set", "split"])
def test_zero_targets_give_zero_loss(mode):
    params = init_params(2, 8, seed=0)
    task = _task(np.random.default_rng(0), Y=np.zeros(30))
    loss, grads, _ = task_loss_and_grads(params, task, mode)
    assert loss == 0.0
    for g in grads.values():
        np.testing.assert_array_equal(g, 0.0)


def test_exact_fit_loss_is_tiny():
    params = init_params(2, 16, seed=2)
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(60, 2))
    Y = forward(params, X) @ rng.normal(size=16)
    task = GRFTask(X[:40], Y[:40], X[40:], Y[40:], "rbf")
    for mode in ("same_set", "split"):
        loss, _, _ = task_loss_and_grads(params, task, mode)
        assert loss < 1e-18


def _perturbed(params, name, index, delta):
    out = params.copy()
    out.tensors[name][index] += delta
    return out


@pytest.mark.parametrize("mode", ["same_set", "split"])
def test_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(7)
    params = init_params(2, 8, seed=4)
    # non-zero biases so every path is exercised
    for name, t in params.tensors.items():
        if t.ndim == 1:
            params.tensors[name] = 0.1 * rng.normal(size=t.shape)
    task = _task(rng)
    _, grads, fell_back = task_loss_and_grads(params, task, mode)
    assert not fell_back
    h = 1e-6
    num, ana = [], []
    for name, t in params.tensors.items():
        for _ in range(3):
            idx = tuple(rng.integers(s) for s in t.shape)
            up = task_loss_and_grads(_perturbed(params, name, idx, h), task, mode)[0]
            dn = task_loss_and_grads(_perturbed(params, name, idx, -h), task, mode)[0]
            num.append((up - dn) / (2 * h))
            ana.append(grads[name][idx])
    num, ana = np.array(num), np.array(ana)
    assert np.linalg.norm(num - ana) / np.linalg.norm(num) < 1e-5


def test_split_falls_back_when_rank_deficient():
    params = init_params(2, 16, seed=0)
    task = _task(np.random.default_rng(0), n_train=5, n_test=10)
    loss, grads, fell_back = task_loss_and_grads(params, task, "split")
    assert fell_back
    ref, ref_grads, _ = task_loss_and_grads(params, task, "same_set")
    assert loss == ref


def test_adamw_first_step():
    p = _scalar_params(1.0)
    adamw_step(p, {"t": np.array([1.0])}, OptimizerState.zeros_like(p), lr=0.1)
    np.testing.assert_allclose(p.tensors["t"], [0.9], atol=1e-7)


def test_adamw_decay_only():
    p = _scalar_params(2.0)
    adamw_step(p, {"t": np.array([0.0])}, OptimizerState.zeros_like(p), lr=0.1, weight_decay=0.1)
    np.testing.assert_allclose(p.tensors["t"], [2.0 * 0.99], rtol=1e-15)


def test_adamw_zero_gradient_no_decay_is_identity():
    params = init_params(2, 8, seed=0)
    before = params.copy()
    state = OptimizerState.zeros_like(params)
    zeros = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    adamw_step(params, zeros, state, lr=0.1)
    assert state.step == 1
    for k in params.tensors:
        np.testing.assert_array_equal(params.tensors[k], before.tensors[k])
    assert params.fourier_scales == before.fourier_scales


def test_cosine_examples():
    assert cosine_lr(0, 100, 1e-3) == 1e-3
    assert cosine_lr(100, 100, 1e-3) == pytest.approx(0.0, abs=1e-20)
    assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)
    with pytest.raises(InvalidConfig):
        cosine_lr(101, 100, 1e-3)


@given(st.integers(1, 500), st.floats(1e-6, 1.0))
@settings(max_examples=50, deadline=None)
def test_cosine_nonincreasing(total, lr0):
    values = [cosine_lr(s, total, lr0) for s in range(total + 1)]
    assert all(b <= a + 1e-18 for a, b in zip(values, values[1:]))


SMALL_GRF = GRFConfig(n_train=40, n_test=16, n_features=32)


def test_zero_lr_returns_init():
    cfg = TrainConfig(epochs=1, tasks_per_epoch=1, width=8, lr=0.0, grf=SMALL_GRF)
    out = train(cfg)
    init = init_params(2, 8, seed=0)
    for k in init.tensors:
        np.testing.assert_array_equal(out.params.tensors[k], init.tensors[k])


def test_training_is_deterministic(tmp_path):
    cfg = TrainConfig(epochs=2, tasks_per_epoch=3, width=8, lr=1e-2, grf=SMALL_GRF, seed=5)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    train(cfg, checkpoint=a)
    train(cfg, checkpoint=b)
    assert a.read_bytes() == b.read_bytes()


def test_training_log_and_fourier_scales(tmp_path):
    cfg = TrainConfig(epochs=3, tasks_per_epoch=2, width=8, lr=1e-2, grf=SMALL_GRF, loss_mode="split")
    seen = []
    out = train(cfg, log_path=tmp_path / "log.csv", progress=seen.append)
    rows = list(csv.DictReader(open(tmp_path / "log.csv")))
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]
    assert all(np.isfinite(float(r["mean_loss"])) for r in rows)
    assert len(seen) == 3
    assert out.params.fourier_scales == init_params(2, 8, 0).fourier_scales
    assert float(rows[-1]["lr"]) < cfg.lr


def test_training_aborts_on_non_finite_loss():
    cfg = TrainConfig(epochs=1, tasks_per_epoch=2, width=8, grf=SMALL_GRF, seed=3)
    params = init_params(2, 8, seed=0)
    params.tensors["low1.W1"][0, 0] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(cfg, params=params)
    assert info.value.seed == 3


def test_invalid_train_config():
    with pytest.raises(InvalidConfig):
        TrainConfig(epochs=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(loss_mode="holdout")
    with pytest.raises(InvalidConfig):
        TrainConfig(input_dim=3)
