"""Offline meta-training of the basis: one AdamW step per random-field task,
with the gradient taken through the least-squares fit."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidInput, RankDeficient, TrainingDiverged
from .grf import GRFConfig, task_batch
from .linalg import lstsq, lstsq_value_gradient, lstsq_vjp
from .network import backward, forward, forward_and_backward, init_params, save_checkpoint

log = logging.getLogger(__name__)

LOSS_MODES = ("same_set", "split")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    tasks_per_epoch: int = 128
    width: int = 256
    input_dim: int = 2
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    loss_mode: str = "same_set"
    seed: int = 0
    precision: str = "fp64"
    grf: GRFConfig = field(default_factory=GRFConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.tasks_per_epoch < 1:
            raise InvalidConfig("epochs and tasks per epoch must be positive")
        if self.lr < 0 or self.weight_decay < 0 or self.eps <= 0:
            raise InvalidConfig("learning rate and weight decay must be non-negative, eps positive")
        if not all(0 <= b < 1 for b in self.betas):
            raise InvalidConfig(f"betas must lie in [0, 1), got {self.betas}")
        if self.loss_mode not in LOSS_MODES:
            raise InvalidConfig(f"loss mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.precision not in ("fp32", "fp64"):
            raise InvalidConfig(f"training precision must be fp32 or fp64, got {self.precision!r}")
        if self.grf.input_dim != self.input_dim:
            raise InvalidConfig("task input dimension does not match the basis")


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            {k: np.zeros_like(t) for k, t in params.tensors.items()},
            {k: np.zeros_like(t) for k, t in params.tensors.items()},
        )


@dataclass
class TrainResult:
    params: object
    log: list
    rank_fallbacks: int = 0
    seconds: float = 0.0


def _same_set(params, X, Y):
    def grad_fn(phi):
        return lstsq_value_gradient(phi, Y)

    return forward_and_backward(params, X, grad_fn)


def _split(params, task):
    phi_tr = forward(params, task.X_train)
    phi_te = forward(params, task.X_test)
    w = lstsq(phi_tr, task.Y_train).solution
    r_te = phi_te @ w - task.Y_test
    n_te = len(task.Y_test)
    loss = float(r_te @ r_te) / n_te
    gbar = (2.0 / n_te) * (phi_te.T @ r_te)
    g_train = lstsq_vjp(phi_tr, task.Y_train, w, gbar)
    g_test = (2.0 / n_te) * np.outer(r_te, w)
    grads = backward(params, task.X_train, g_train)
    for k, g in backward(params, task.X_test, g_test).items():
        grads[k] = grads[k] + g
    return loss, grads


def task_loss_and_grads(params, task, mode="same_set"):
    """Loss of the best least-squares fit on ``task`` and its parameter gradient.

    Returns ``(loss, grads, fell_back)``; ``fell_back`` is set when split mode hit
    a rank-deficient train block and the same-set gradient was used instead.
    """
    if mode not in LOSS_MODES:
        raise InvalidConfig(f"loss mode must be one of {LOSS_MODES}, got {mode!r}")
    if mode == "split" and len(task.Y_test):
        try:
            loss, grads = _split(params, task)
            return loss, grads, False
        except RankDeficient:
            loss, grads = _same_set(params, task.X_train, task.Y_train)
            return loss, grads, True
    loss, grads = _same_set(params, task.X_train, task.Y_train)
    return loss, grads, False


def adamw_step(params, grads, state, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
    """In-place AdamW update; decay is applied to the weights before the moment step."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, theta in params.tensors.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            theta *= 1.0 - lr * weight_decay
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def cosine_lr(step, total_steps, lr0):
    if not 0 <= step <= total_steps:
        raise InvalidConfig(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr0
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))


def _grf_config(config):
    g = config.grf
    if g.seed != config.seed:
        g = GRFConfig(**{**g.__dict__, "seed": config.seed})
    return g


def write_log(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "lr", "wall_seconds"])
        for row in rows:
            writer.writerow([row["epoch"], repr(row["mean_loss"]), repr(row["lr"]), f"{row['wall_seconds']:.3f}"])


def train(config, checkpoint=None, log_path=None, params=None, progress=None):
    """Run ``epochs * tasks_per_epoch`` optimizer steps and return the trained basis.

    ``progress`` is called with each epoch's log row. The checkpoint holds only
    reproducible metadata so identical runs give identical bytes.
    """
    if params is None:
        params = init_params(config.input_dim, config.width, config.seed)
    params = params.copy()
    grf = _grf_config(config)
    state = OptimizerState.zeros_like(params)
    total = config.epochs * config.tasks_per_epoch
    rows = []
    fallbacks = 0
    t_start = time.perf_counter()
    for epoch in range(config.epochs):
        losses = []
        lr = config.lr
        for t in range(config.tasks_per_epoch):
            task = task_batch(grf, epoch, t)
            view = params if config.precision == "fp64" else params.with_precision("fp32")
            try:
                loss, grads, fell_back = task_loss_and_grads(view, task, config.loss_mode)
            except InvalidInput:
                loss, grads, fell_back = math.nan, {}, False
            fallbacks += fell_back
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, task {t} (task seed {[config.seed, epoch, t]})",
                    epoch,
                    t,
                    config.seed,
                )
            grads = {k: np.asarray(g, dtype=np.float64) for k, g in grads.items()}
            lr = cosine_lr(state.step, total, config.lr)
            adamw_step(params, grads, state, lr, config.weight_decay, config.betas, config.eps)
            losses.append(loss)
        row = {
            "epoch": epoch + 1,
            "mean_loss": float(np.mean(losses)),
            "lr": lr,
            "wall_seconds": time.perf_counter() - t_start,
        }
        rows.append(row)
        log.info("epoch %d mean loss %.4e lr %.3e", row["epoch"], row["mean_loss"], lr)
        if progress is not None:
            progress(row)
    params.metadata = {
        "epochs": config.epochs,
        "tasks_per_epoch": config.tasks_per_epoch,
        "lr": config.lr,
        "weight_decay": config.weight_decay,
        "loss_mode": config.loss_mode,
        "seed": config.seed,
        "n_features": grf.n_features,
        "n_train": grf.n_train,
        "n_test": grf.n_test,
        "final_loss": rows[-1]["mean_loss"],
        "rank_fallbacks": fallbacks,
    }
    if checkpoint is not None:
        save_checkpoint(params, checkpoint)
    if log_path is not None:
        write_log(rows, log_path)
    return TrainResult(params, rows, fallbacks, time.perf_counter() - t_start)
