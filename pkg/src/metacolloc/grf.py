"""Multi-scale Gaussian random field tasks built from random cosine features."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig

MODES = ("rbf", "highfreq", "mixed")


@dataclass(frozen=True)
class GRFConfig:
    mode_probs: tuple = (0.4, 0.4, 0.2)
    length_scale: tuple = (0.005, 0.05)
    center_freq: tuple = (10.0, 300.0)
    bandwidth: tuple = (1.0, 15.0)
    n_features: int = 256
    n_train: int = 4000
    n_test: int = 1500
    input_dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if len(self.mode_probs) != 3 or abs(sum(self.mode_probs) - 1.0) > 1e-12 or min(self.mode_probs) < 0:
            raise InvalidConfig(f"mode probabilities must be 3 non-negative values summing to 1: {self.mode_probs}")
        for name in ("length_scale", "center_freq", "bandwidth"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidConfig(f"{name} range must be positive and ordered, got {(lo, hi)}")
        if self.n_features < 1 or self.n_train < 1 or self.n_test < 0:
            raise InvalidConfig("feature and point counts must be positive")
        if self.input_dim not in (2, 3):
            raise InvalidConfig(f"input_dim must be 2 or 3, got {self.input_dim}")


@dataclass
class GRFTask:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    mode: str
    hyper: dict = field(default_factory=dict)


def _rbf_frequencies(rng, n, d, cfg, hyper):
    lo, hi = cfg.length_scale
    ell = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    hyper["length_scale"] = ell
    return rng.normal(size=(n, d)) / ell


def _highfreq_frequencies(rng, n, d, cfg, hyper):
    mu = float(rng.uniform(*cfg.center_freq))
    sigma = float(rng.uniform(*cfg.bandwidth))
    hyper["center_freq"] = mu
    hyper["bandwidth"] = sigma
    n_neg = n // 2
    pos = rng.normal(mu, sigma, size=(n - n_neg, d))
    return np.concatenate([pos, -pos[:n_neg]])


def random_feature_map(X, omega, phase):
    return np.sqrt(2.0 / omega.shape[0]) * np.cos(X @ omega.T + phase)


def sample_task(config, rng):
    """Draw one task: uniform points, a random cosine feature map, Gaussian weights."""
    d, D = config.input_dim, config.n_features
    mode = MODES[rng.choice(3, p=np.asarray(config.mode_probs))]
    M = config.n_train + config.n_test
    X = rng.uniform(0.0, 1.0, size=(M, d))
    hyper = {}
    if mode == "rbf":
        omega = _rbf_frequencies(rng, D, d, config, hyper)
    elif mode == "highfreq":
        omega = _highfreq_frequencies(rng, D, d, config, hyper)
    else:
        n_rbf = D - D // 2
        omega = np.concatenate(
            [
                _rbf_frequencies(rng, n_rbf, d, config, hyper),
                _highfreq_frequencies(rng, D // 2, d, config, hyper),
            ]
        )
    phase = rng.uniform(0.0, 2 * np.pi, size=D)
    weights = rng.normal(size=D)
    Y = random_feature_map(X, omega, phase) @ weights
    n = config.n_train
    hyper["omega"] = omega
    hyper["phase"] = phase
    return GRFTask(X[:n], Y[:n], X[n:], Y[n:], mode, hyper)


def task_rng(seed, epoch, task_index):
    return np.random.default_rng([seed, epoch, task_index])


def task_batch(config, epoch, task_index):
    """Task keyed by ``(config.seed, epoch, task_index)``; independent of call order."""
    return sample_task(config, task_rng(config.seed, epoch, task_index))


def dump_task_csv(task, path):
    d = task.X_train.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["y", "split"])
        for split, X, Y in (("train", task.X_train, task.Y_train), ("test", task.X_test, task.Y_test)):
            for x, y in zip(X, Y):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(y)), split])
