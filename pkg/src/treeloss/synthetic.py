"""Gaussian class-center data.

``W* ~ N(0, 1)^{k x d}``, labels are uniform over ``[k]`` and each feature
vector is its class center plus isotropic noise of scale ``sigma``.

Every random quantity draws from its own stream derived from the trial seed,
so e.g. changing ``n`` leaves ``W*`` untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .tree_loss import Dataset, make_dataset

__all__ = [
    "SynthConfig",
    "TEST_SIZE",
    "stream",
    "sample_true_params",
    "sample_bad_params",
    "sample_dataset",
    "sample_test_set",
]

TEST_SIZE = 10_000

_STREAMS = {
    "w_star": 0,
    "w_bad": 1,
    "train_labels": 2,
    "train_noise": 3,
    "test_labels": 4,
    "test_noise": 5,
}


@dataclass(frozen=True)
class SynthConfig:
    n: int = 100
    d: int = 64
    k: int = 10
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.k < 1:
            raise InvalidInputError(f"need n, d, k >= 1, got n={self.n} d={self.d} k={self.k}")
        if not self.sigma >= 0:
            raise InvalidInputError(f"sigma must be >= 0, got {self.sigma}")


def stream(seed, name) -> np.random.Generator:
    """Independent generator for one named quantity of one trial."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


def sample_true_params(config: SynthConfig) -> np.ndarray:
    return stream(config.seed, "w_star").standard_normal((config.k, config.d))


def sample_bad_params(config: SynthConfig) -> np.ndarray:
    """A second Gaussian matrix unrelated to ``W*`` (for degraded metrics)."""
    return stream(config.seed, "w_bad").standard_normal((config.k, config.d))


def sample_dataset(w_star, config: SynthConfig, split="train", n=None) -> Dataset:
    w_star = np.asarray(w_star, dtype=np.float64)
    if w_star.shape != (config.k, config.d):
        raise InvalidInputError(f"w_star has shape {w_star.shape}, config says ({config.k}, {config.d})")
    if split not in ("train", "test"):
        raise InvalidInputError(f"split must be 'train' or 'test', got {split!r}")
    n = config.n if n is None else int(n)
    labels = stream(config.seed, f"{split}_labels").integers(0, config.k, size=n)
    noise = stream(config.seed, f"{split}_noise").standard_normal((n, config.d))
    features = w_star[labels] + config.sigma * noise
    return make_dataset(features, labels, k=config.k)


def sample_test_set(w_star, config: SynthConfig, n=TEST_SIZE) -> Dataset:
    return sample_dataset(w_star, config, split="test", n=n)
