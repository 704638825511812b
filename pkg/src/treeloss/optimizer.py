"""Single-sample SGD with iterate averaging.

The averaged iterate is ``(1/T) * sum(theta_1 .. theta_T)`` where
``theta_1`` is the initial point and ``theta_{t+1} = theta_t - eta * g_t``.
In ``theory`` mode the step size is ``eta = B / (rho * sqrt(T))``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .tree_loss import FLAT, Dataset, ParamMatrix

__all__ = ["SGDConfig", "TrainResult", "sgd_train", "initialize_params", "write_trajectory"]

# below this many incidence entries a dense matvec beats scipy.sparse
_DENSE_LIMIT = 50_000


@dataclass(frozen=True)
class SGDConfig:
    iterations: int
    step_mode: str = "theory"
    B: float | None = None
    rho: float | None = None
    eta: float | None = None
    averaging: bool = True
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise InvalidInputError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_mode == "theory":
            if not (self.B is not None and self.B > 0 and self.rho is not None and self.rho > 0):
                raise InvalidInputError("theory step mode needs B > 0 and rho > 0")
        elif self.step_mode == "constant":
            if self.eta is None or not self.eta > 0:
                raise InvalidInputError("constant step mode needs eta > 0")
        else:
            raise InvalidInputError(f"unknown step mode {self.step_mode!r}")

    @property
    def step_size(self) -> float:
        if self.step_mode == "theory":
            return math.sqrt(self.B**2 / (self.rho**2 * self.iterations))
        return float(self.eta)


@dataclass
class TrainResult:
    final_params: ParamMatrix
    loss_trajectory: list
    suboptimality_estimate: float | None = None
    eta: float = 0.0
    iterates: list | None = field(default=None, repr=False)


def initialize_params(variant, k, k_prime, d, scheme="zeros", scale=1.0, seed=0, paths=None) -> ParamMatrix:
    """All-zero or i.i.d. ``N(0, scale**2)`` starting parameters."""
    rows = k if variant == FLAT else k_prime
    if paths is not None and (paths.k != k or paths.k_prime != k_prime):
        raise InvalidInputError("k / k_prime disagree with the path table")
    if min(k, rows, d) < 1:
        raise InvalidInputError("dimensions must be positive")
    if scheme == "zeros":
        entries = np.zeros((rows, d))
    elif scheme == "gaussian":
        entries = np.random.default_rng(seed).normal(0.0, scale, size=(rows, d))
    else:
        raise InvalidInputError(f"unknown init scheme {scheme!r}")
    return ParamMatrix(variant, entries, paths)


def _sample_order(n, T, rng, shuffle):
    if not shuffle:
        return rng.integers(0, n, size=T)
    epochs = -(-T // n)
    return np.concatenate([rng.permutation(n) for _ in range(epochs)])[:T]


def _path_operators(params):
    if params.variant == FLAT:
        return None, None
    table = params.paths
    if table.k * table.k_prime <= _DENSE_LIMIT:
        m = table.incidence.toarray()
        return m, np.ascontiguousarray(m.T)
    return table.incidence, table.incidence_t


def sgd_train(initial: ParamMatrix, data: Dataset, config: SGDConfig, record_iterates=False) -> TrainResult:
    """Run ``config.iterations`` single-sample SGD steps from ``initial``.

    Samples are drawn uniformly with replacement, or from per-epoch
    shuffles when ``config.shuffle`` is set.  The returned parameters are the
    averaged iterate when ``config.averaging`` is on and the last iterate
    otherwise.  The loss trajectory holds ``(iteration, sample loss)`` pairs
    every ``max(1, T // 1000)`` steps.
    """
    if data.d != initial.d:
        raise InvalidInputError(f"data has d={data.d} but parameters have d={initial.d}")
    if data.n < 1:
        raise InvalidInputError("training data is empty")
    if data.labels.max() >= initial.k:
        raise InvalidInputError(f"data labels exceed the {initial.k} model classes")

    T = int(config.iterations)
    eta = config.step_size
    rng = np.random.default_rng(config.seed)
    order = _sample_order(data.n, T, rng, config.shuffle)
    stride = max(1, T // 1000)
    X, Y = data.features, data.labels
    M, MT = _path_operators(initial)

    theta = initial.entries.copy()
    total = np.zeros_like(theta) if config.averaging else None
    trajectory = []
    iterates = [] if record_iterates else None

    # overflow surfaces as a DivergenceError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            if total is not None:
                total += theta
            if iterates is not None:
                iterates.append(theta.copy())
            i = order[t]
            x = X[i]
            z = theta @ x
            raw = z if M is None else M @ z
            scores = -raw
            top = scores.max()
            e = np.exp(scores - top)
            norm = e.sum()
            residual = -e / norm
            y = Y[i]
            residual[y] += 1.0
            loss = math.log(norm) + top - scores[y]
            if not math.isfinite(loss):
                raise DivergenceError(t)
            if t % stride == 0:
                trajectory.append((t, max(0.0, loss)))
            g = residual if MT is None else MT @ residual
            theta -= eta * np.outer(g, x)

    if not np.all(np.isfinite(theta)):
        raise DivergenceError(T)
    final = total / T if total is not None else theta
    return TrainResult(initial.with_entries(final), trajectory, eta=eta, iterates=iterates)


def write_trajectory(path, result: TrainResult):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["iteration", "loss"])
    for it, loss in result.loss_trajectory:
        writer.writerow([it, repr(float(loss))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")
