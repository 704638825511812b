"""Cross-entropy over a linear model in flat, U-tree and V-tree form.

Class scores follow the ``exp(-w_i . x)`` convention: the score of class
``i`` is ``-w_i . x`` and :func:`predict` returns ``argmin_i w_i . x``.

In the U and V parameterizations the class vector ``w_i`` is the sum of the
parameter rows on the path ``P_i``.  With ``M`` the ``k x k'`` path
incidence matrix this is ``W = M @ A``, so the loss is the same function of
``W`` and the gradient with respect to ``A`` is ``M.T @ grad_W``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .cover_tree import PathTable
from .errors import InvalidInputError, ParseError

__all__ = [
    "FLAT",
    "U",
    "V",
    "ParamMatrix",
    "Dataset",
    "Evaluation",
    "make_dataset",
    "reconstruct_w",
    "decompose_w",
    "loss_forward",
    "loss_gradient",
    "predict",
    "evaluate",
    "frobenius_norm",
    "read_dataset_csv",
    "write_dataset_csv",
    "read_params",
    "write_params",
]

FLAT, U, V = "FLAT", "U", "V"


@dataclass(frozen=True)
class ParamMatrix:
    variant: str
    entries: np.ndarray
    paths: PathTable | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise InvalidInputError(f"parameter matrix must be 2-D, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidInputError("parameter matrix has non-finite entries")
        object.__setattr__(self, "entries", entries)
        if self.variant == FLAT:
            if self.paths is not None:
                raise InvalidInputError("FLAT parameters carry no path table")
        elif self.variant in (U, V):
            if self.paths is None or self.paths.variant != self.variant:
                raise InvalidInputError(f"{self.variant} parameters need a {self.variant} path table")
            if entries.shape[0] != self.paths.k_prime:
                raise InvalidInputError(
                    f"{self.variant} parameters need {self.paths.k_prime} rows, got {entries.shape[0]}"
                )
        else:
            raise InvalidInputError(f"unknown variant {self.variant!r}")

    @property
    def k(self) -> int:
        return self.entries.shape[0] if self.paths is None else self.paths.k

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def with_entries(self, entries) -> "ParamMatrix":
        return ParamMatrix(self.variant, entries, self.paths)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    rho: float

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


class Evaluation(NamedTuple):
    mean_loss: float
    top1: float
    similarity_accuracy: float | None


def make_dataset(features, labels, k=None) -> Dataset:
    """Validate and bundle features and labels; ``rho`` is the max row norm."""
    x = np.array(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"features must be n x d, got shape {x.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or len(y) != x.shape[0]:
        raise InvalidInputError("labels must be a vector with one entry per sample")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InvalidInputError("labels must be integers")
    y = y.astype(np.int64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features have non-finite entries")
    if k is None:
        k = int(y.max()) + 1 if y.size else 0
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InvalidInputError(f"labels must lie in [0, {k})")
    rho = float(np.sqrt((x * x).sum(axis=1)).max()) if x.shape[0] else 0.0
    x.setflags(write=False)
    y.setflags(write=False)
    return Dataset(x, y, int(k), rho)


def reconstruct_w(params: ParamMatrix) -> np.ndarray:
    """Class weight matrix: row ``i`` is the sum of the rows on path ``i``."""
    if params.variant == FLAT:
        raise InvalidInputError("FLAT parameters have nothing to reconstruct")
    return np.asarray(params.paths.incidence @ params.entries)


def decompose_w(w, paths: PathTable) -> ParamMatrix:
    """Inverse of :func:`reconstruct_w`.

    Each row holds the difference between its class vector and the class
    vector of its parent row; the root row holds the root class vector.  For
    a V table a pseudoclass stands for the class of the node it replaced,
    which gives the canonical V decomposition with the same nonzero rows as
    the U one.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != paths.k:
        raise InvalidInputError(f"w must have {paths.k} rows, got shape {w.shape}")
    label = np.asarray(paths.row_label)
    parent = np.asarray(paths.row_parent)
    out = w[label].copy()
    has_parent = parent >= 0
    out[has_parent] -= w[label[parent[has_parent]]]
    return ParamMatrix(paths.variant, out, paths)


def _weights(params):
    return params.entries if params.variant == FLAT else reconstruct_w(params)


def _check_x(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise InvalidInputError(f"x must have shape ({d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("x has non-finite entries")
    return x


def _check_y(y, k):
    if not 0 <= int(y) < k:
        raise InvalidInputError(f"label {y} outside [0, {k})")
    return int(y)


def _log_softmax(scores):
    m = scores.max(axis=-1, keepdims=True)
    shifted = scores - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_forward(params: ParamMatrix, x, y) -> float:
    w = _weights(params)
    x = _check_x(x, params.d)
    y = _check_y(y, w.shape[0])
    logp = _log_softmax(-(w @ x))
    return max(0.0, float(-logp[y]))


def class_residual(w, x, y):
    """``dloss/dw_i = residual_i * x``; also returns the loss."""
    logp = _log_softmax(-(w @ x))
    residual = -np.exp(logp)
    residual[y] += 1.0
    return residual, float(-logp[y])


def loss_gradient(params: ParamMatrix, x, y) -> np.ndarray:
    """Gradient with respect to ``params.entries`` (same shape)."""
    w = _weights(params)
    x = _check_x(x, params.d)
    y = _check_y(y, w.shape[0])
    residual, _ = class_residual(w, x, y)
    if params.variant != FLAT:
        residual = params.paths.incidence_t @ residual
    return np.outer(residual, x)


def predict(params: ParamMatrix, x) -> int:
    w = _weights(params)
    x = _check_x(x, params.d)
    return int(np.argmin(w @ x))


def evaluate(params: ParamMatrix, data: Dataset, metric=None) -> Evaluation:
    """Mean loss, top-1 accuracy and (with a metric) similarity accuracy.

    Similarity accuracy is the mean of ``1 - d(prediction, truth)`` on the
    normalized label metric, so it equals top-1 accuracy under the discrete
    metric.
    """
    w = _weights(params)
    if data.d != params.d:
        raise InvalidInputError(f"data has d={data.d} but parameters have d={params.d}")
    if data.n == 0:
        raise InvalidInputError("cannot evaluate on an empty dataset")
    if data.labels.max() >= w.shape[0]:
        raise InvalidInputError(f"data labels exceed the {w.shape[0]} model classes")
    raw = data.features @ w.T
    logp = _log_softmax(-raw)
    rows = np.arange(data.n)
    mean_loss = float(-logp[rows, data.labels].mean())
    pred = np.argmin(raw, axis=1)
    top1 = float(np.mean(pred == data.labels))
    sa = None
    if metric is not None:
        dist = metric.distances if hasattr(metric, "distances") else np.asarray(metric)
        sa = float(np.mean(1.0 - dist[pred, data.labels]))
    return Evaluation(mean_loss, top1, sa)


def frobenius_norm(params) -> float:
    a = params.entries if isinstance(params, ParamMatrix) else np.asarray(params, dtype=np.float64)
    return float(math.sqrt(float(np.sum(a * a))))


def _parse_float_row(fields, path, lineno):
    try:
        return [float(v) for v in fields]
    except ValueError:
        raise ParseError("non-numeric value", path, lineno) from None


def read_dataset_csv(path, label_index=None, k=None) -> Dataset:
    """Read ``label,f1,...,fd`` rows; a header row is detected and skipped.

    Labels are integer class indices unless ``label_index`` (token -> index)
    is given, in which case column 0 holds label tokens.  Unknown tokens are
    reported together by name.
    """
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    start = 0
    if rows:
        try:
            [float(v) for v in rows[0][1:]]
            if label_index is None:
                int(rows[0][0])
        except ValueError:
            start = 1
    labels, feats, missing = [], [], []
    width = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) < 2:
            raise ParseError("expected a label followed by at least one feature", path, lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} columns, got {len(row)}", path, lineno)
        token = row[0].strip()
        if label_index is not None:
            if token not in label_index:
                missing.append(token)
                label = -1
            else:
                label = label_index[token]
        else:
            try:
                label = int(token)
            except ValueError:
                raise ParseError(f"label {token!r} is not an integer class index", path, lineno) from None
            if label < 0:
                raise ParseError(f"negative label {label}", path, lineno)
        labels.append(label)
        feats.append(_parse_float_row(row[1:], path, lineno))
    if missing:
        names = ", ".join(sorted(set(missing)))
        raise InvalidInputError(f"labels missing from the label vocabulary: {names}")
    if not feats:
        raise ParseError("dataset has no samples", path, len(rows))
    return make_dataset(np.array(feats), np.array(labels, dtype=np.int64), k=k)


def write_dataset_csv(path, data: Dataset, header=True):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    if header:
        writer.writerow(["label"] + [f"x{j}" for j in range(data.d)])
    for label, row in zip(data.labels, data.features):
        writer.writerow([int(label)] + [repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def write_params(path, params: ParamMatrix):
    rows, cols = params.entries.shape
    lines = [f"{params.variant} {rows} {cols}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in params.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_params(path, paths: PathTable | None = None) -> ParamMatrix:
    """Load a matrix written by :func:`write_params`.

    U and V matrices need the matching path table, usually re-derived from
    the saved cover tree.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()]
    if not lines:
        raise ParseError("empty parameter file", path, 1)
    head = lines[0].split()
    if len(head) != 3 or head[0] not in (FLAT, U, V):
        raise ParseError("header must be 'variant rows cols'", path, 1)
    try:
        n_rows, n_cols = int(head[1]), int(head[2])
    except ValueError:
        raise ParseError("rows and cols must be integers", path, 1) from None
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != n_rows:
        raise ParseError(f"header declares {n_rows} rows, file has {len(body)}", path, len(lines))
    entries = []
    for lineno, ln in body:
        vals = _parse_float_row(ln.split(), path, lineno)
        if len(vals) != n_cols:
            raise ParseError(f"expected {n_cols} values, got {len(vals)}", path, lineno)
        entries.append(vals)
    entries = np.array(entries, dtype=np.float64).reshape(n_rows, n_cols)
    return ParamMatrix(head[0], entries, paths if head[0] != FLAT else None)
