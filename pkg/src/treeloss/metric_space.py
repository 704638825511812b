"""Distance metrics over class labels.

A :class:`LabelMetric` is a dense, immutable ``k x k`` distance matrix.  All
constructors normalize so that the largest pairwise distance is 1, which is
the scale the cover tree assumes for its root level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InvalidInputError, ParseError

__all__ = [
    "LabelMetric",
    "MetricReport",
    "build_embedding_metric",
    "mix_epsilon_metric",
    "metric_from_distances",
    "verify_metric_axioms",
    "estimate_doubling_constant",
    "read_embeddings",
    "write_embeddings",
]

_EXACT_COVER_MAX = 12


@dataclass(frozen=True)
class LabelMetric:
    """Normalized pairwise distances between ``k`` labels.

    ``scale`` is the maximum pairwise distance before normalization, so
    ``distances * scale`` recovers the raw metric.
    """

    distances: np.ndarray
    scale: float = 1.0
    labels: tuple | None = None

    def __post_init__(self):
        d = np.array(self.distances, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidInputError(f"distance matrix must be square, got shape {d.shape}")
        if self.labels is not None and len(self.labels) != d.shape[0]:
            raise InvalidInputError("labels length does not match distance matrix")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)

    @property
    def k(self) -> int:
        return self.distances.shape[0]

    def __call__(self, i, j):
        return self.distances[i, j]


@dataclass
class MetricReport:
    axiom_violations: list = field(default_factory=list)
    symmetry_violations: list = field(default_factory=list)
    diagonal_violations: list = field(default_factory=list)
    doubling_constant_estimate: float | None = None
    doubling_dimension_estimate: float | None = None
    triples_checked: int = 0

    @property
    def valid(self) -> bool:
        return not (self.axiom_violations or self.symmetry_violations or self.diagonal_violations)


def _normalized(raw, labels=None):
    raw = np.asarray(raw, dtype=np.float64)
    scale = float(raw.max()) if raw.size else 0.0
    if scale > 0:
        raw = raw / scale
    return LabelMetric(raw, scale=scale if scale > 0 else 1.0, labels=labels)


def metric_from_distances(distances, labels=None) -> LabelMetric:
    """Wrap an explicit distance matrix, normalizing it to max 1.

    No axiom checks happen here; use :func:`verify_metric_axioms`.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidInputError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InvalidInputError("distance matrix has non-finite entries")
    if np.any(d < 0):
        raise InvalidInputError("distance matrix has negative entries")
    return _normalized(d, labels)


def _as_matrix(vectors, name):
    try:
        arr = np.array(vectors, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise InvalidInputError(f"{name}: vectors must all have the same dimension") from exc
    if arr.ndim == 1 and len(arr) == 0:
        raise InvalidInputError(f"{name}: need at least one vector")
    if arr.ndim != 2:
        raise InvalidInputError(f"{name}: expected a k x m array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name}: expected k >= 1 and m >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: non-finite entries")
    return arr


def _euclidean(rows):
    if rows.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(rows, metric="euclidean"))


def build_embedding_metric(embeddings, labels=None) -> LabelMetric:
    """Euclidean distance between label embeddings, normalized to max 1.

    Parameters
    ----------
    embeddings : array_like, shape (k, m)
        One embedding vector per label; row order defines class indices.
    labels : sequence of str, optional
        Label names carried along for reporting.
    """
    rows = _as_matrix(embeddings, "embeddings")
    return _normalized(_euclidean(rows), None if labels is None else tuple(labels))


def mix_epsilon_metric(w_star, w_bad, epsilon) -> LabelMetric:
    """Metric from rows of ``(1 - epsilon) * w_star + epsilon * w_bad``."""
    a = _as_matrix(w_star, "w_star")
    b = _as_matrix(w_bad, "w_bad")
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: w_star {a.shape} vs w_bad {b.shape}")
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError(f"epsilon must lie in [0, 1], got {epsilon}")
    # endpoints are exact so eps in {0, 1} reproduces the unmixed metric bitwise
    if epsilon == 0.0:
        mixed = a
    elif epsilon == 1.0:
        mixed = b
    else:
        mixed = (1.0 - epsilon) * a + epsilon * b
    return _normalized(_euclidean(mixed))


def verify_metric_axioms(metric, triple_budget=1_000_000, seed=0, tol=1e-12) -> MetricReport:
    """Check zero diagonal, symmetry and the triangle inequality.

    The diagonal and symmetry are checked exhaustively.  The triangle
    inequality is checked on all ``k**3`` triples when that fits in
    ``triple_budget`` and on ``triple_budget`` uniformly sampled triples
    otherwise.  A triple ``(i, j, m)`` is reported when
    ``d(i, j) > d(i, m) + d(m, j)``.
    """
    d = metric.distances if isinstance(metric, LabelMetric) else np.asarray(metric, dtype=np.float64)
    k = d.shape[0]
    report = MetricReport()
    report.diagonal_violations = [int(i) for i in np.flatnonzero(np.abs(np.diag(d)) > tol)]
    asym = np.abs(d - d.T) > tol * np.maximum(1.0, np.abs(d))
    report.symmetry_violations = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(asym, 1)))]

    if k**3 <= triple_budget:
        found = []
        for m in range(k):
            bad = d > d[:, m][:, None] + d[m, :][None, :] + tol
            for i, j in zip(*np.nonzero(bad)):
                found.append((int(i), int(j), m))
        found.sort()
        report.axiom_violations = found
        report.triples_checked = k**3
    elif triple_budget > 0:
        rng = np.random.default_rng(seed)
        t = rng.integers(0, k, size=(int(triple_budget), 3))
        i, j, m = t[:, 0], t[:, 1], t[:, 2]
        bad = d[i, j] > d[i, m] + d[m, j] + tol
        report.axiom_violations = sorted({(int(a), int(b), int(c)) for a, b, c in t[bad]})
        report.triples_checked = int(triple_budget)
    return report


def _greedy_cover(cover):
    # cover[c, e]: center c covers ball element e
    gains = cover.sum(axis=1)
    uncovered = np.ones(cover.shape[1], dtype=bool)
    count = 0
    while uncovered.any():
        newly = cover[int(np.argmax(gains))] & uncovered
        uncovered &= ~newly
        gains -= cover[:, newly].sum(axis=1)
        count += 1
    return count


def _exact_cover(cover):
    b = cover.shape[1]
    full = (1 << b) - 1
    weights = 1 << np.arange(b, dtype=np.int64)
    masks = np.unique(cover.astype(np.int64) @ weights)
    masks = masks[masks != 0]
    reach = np.zeros(1 << b, dtype=bool)
    reach[0] = True
    frontier = np.array([0], dtype=np.int64)
    for count in range(1, b + 1):
        nxt = np.unique((frontier[:, None] | masks[None, :]).ravel())
        nxt = nxt[~reach[nxt]]
        reach[nxt] = True
        if reach[full]:
            return count
        frontier = nxt
    return b


def _spread(values, budget):
    """At most ``budget`` entries of ``values``, evenly spaced by position, ends included."""
    if len(values) <= budget:
        return values
    return values[np.unique(np.linspace(0, len(values) - 1, budget).round().astype(int))]


def estimate_doubling_constant(metric, max_centers=64, max_radii=32) -> MetricReport:
    """Empirical doubling constant of a finite metric.

    For a centre ``p`` and radius ``r`` the ball ``B(p, r)`` is covered with
    balls of radius ``r / 2`` centred at labels; the largest cover size found
    is the estimate.  Radii are drawn from the distances ``d(p, j)``: the ball
    is constant between consecutive such values while the covering radius
    grows, so the left endpoints attain the maximum.  Up to ``max_centers``
    centres and ``max_radii`` radii per centre (evenly spaced in sorted order)
    are tried, which is exhaustive for small metrics.  Balls with at most 12
    points are covered exactly, larger ones greedily.
    """
    d = metric.distances if isinstance(metric, LabelMetric) else np.asarray(metric, dtype=np.float64)
    k = d.shape[0]
    best = 1
    for p in _spread(np.arange(k), max_centers):
        radii = np.unique(d[p])
        for r in _spread(radii[radii > 0], max_radii):
            ball = np.flatnonzero(d[p] <= r)
            if len(ball) <= best:
                continue
            # only labels within 3r/2 of p can reach the ball with an r/2 ball
            near = np.flatnonzero(d[p] <= 1.5 * r)
            cover = d[np.ix_(near, ball)] <= r / 2
            if len(ball) <= _EXACT_COVER_MAX:
                n_balls = _exact_cover(cover)
            else:
                n_balls = _greedy_cover(cover)
            best = max(best, n_balls)
    c = float(best)
    return MetricReport(doubling_constant_estimate=c, doubling_dimension_estimate=math.log2(c))


def read_embeddings(path):
    """Read a word2vec text-format embedding file.

    Returns ``(labels, vectors)`` where ``labels`` is a list of tokens in
    file order and ``vectors`` is a ``(k, m)`` float array.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty embedding file", path, 1)
    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError
        k, m = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(f"header must be 'k m', got {lines[0]!r}", path, 1) from None
    if k < 1 or m < 1:
        raise ParseError(f"header requires k >= 1 and m >= 1, got {k} {m}", path, 1)

    labels, vectors, seen = [], [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != m + 1:
            raise ParseError(f"expected a label and {m} values, got {len(parts)} fields", path, lineno)
        label = parts[0]
        if label in seen:
            raise ParseError(f"duplicate label {label!r}", path, lineno)
        try:
            vec = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric embedding value", path, lineno) from None
        if not all(math.isfinite(v) for v in vec):
            raise ParseError("non-finite embedding value", path, lineno)
        seen.add(label)
        labels.append(label)
        vectors.append(vec)
        if len(labels) > k:
            raise ParseError(f"more than the {k} labels declared in the header", path, lineno)
    if len(labels) != k:
        raise ParseError(f"header declares {k} labels but file has {len(labels)}", path, len(lines))
    return labels, np.array(vectors, dtype=np.float64)


def write_embeddings(path, labels, vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{vectors.shape[0]} {vectors.shape[1]}\n")
        for label, row in zip(labels, vectors):
            fh.write(label + " " + " ".join(repr(float(v)) for v in row) + "\n")
