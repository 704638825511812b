"""Norm bounds for the U-tree decomposition of a true parameter matrix."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..cover_tree import build_cover_tree, derive_u_paths, derive_v_tree
from ..errors import InvalidInputError
from ..metric_space import build_embedding_metric, estimate_doubling_constant
from ..tree_loss import decompose_w, frobenius_norm


@dataclass(frozen=True)
class TheoryReport:
    k: int
    B: float
    lambda_assumed: float
    c_estimate: float
    u_norm: float
    v_norm: float
    w_norm: float
    bound_w: float
    bound_lemma2: float
    bound_lemma3: float
    height: int
    max_fanout: int
    w_satisfied: bool
    lemma2_satisfied: bool
    lemma3_satisfied: bool

    def as_row(self) -> dict:
        return asdict(self)


def lemma3_bound(k, B, lam, c) -> float:
    """``lam*B*sqrt(log2 k)/sqrt 2`` when ``c <= 1``, else ``sqrt 5*lam*B*sqrt(k^(1-1/c))``."""
    if c <= 1:
        return lam * B * math.sqrt(math.log2(k)) / math.sqrt(2.0)
    return math.sqrt(5.0) * lam * B * math.sqrt(k ** (1.0 - 1.0 / c))


def check_bounds(w_star, base=2.0, lambda_assumed=1.0) -> TheoryReport:
    """Decompose ``w_star`` over a cover tree on its own row metric and test the norm bounds.

    ``B`` is the largest row norm of ``w_star``.  The ``||W*||_F <= sqrt(k) B``
    and ``||U*||_F <= 2 sqrt(k) B`` checks must always pass; the doubling
    bound uses an estimated ``c`` and is only reported.
    """
    if not lambda_assumed >= 1:
        raise InvalidInputError(f"lambda must be >= 1, got {lambda_assumed}")
    w = np.asarray(w_star, dtype=np.float64)
    k = w.shape[0]
    metric = build_embedding_metric(w)
    tree = build_cover_tree(metric, base)
    u = decompose_w(w, derive_u_paths(tree))
    v = decompose_w(w, derive_v_tree(tree))
    B = float(np.sqrt((w * w).sum(axis=1)).max())
    c = estimate_doubling_constant(metric).doubling_dimension_estimate

    u_norm, w_norm = frobenius_norm(u), frobenius_norm(w)
    bound_w = math.sqrt(k) * B
    bound2 = 2.0 * math.sqrt(k) * B
    bound3 = lemma3_bound(k, B, lambda_assumed, c)
    # relative slack only absorbs rounding in the norm sums
    slack = 1e-12 * max(1.0, bound2)
    return TheoryReport(
        k=k,
        B=B,
        lambda_assumed=float(lambda_assumed),
        c_estimate=c,
        u_norm=u_norm,
        v_norm=frobenius_norm(v),
        w_norm=w_norm,
        bound_w=bound_w,
        bound_lemma2=bound2,
        bound_lemma3=bound3,
        height=tree.height,
        max_fanout=tree.max_fanout,
        w_satisfied=w_norm <= bound_w + slack,
        lemma2_satisfied=u_norm <= bound2 + slack,
        lemma3_satisfied=u_norm <= bound3 + slack,
    )
