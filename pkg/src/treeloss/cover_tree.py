"""Cover trees over class labels and the label paths derived from them.

The tree is built by sequential insertion in class-index order.  Each label
is pushed down from the root to the deepest level at which some node still
covers it, i.e. ``d(label, parent_label) <= base ** -parent_depth``.  A label
that owns a node also owns a chain of same-label nodes below it (the
"spine"), so every internal node has a child carrying its own label and
every label ends in exactly one leaf.

Only the covering and nesting properties are maintained; the separation
property of the original cover tree is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DepthLimitError, InvalidInputError, ParseError
from .metric_space import LabelMetric

__all__ = [
    "CoverTree",
    "PathTable",
    "Violation",
    "build_cover_tree",
    "check_invariants",
    "derive_u_paths",
    "derive_v_tree",
    "tree_stats",
    "write_tree",
    "read_tree",
    "format_tree",
    "format_path_table",
]

DEFAULT_BASE = 2.0
MAX_DEPTH = 64
_NORM_TOL = 1e-9


@dataclass(frozen=True)
class CoverTree:
    """Leveled label tree.  Node ``0`` is the root; ``parents[root] == -1``."""

    base: float
    labels: tuple
    depths: tuple
    parents: tuple

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.depths) == len(self.parents) == n):
            raise InvalidInputError("labels, depths and parents must have equal length")
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        object.__setattr__(self, "depths", tuple(int(x) for x in self.depths))
        object.__setattr__(self, "parents", tuple(int(x) for x in self.parents))

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @cached_property
    def k(self) -> int:
        return max(self.labels) + 1 if self.labels else 0

    @cached_property
    def children(self) -> tuple:
        kids = [[] for _ in range(self.n_nodes)]
        for node, parent in enumerate(self.parents):
            if 0 <= parent < self.n_nodes:
                kids[parent].append(node)
        return tuple(tuple(c) for c in kids)

    @cached_property
    def root(self) -> int:
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise InvalidInputError(f"tree must have exactly one root, found {len(roots)}")
        return roots[0]

    @cached_property
    def leaf_of(self) -> tuple:
        """For each label, the first leaf node carrying it (``-1`` if none)."""
        leaf = [-1] * self.k
        for node in range(self.n_nodes):
            if not self.children[node] and leaf[self.labels[node]] < 0:
                leaf[self.labels[node]] = node
        return tuple(leaf)

    @property
    def height(self) -> int:
        return max(self.depths)

    @property
    def max_fanout(self) -> int:
        return max(len(c) for c in self.children)

    @property
    def level_counts(self) -> list:
        return np.bincount(self.depths).tolist()


@dataclass(frozen=True)
class Violation:
    node: int
    kind: str
    detail: str

    def __str__(self):
        return f"node {self.node}: {self.kind}: {self.detail}"


@dataclass(frozen=True)
class PathTable:
    """Per-class parameter-row paths, from the class leaf up to the root row.

    ``row_parent[j]`` is the parent row of row ``j`` (``-1`` for the root
    row) and ``row_label[j]`` the class label the row originates from; for a
    pseudoclass that is the label of the cover-tree node it replaces.
    Rows ``0..k-1`` always belong to the classes themselves.
    """

    variant: str
    k: int
    k_prime: int
    paths: tuple
    parent_of: tuple
    row_parent: tuple
    row_label: tuple
    row_depth: tuple = field(default=())

    @property
    def root_row(self) -> int:
        return self.paths[0][-1]

    @property
    def max_path_length(self) -> int:
        return max(len(p) for p in self.paths)

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """``k x k_prime`` 0/1 matrix with ``M[i, j] = 1`` iff ``j`` is on path ``i``."""
        rows = np.repeat(np.arange(self.k), [len(p) for p in self.paths])
        cols = np.fromiter((j for p in self.paths for j in p), dtype=np.int64, count=len(rows))
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.k, self.k_prime))

    @cached_property
    def incidence_t(self) -> sparse.csr_matrix:
        return self.incidence.T.tocsr()

    @cached_property
    def lipschitz_factor(self) -> float:
        """Lipschitz constant of the loss in this parameterization, relative to flat.

        The row gradient is ``(M.T @ r) x^T`` with ``r = e_y - p``.  The
        squared norm of ``M.T @ r`` is convex in ``p``, so its maximum over
        the simplex sits at a vertex ``p = e_m`` where it equals
        ``|P_y ^ P_m|`` (symmetric difference).  Flat parameters give 2; the factor is
        ``sqrt(max |P_y ^ P_m| / 2)``.
        """
        if self.k < 2:
            return 1.0
        m = self.incidence
        shared = (m @ m.T).toarray()
        lengths = np.diag(shared)
        sym_diff = lengths[:, None] + lengths[None, :] - 2.0 * shared
        return float(np.sqrt(sym_diff.max() / 2.0))

    def pseudoclass_name(self, row) -> str:
        return f"pseudo{row - self.k + 1}"


def _check_metric(metric):
    d = metric.distances if isinstance(metric, LabelMetric) else np.asarray(metric, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
        raise InvalidInputError(f"metric must be a non-empty square matrix, got shape {d.shape}")
    if d.max() > 1.0 + _NORM_TOL:
        raise InvalidInputError(f"metric is not normalized (max distance {d.max():.6g} > 1)")
    return d


def build_cover_tree(metric, base=DEFAULT_BASE, max_depth=MAX_DEPTH) -> CoverTree:
    """Insert labels ``0..k-1`` in order; label 0 becomes the root.

    Raises
    ------
    InvalidInputError
        ``base <= 1`` or the metric is not normalized to max distance 1.
    DepthLimitError
        Some label would have to be placed deeper than ``max_depth``.
    """
    base = float(base)
    if not base > 1.0:
        raise InvalidInputError(f"base must be > 1, got {base}")
    d = _check_metric(metric)
    k = d.shape[0]

    labels, depths, parents = [0], [0], [-1]
    children = [[]]
    deepest = {0: 0}

    def add(label, parent):
        depth = depths[parent] + 1
        if depth > max_depth:
            raise DepthLimitError(f"label {label} needs depth {depth} > cap {max_depth}")
        labels.append(label)
        depths.append(depth)
        parents.append(parent)
        children.append([])
        children[parent].append(len(labels) - 1)
        if label not in deepest or depth >= depths[deepest[label]]:
            deepest[label] = len(labels) - 1
        return len(labels) - 1

    def attach(p, node):
        # the spine child keeps `node` internal with a same-label child
        if not children[node]:
            add(labels[node], node)
        add(p, node)

    for p in range(1, k):
        twins = np.flatnonzero(d[p, :p] == 0)
        if len(twins):
            attach(p, deepest[int(twins[0])])
            continue
        node = 0
        while True:
            best = None
            for c in children[node]:
                dist = d[p, labels[c]]
                if dist <= base ** -depths[c]:
                    key = (dist, labels[c])
                    if best is None or key < best[0]:
                        best = (key, c)
            if best is not None:
                node = best[1]
                continue
            if not children[node] and d[p, labels[node]] <= base ** -(depths[node] + 1):
                node = add(labels[node], node)
                continue
            attach(p, node)
            break

    return CoverTree(base, tuple(labels), tuple(depths), tuple(parents))


def check_invariants(tree: CoverTree, metric, tol=1e-12) -> list:
    """List every violated tree invariant; empty iff the tree is valid."""
    d = metric.distances if isinstance(metric, LabelMetric) else np.asarray(metric, dtype=np.float64)
    k = d.shape[0]
    out = []
    roots = [i for i, p in enumerate(tree.parents) if p < 0]
    if len(roots) != 1:
        out.append(Violation(roots[1] if len(roots) > 1 else -1, "root", f"{len(roots)} parentless nodes"))
    for node in roots:
        if tree.depths[node] != 0:
            out.append(Violation(node, "root", f"root at depth {tree.depths[node]}"))
    for node, (label, depth, parent) in enumerate(zip(tree.labels, tree.depths, tree.parents)):
        if not 0 <= label < k:
            out.append(Violation(node, "label", f"label {label} outside [0, {k})"))
            continue
        if parent < 0:
            continue
        if parent >= tree.n_nodes:
            out.append(Violation(node, "parent", f"parent {parent} does not exist"))
            continue
        pdepth = tree.depths[parent]
        if depth != pdepth + 1:
            out.append(Violation(node, "depth", f"depth {depth} != parent depth {pdepth} + 1"))
        plabel = tree.labels[parent]
        if 0 <= plabel < k:
            bound = tree.base ** -pdepth
            if d[label, plabel] > bound + tol:
                out.append(
                    Violation(node, "covering", f"d({label}, {plabel}) = {d[label, plabel]:.6g} > base^-{pdepth} = {bound:.6g}")
                )
    for node, kids in enumerate(tree.children):
        if kids and not any(tree.labels[c] == tree.labels[node] for c in kids):
            out.append(Violation(node, "nesting", f"internal node with label {tree.labels[node]} has no same-label child"))
    leaf_labels = {tree.labels[n] for n in range(tree.n_nodes) if not tree.children[n]}
    for label in range(k):
        if label not in leaf_labels:
            out.append(Violation(-1, "leaf", f"label {label} never appears as a leaf"))
    return out


def _ancestors(tree, node):
    while node >= 0:
        yield node
        node = tree.parents[node]


def derive_u_paths(tree: CoverTree) -> PathTable:
    """Leaf-to-root label sequences with repeated labels removed."""
    k = tree.k
    paths, parent_of = [], []
    for label in range(k):
        seq = []
        for node in _ancestors(tree, tree.leaf_of[label]):
            if tree.labels[node] not in seq:
                seq.append(tree.labels[node])
        paths.append(tuple(seq))
        parent_of.append(seq[1] if len(seq) > 1 else -1)
    depth = [0] * k
    for label in range(k):
        depth[label] = len(paths[label]) - 1
    return PathTable(
        variant="U",
        k=k,
        k_prime=k,
        paths=tuple(paths),
        parent_of=tuple(parent_of),
        row_parent=tuple(parent_of),
        row_label=tuple(range(k)),
        row_depth=tuple(depth),
    )


def derive_v_tree(tree: CoverTree) -> PathTable:
    """Replace branching internal nodes with pseudoclass rows.

    Internal nodes with a single child (pure same-label spine links) are
    collapsed and get no row.  Pseudoclass rows are numbered ``k, k+1, ...``
    in pre-order from the root.
    """
    k = tree.k
    row_of_node = {}
    for label in range(k):
        row_of_node[tree.leaf_of[label]] = label
    row_label = list(range(k))
    stack = [tree.root]
    next_row = k
    while stack:
        node = stack.pop()
        kids = tree.children[node]
        if len(kids) >= 2:
            row_of_node[node] = next_row
            row_label.append(tree.labels[node])
            next_row += 1
        stack.extend(reversed(kids))

    paths = []
    for label in range(k):
        seq = [row_of_node[n] for n in _ancestors(tree, tree.leaf_of[label]) if n in row_of_node]
        paths.append(tuple(seq))
    row_parent = [-1] * next_row
    row_depth = [0] * next_row
    for seq in paths:
        for pos, row in enumerate(seq):
            row_parent[row] = seq[pos + 1] if pos + 1 < len(seq) else -1
            row_depth[row] = len(seq) - 1 - pos
    return PathTable(
        variant="V",
        k=k,
        k_prime=next_row,
        paths=tuple(paths),
        parent_of=tuple(seq[1] if len(seq) > 1 else -1 for seq in paths),
        row_parent=tuple(row_parent),
        row_label=tuple(row_label),
        row_depth=tuple(row_depth),
    )


def tree_stats(tree: CoverTree):
    """Return ``(height, max_fanout, level_counts)``."""
    return tree.height, tree.max_fanout, tree.level_counts


def format_tree(tree: CoverTree) -> str:
    lines = [f"# cover_tree base={tree.base!r} k={tree.k}"]
    for node in range(tree.n_nodes):
        parent = tree.parents[node]
        lines.append(f"{node} {tree.depths[node]} {parent if parent >= 0 else '-'} {tree.labels[node]}")
    return "\n".join(lines) + "\n"


def format_path_table(table: PathTable) -> str:
    """Same line format as :func:`format_tree`, one line per parameter row."""
    lines = [f"# {table.variant}_tree k={table.k} k_prime={table.k_prime}"]
    for row in range(table.k_prime):
        parent = table.row_parent[row]
        tag = str(row) if row < table.k else table.pseudoclass_name(row)
        lines.append(f"{row} {table.row_depth[row]} {parent if parent >= 0 else '-'} {tag}")
    return "\n".join(lines) + "\n"


def write_tree(path, tree: CoverTree):
    Path(path).write_text(format_tree(tree), encoding="utf-8")


def read_tree(path) -> CoverTree:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    base = None
    labels, depths, parents = [], [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("base="):
                    try:
                        base = float(tok[5:])
                    except ValueError:
                        raise ParseError(f"bad base {tok!r}", path, lineno) from None
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError("expected 'node_id depth parent_id label'", path, lineno)
        try:
            node, depth = int(parts[0]), int(parts[1])
            parent = -1 if parts[2] == "-" else int(parts[2])
            label = int(parts[3])
        except ValueError:
            raise ParseError("non-integer field in cover tree line", path, lineno) from None
        if node != len(labels):
            raise ParseError(f"node ids must be consecutive, expected {len(labels)}", path, lineno)
        labels.append(label)
        depths.append(depth)
        parents.append(parent)
    if base is None:
        raise ParseError("missing '# cover_tree base=...' header", path, 1)
    if not labels:
        raise ParseError("tree file has no nodes", path, len(lines))
    return CoverTree(base, tuple(labels), tuple(depths), tuple(parents))
