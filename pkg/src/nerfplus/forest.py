"""CART regression trees, bootstrap forests, and decision-stump features.

Each fitted split contributes one stump column: for a sample reaching the
split, the column holds ``n_right / sqrt(n_left * n_right)`` when routed
left and ``-n_left / sqrt(n_left * n_right)`` when routed right, and zero
for samples that never reach the split.  The counts are frozen training
(in-bag) counts, so a tree becomes an exact linear model in its stump
columns when fit on the full sample.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

FOREST_STREAM = 0  # RNG namespace for per-tree substreams


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_leaf: int = 5
    mtry_fraction: float = 1.0 / 3.0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise InputError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError("max_depth must be >= 0")
        if not (0 < self.mtry_fraction <= 1):
            raise InputError("mtry_fraction must be in (0, 1]")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry_fraction: float = 1.0 / 3.0
    max_depth: int | None = None
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError("n_trees must be >= 1")

    def tree_params(self) -> TreeParams:
        return TreeParams(
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
            mtry_fraction=self.mtry_fraction,
        )


@dataclass(frozen=True)
class FittedTree:
    """A fitted binary regression tree stored as flat split arrays.

    ``left_child``/``right_child`` reference another split by non-negative
    index, or a leaf ``k`` encoded as ``-(k + 1)``.  Splits are listed in
    construction (pre-)order, which fixes the stump-column ordering.  A
    tree with no splits is the single leaf ``leaf_values[0]``.
    """

    split_feature: np.ndarray
    split_threshold: np.ndarray
    n_left: np.ndarray
    n_right: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    leaf_values: np.ndarray

    @property
    def n_splits(self) -> int:
        return len(self.split_feature)

    @property
    def features_used(self) -> set[int]:
        return set(int(f) for f in self.split_feature)


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best variance-reduction split of one feature, or None.

    Returns ``(gain, threshold)`` where gain is proportional to the drop in
    summed squared error; the first (smallest-threshold) maximizer wins.
    """
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    left_sum = np.cumsum(ys)[:-1]
    left_n = np.arange(1, n)
    right_n = n - left_n
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid &= (left_n >= min_leaf) & (right_n >= min_leaf)
    if not valid.any():
        return None
    diff = left_sum / left_n - (left_sum[-1] + ys[-1] - left_sum) / right_n
    gain = np.where(valid, left_n * right_n * diff * diff, -np.inf)
    b = int(np.argmax(gain))
    threshold = (xs[b] + xs[b + 1]) / 2.0
    if threshold >= xs[b + 1]:
        # adjacent floats: fall back to the left value so `x <= t` splits exactly
        threshold = xs[b]
    return float(gain[b]) / (n * n), float(threshold)


def fit_tree(
    features: np.ndarray,
    response: np.ndarray,
    sample_indices: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator,
) -> FittedTree:
    """Grow a CART regression tree on the given (multi)set of rows.

    At each node a random ``ceil(mtry_fraction * q)`` feature subset is
    searched; thresholds fall at midpoints of adjacent sorted values.  Ties
    in gain are broken by lower feature index, then smaller threshold.
    Leaves store in-bag response means.
    """
    sample_indices = np.asarray(sample_indices, dtype=np.intp)
    if sample_indices.size == 0:
        raise InputError("empty sample set")
    xb = np.asarray(features, dtype=np.float64)[sample_indices]
    yb = np.asarray(response, dtype=np.float64)[sample_indices]
    q = xb.shape[1]
    mtry = min(q, max(1, math.ceil(params.mtry_fraction * q)))

    split_feature: list[int] = []
    split_threshold: list[float] = []
    n_left: list[int] = []
    n_right: list[int] = []
    left_child: list[int] = []
    right_child: list[int] = []
    leaf_values: list[float] = []

    def attach(parent: int, left_side: bool, child: int) -> None:
        if parent < 0:
            return
        (left_child if left_side else right_child)[parent] = child

    # Pre-order, left branch first; an explicit stack keeps deep chains safe.
    stack = [(np.arange(len(sample_indices)), 0, -1, True)]
    while stack:
        rows, depth, parent, left_side = stack.pop()
        y_node = yb[rows]
        depth_ok = params.max_depth is None or depth < params.max_depth
        splittable = depth_ok and len(rows) >= 2 * params.min_leaf
        if splittable and np.all(y_node == y_node[0]):
            splittable = False
        best = None
        if splittable:
            candidates = np.sort(rng.choice(q, size=mtry, replace=False))
            for f in candidates:
                found = _best_split(xb[rows, f], y_node, params.min_leaf)
                if found is None:
                    continue
                gain, threshold = found
                if best is None or gain > best[0]:
                    best = (gain, int(f), threshold)
        if best is None or best[0] <= 0:
            leaf_values.append(float(y_node.mean()))
            attach(parent, left_side, -len(leaf_values))
            continue
        _, f, threshold = best
        go_left = xb[rows, f] <= threshold
        node = len(split_feature)
        split_feature.append(f)
        split_threshold.append(threshold)
        n_left.append(int(go_left.sum()))
        n_right.append(int(len(rows) - go_left.sum()))
        left_child.append(0)
        right_child.append(0)
        attach(parent, left_side, node)
        stack.append((rows[~go_left], depth + 1, node, False))
        stack.append((rows[go_left], depth + 1, node, True))
    return FittedTree(
        split_feature=np.array(split_feature, dtype=np.intp),
        split_threshold=np.array(split_threshold, dtype=np.float64),
        n_left=np.array(n_left, dtype=np.intp),
        n_right=np.array(n_right, dtype=np.intp),
        left_child=np.array(left_child, dtype=np.intp),
        right_child=np.array(right_child, dtype=np.intp),
        leaf_values=np.array(leaf_values, dtype=np.float64),
    )


def _walk(tree: FittedTree, features: np.ndarray, visit):
    """Route all rows through the tree, calling ``visit`` at every split.

    ``visit(split_index, left_rows, right_rows)`` receives the row indices
    routed each way at that split.
    """
    m = features.shape[0]
    if tree.n_splits == 0:
        return np.zeros(m, dtype=np.intp)
    leaf = np.empty(m, dtype=np.intp)
    stack = [(0, np.arange(m, dtype=np.intp))]
    while stack:
        node, rows = stack.pop()
        go_left = features[rows, tree.split_feature[node]] <= tree.split_threshold[node]
        for child, sub in (
            (int(tree.left_child[node]), rows[go_left]),
            (int(tree.right_child[node]), rows[~go_left]),
        ):
            if child < 0:
                leaf[sub] = -child - 1
            elif sub.size:
                stack.append((child, sub))
        visit(node, rows[go_left], rows[~go_left])
    return leaf


def tree_leaf_indices(tree: FittedTree, features: np.ndarray) -> np.ndarray:
    return _walk(tree, np.asarray(features, dtype=np.float64), lambda *_: None)


def tree_predict(tree: FittedTree, features: np.ndarray) -> np.ndarray:
    """Route rows to leaves and return the stored leaf means."""
    return tree.leaf_values[tree_leaf_indices(tree, features)]


def stump_features(tree: FittedTree, features: np.ndarray) -> np.ndarray:
    """Evaluate the stump column of every split for each row.

    Column ``j`` corresponds to split ``j`` in construction order and is
    zero for rows that never reach that split.
    """
    features = np.asarray(features, dtype=np.float64)
    out = np.zeros((features.shape[0], tree.n_splits))
    scale = np.sqrt(tree.n_left * tree.n_right).astype(np.float64)

    def visit(node, left_rows, right_rows):
        out[left_rows, node] = tree.n_right[node] / scale[node]
        out[right_rows, node] = -tree.n_left[node] / scale[node]

    _walk(tree, features, visit)
    return out


@dataclass(frozen=True)
class Forest:
    trees: tuple[FittedTree, ...]
    in_bag_indices: tuple[np.ndarray, ...]
    seed: int
    params: ForestParams

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent substream for one tree, keyed by (seed, tree index)."""
    return np.random.default_rng([seed, FOREST_STREAM, tree_index])


def _fit_one(features, response, params: ForestParams, seed: int, t: int, bootstrap: bool):
    rng = tree_rng(seed, t)
    n = features.shape[0]
    if bootstrap:
        in_bag = rng.integers(0, n, size=n)
    else:
        in_bag = np.arange(n)
    tree = fit_tree(features, response, in_bag, params.tree_params(), rng)
    return tree, in_bag


def fit_forest(
    features: np.ndarray,
    response: np.ndarray,
    params: ForestParams,
    seed: int,
    n_threads: int = 1,
    bootstrap: bool = True,
) -> Forest:
    """Fit a bootstrap forest; results are independent of thread count."""
    features = np.asarray(features, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    jobs = range(params.n_trees)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            fitted = list(
                pool.map(lambda t: _fit_one(features, response, params, seed, t, bootstrap), jobs)
            )
    else:
        fitted = [_fit_one(features, response, params, seed, t, bootstrap) for t in jobs]
    return Forest(
        trees=tuple(tree for tree, _ in fitted),
        in_bag_indices=tuple(bag for _, bag in fitted),
        seed=seed,
        params=params,
    )


def forest_predict(forest: Forest, features: np.ndarray) -> np.ndarray:
    preds = np.zeros(np.asarray(features).shape[0])
    for tree in forest.trees:
        preds += tree_predict(tree, features)
    return preds / forest.n_trees


def features_used(forest: Forest) -> np.ndarray:
    """Sorted union of split features across trees."""
    used: set[int] = set()
    for tree in forest.trees:
        used |= tree.features_used
    return np.array(sorted(used), dtype=np.intp)


def out_of_bag_rows(forest: Forest, tree_index: int, n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[forest.in_bag_indices[tree_index]] = False
    return np.flatnonzero(mask)
