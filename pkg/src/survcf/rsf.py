"""A small random survival forest used as a black-box model.

Trees split on the log-rank statistic and store Nelson-Aalen cumulative
hazards on the shared training grid. The forest averages the cumulative
hazards and exponentiates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DimensionMismatchError
from .survival import Dataset, StepSurvivalFunction, TimeGrid, build_time_grid, restricted_means


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    """Flat binary tree. ``feature[i] < 0`` marks node ``i`` as a leaf whose
    hazard increments are ``leaf_knots[leaf[i]]`` / ``leaf_increments[leaf[i]]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray
    leaf_knots: list
    leaf_increments: list
    leaf_sizes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_knots)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_chf(self, grid: TimeGrid) -> np.ndarray:
        """Dense cumulative hazards, one row per leaf, shape (n_leaves, q+1)."""
        inc = np.zeros((self.n_leaves, grid.q + 1))
        for j, (knots, incs) in enumerate(zip(self.leaf_knots, self.leaf_increments)):
            inc[j, knots] = incs
        return np.cumsum(inc, axis=1)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.leaf[node]
            go_left = X[rows, np.maximum(f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf": self.leaf.tolist(),
            "leaf_knots": [k.tolist() for k in self.leaf_knots],
            "leaf_increments": [v.tolist() for v in self.leaf_increments],
            "leaf_sizes": self.leaf_sizes.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SurvivalTree":
        return cls(
            feature=np.array(doc["feature"], dtype=np.int64),
            threshold=np.array(doc["threshold"], dtype=float),
            left=np.array(doc["left"], dtype=np.int64),
            right=np.array(doc["right"], dtype=np.int64),
            leaf=np.array(doc["leaf"], dtype=np.int64),
            leaf_knots=[np.array(k, dtype=np.int64) for k in doc["leaf_knots"]],
            leaf_increments=[np.array(v, dtype=float) for v in doc["leaf_increments"]],
            leaf_sizes=np.array(doc["leaf_sizes"], dtype=np.int64),
        )


def _nelson_aalen_increments(knot_idx: np.ndarray, event: np.ndarray, q: int):
    """Sparse Nelson-Aalen jumps on grid knots for one group of records."""
    counts = np.bincount(knot_idx, minlength=q + 2)
    deaths = np.bincount(knot_idx[event == 1], minlength=q + 2)
    at_risk = np.cumsum(counts[::-1])[::-1]
    jumps = np.flatnonzero(deaths)
    return jumps.astype(np.int64), deaths[jumps] / at_risk[jumps]


def log_rank_scores(x: np.ndarray, knot_idx: np.ndarray, event: np.ndarray, min_leaf: int):
    """Best log-rank split of one feature.

    Returns ``(score, threshold)`` with ``score = -inf`` when no admissible
    split exists. Candidate thresholds are midpoints between consecutive
    distinct values leaving at least ``min_leaf`` records on each side.
    """
    n = x.size
    ev_knots = np.unique(knot_idx[event == 1])
    if ev_knots.size == 0 or n < 2 * min_leaf:
        return -math.inf, math.nan
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ks = knot_idx[order]
    es = event[order]
    at_risk = (ks[:, None] >= ev_knots[None, :]).astype(float)
    died = ((ks[:, None] == ev_knots[None, :]) & (es[:, None] == 1)).astype(float)

    split_at = np.arange(min_leaf, n - min_leaf + 1)
    split_at = split_at[xs[split_at - 1] < xs[np.minimum(split_at, n - 1)]]
    if split_at.size == 0:
        return -math.inf, math.nan
    Y = at_risk.sum(axis=0)
    d = died.sum(axis=0)
    YL = np.cumsum(at_risk, axis=0)[split_at - 1]
    dL = np.cumsum(died, axis=0)[split_at - 1]
    frac = YL / Y
    num = (dL - frac * d).sum(axis=1)
    var_factor = np.where(Y > 1, (Y - d) / np.maximum(Y - 1, 1), 0.0) * d
    var = (frac * (1 - frac) * var_factor).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(var > 0, num * num / var, -math.inf)
    best = int(np.argmax(stat))
    if not np.isfinite(stat[best]):
        return -math.inf, math.nan
    k = split_at[best]
    thr = 0.5 * (xs[k - 1] + xs[k])
    if thr >= xs[k]:  # adjacent doubles: the midpoint rounds up
        thr = xs[k - 1]
    return float(stat[best]), thr


def _grow_tree(X, knot_idx, event, sample, q, mtry, min_leaf, max_depth, rng) -> SurvivalTree:
    feature, threshold, left, right, leaf = [], [], [], [], []
    leaf_knots, leaf_increments, leaf_sizes = [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)  # unused for leaves; keeps the JSON finite
        left.append(-1)
        right.append(-1)
        leaf.append(-1)
        return len(feature) - 1

    stack = [(new_node(), sample, 0)]
    d = X.shape[1]
    while stack:
        node, rows, depth = stack.pop()
        best = (-math.inf, -1, math.nan)
        if (max_depth is None or depth < max_depth) and rows.size >= 2 * min_leaf and event[rows].any():
            for f in np.sort(rng.choice(d, size=mtry, replace=False)):
                score, thr = log_rank_scores(X[rows, f], knot_idx[rows], event[rows], min_leaf)
                if score > best[0]:
                    best = (score, int(f), thr)
        if best[1] < 0:
            leaf[node] = len(leaf_knots)
            knots, incs = _nelson_aalen_increments(knot_idx[rows], event[rows], q)
            leaf_knots.append(knots)
            leaf_increments.append(incs)
            leaf_sizes.append(rows.size)
            continue
        _, f, thr = best
        go_left = X[rows, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = new_node()
        right[node] = new_node()
        # right pushed first so the left subtree is numbered depth-first
        stack.append((right[node], rows[~go_left], depth + 1))
        stack.append((left[node], rows[go_left], depth + 1))

    return SurvivalTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        leaf=np.array(leaf, dtype=np.int64),
        leaf_knots=leaf_knots,
        leaf_increments=leaf_increments,
        leaf_sizes=np.array(leaf_sizes, dtype=np.int64),
    )


@dataclass(eq=False)
class RandomSurvivalForest:
    trees: list
    grid: TimeGrid
    dim: int
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    kind = "rsf"

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        self._compile()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _compile(self):
        node_off = np.cumsum([0] + [t.n_nodes for t in self.trees])
        leaf_off = np.cumsum([0] + [t.n_leaves for t in self.trees])
        self._roots = node_off[:-1].astype(np.int64)
        feature = np.concatenate([t.feature for t in self.trees])
        is_leaf = feature < 0
        self_idx = np.arange(feature.size)
        left = np.concatenate([t.left + o for t, o in zip(self.trees, node_off)])
        right = np.concatenate([t.right + o for t, o in zip(self.trees, node_off)])
        # leaves loop back to themselves through the "left" child (threshold +inf)
        self._feature = np.where(is_leaf, 0, feature)
        self._threshold = np.where(is_leaf, np.inf, np.concatenate([t.threshold for t in self.trees]))
        self._children = np.column_stack([np.where(is_leaf, self_idx, left), np.where(is_leaf, self_idx, right)]).ravel()
        self._leaf = np.concatenate([np.where(t.leaf >= 0, t.leaf + o, -1) for t, o in zip(self.trees, leaf_off)])
        # all leaves' hazard increments as one sparse (n_leaves, q+1) matrix
        knots = [k for t in self.trees for k in t.leaf_knots]
        incs = [v for t in self.trees for v in t.leaf_increments]
        indptr = np.concatenate(([0], np.cumsum([k.size for k in knots])))
        self._increments = sparse.csr_matrix(
            (np.concatenate(incs), np.concatenate(knots), indptr),
            shape=(len(knots), self.grid.q + 1),
        )
        self._max_depth = max(t.depth for t in self.trees)

    def apply(self, X) -> np.ndarray:
        """Global leaf rows reached in every tree, shape (n, n_trees)."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} features, got {X.shape[1]}")
        n = X.shape[0]
        node = np.tile(self._roots, (n, 1))
        offset = (np.arange(n) * self.dim)[:, None]
        flat = X.ravel()
        for _ in range(self._max_depth):
            go_right = flat[offset + self._feature[node]] > self._threshold[node]
            node = self._children[2 * node + go_right]
        return self._leaf[node]

    def predict_chf(self, X, chunk: int = 4096) -> np.ndarray:
        """Tree-averaged cumulative hazard on the grid, shape (n, q+1).

        Leaf increments are averaged first and accumulated afterwards, which
        equals averaging the leaf cumulative hazards.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T = self.n_trees
        out = np.empty((X.shape[0], self.grid.q + 1))
        for start in range(0, X.shape[0], chunk):
            leaves = self.apply(X[start:start + chunk])
            m = leaves.shape[0]
            weights = sparse.csr_matrix(
                (np.full(m * T, 1.0 / T), leaves.ravel(), np.arange(0, m * T + 1, T)),
                shape=(m, self._increments.shape[0]),
            )
            out[start:start + m] = np.cumsum((weights @ self._increments).toarray(), axis=1)
        return out

    def predict_values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        values = np.clip(np.exp(-self.predict_chf(X)), 0.0, 1.0)
        values[:, 0] = 1.0
        values = np.minimum.accumulate(values, axis=1)
        return values[0] if X.ndim == 1 else values

    def predict_sf(self, x) -> StepSurvivalFunction:
        return rsf_predict_sf(self, x)

    def mean(self, X) -> np.ndarray:
        return restricted_means(self.grid, self.predict_values(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "grid_knots": self.grid.knots.tolist(),
            "params": dict(self.params),
            "meta": dict(self.meta),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RandomSurvivalForest":
        return cls(
            trees=[SurvivalTree.from_dict(t) for t in doc["trees"]],
            grid=TimeGrid(np.array(doc["grid_knots"], dtype=float)),
            dim=int(doc["dim"]),
            params=dict(doc.get("params", {})),
            meta=dict(doc.get("meta", {})),
        )


def canonical_order(dataset: Dataset) -> np.ndarray:
    """Record order by time, then event, then features (independent of input order)."""
    keys = [dataset.X[:, j] for j in range(dataset.dim - 1, -1, -1)]
    return np.lexsort(keys + [dataset.event, dataset.time])


def fit_rsf(
    dataset: Dataset,
    n_trees: int = 250,
    mtry: int | None = None,
    min_leaf: int = 15,
    seed: int = 0,
    max_depth: int | None = None,
    bootstrap: bool = True,
    t_gamma: float | None = None,
) -> RandomSurvivalForest:
    """Grow ``n_trees`` log-rank survival trees.

    Tree ``k`` draws its bootstrap sample and feature subsets from a generator
    seeded with ``(seed, k)``, applied to the canonical record ordering.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    d = dataset.dim
    if mtry is None:
        mtry = math.ceil(math.sqrt(d))
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry must lie in [1, {d}], got {mtry}")
    if min_leaf < 1:
        raise ValueError("min_leaf must be at least 1")
    if dataset.event.sum() == 0:
        raise ValueError("dataset contains no events")

    grid = build_time_grid(dataset, t_gamma)
    order = canonical_order(dataset)
    X = dataset.X[order]
    event = dataset.event[order]
    knot_idx = np.searchsorted(grid.knots, dataset.time[order])
    n = dataset.n

    trees = []
    for k in range(n_trees):
        rng = np.random.default_rng([seed, k])
        sample = np.sort(rng.integers(0, n, size=n)) if bootstrap else np.arange(n)
        trees.append(_grow_tree(X, knot_idx, event, sample, grid.q, mtry, min_leaf, max_depth, rng))
    params = {
        "n_trees": n_trees,
        "mtry": mtry,
        "min_leaf": min_leaf,
        "seed": seed,
        "max_depth": max_depth,
        "bootstrap": bootstrap,
    }
    return RandomSurvivalForest(trees=trees, grid=grid, dim=d, params=params)


def rsf_predict_sf(forest: RandomSurvivalForest, x) -> StepSurvivalFunction:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != forest.dim:
        raise DimensionMismatchError(f"expected {forest.dim} features, got {x.size}")
    return StepSurvivalFunction(forest.grid, forest.predict_values(x[None, :])[0])
