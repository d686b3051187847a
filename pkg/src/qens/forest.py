"""Random-forest baseline: Gini CART trees on bootstrap samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import stratified_kfold
from .metrics import to_labels, weighted_f1
from .seeding import derive_seed

SEARCH_SPACE = {
    "n_estimators": list(range(100, 1001, 100)),
    "max_depth": list(range(5, 21)),
    "min_samples_split": list(range(2, 11)),
    "min_samples_leaf": list(range(1, 6)),
    "max_features": ["sqrt", "log2"],
}


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    max_depth: int | None = 5
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split must be >= 2 and min_samples_leaf >= 1")
        if self.max_features not in ("sqrt", "log2", "all"):
            raise ValueError(f"max_features must be 'sqrt', 'log2' or 'all', got {self.max_features!r}")

    @property
    def label(self) -> str:
        return (f"ne{self.n_estimators}-md{self.max_depth}-mss{self.min_samples_split}"
                f"-msl{self.min_samples_leaf}-{self.max_features}")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            k = math.ceil(math.sqrt(n_features))
        elif self.max_features == "log2":
            k = math.ceil(math.log2(n_features)) if n_features > 1 else 1
        else:
            k = n_features
        return min(max(k, 1), n_features)


def gini(n_pos, n_total):
    """Gini impurity ``1 - p1**2 - p0**2`` (vectorized; 0 for empty nodes)."""
    n_pos = np.asarray(n_pos, dtype=float)
    n_total = np.asarray(n_total, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n_total > 0, n_pos / n_total, 0.0)
    return 1.0 - p**2 - (1.0 - p) ** 2


@dataclass
class DecisionTree:
    """Flat arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class-1 fraction of the training rows reaching the node
    n_samples: np.ndarray
    depth: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.size

    @property
    def max_leaf_depth(self) -> int:
        return int(self.depth[self.feature < 0].max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(X, y, candidates, min_leaf):
    """Best ``(gain, feature, threshold)`` over ``candidates``; ``None`` if no valid split.

    Thresholds are midpoints between consecutive distinct sorted values. Ties
    go to the lowest feature index, then the lowest threshold.
    """
    n = y.size
    parent = float(gini(y.sum(), n))
    best = None
    for f in sorted(candidates):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        right_n = n - left_n
        right_pos = ys.sum() - left_pos
        child = (left_n * gini(left_pos, left_n) + right_n * gini(right_pos, right_n)) / n
        gain = np.where(valid, parent - child, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] <= 1e-15:
            continue
        if best is None or gain[i] > best[0] + 1e-15:
            best = (float(gain[i]), f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_tree(X, y, config: ForestConfig, seed) -> DecisionTree:
    """Greedy Gini CART with per-node random feature subsets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(int).ravel()
    if y.size == 0:
        raise ValueError("cannot fit a tree on zero samples")
    rng = np.random.default_rng(seed)
    k = config.features_per_split(X.shape[1])
    nodes = {"feature": [], "threshold": [], "left": [], "right": [], "value": [], "n": [], "depth": []}

    def new_node(rows, depth):
        i = len(nodes["feature"])
        for key, val in (("feature", -1), ("threshold", 0.0), ("left", -1), ("right", -1),
                         ("value", float(y[rows].mean())), ("n", rows.size), ("depth", depth)):
            nodes[key].append(val)
        return i

    root = new_node(np.arange(y.size), 0)
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        pure = ys.min() == ys.max()
        if pure or rows.size < config.min_samples_split or (config.max_depth is not None and depth >= config.max_depth):
            continue
        cand = rng.choice(X.shape[1], size=k, replace=False)
        split = _best_split(X[rows], ys, cand, config.min_samples_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = X[rows, f] <= thr
        nodes["feature"][node], nodes["threshold"][node] = int(f), float(thr)
        right_rows = rows[~mask]
        left_rows = rows[mask]
        nodes["left"][node] = new_node(left_rows, depth + 1)
        nodes["right"][node] = new_node(right_rows, depth + 1)
        stack.append((nodes["right"][node], right_rows, depth + 1))
        stack.append((nodes["left"][node], left_rows, depth + 1))

    return DecisionTree(
        np.array(nodes["feature"], dtype=int),
        np.array(nodes["threshold"], dtype=float),
        np.array(nodes["left"], dtype=int),
        np.array(nodes["right"], dtype=int),
        np.array(nodes["value"], dtype=float),
        np.array(nodes["n"], dtype=int),
        np.array(nodes["depth"], dtype=int),
    )


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n, size=n)


@dataclass
class RandomForest:
    config: ForestConfig
    trees: list

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the leaf class-1 fraction."""
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return to_labels(self.predict_proba(X))


def fit_forest(X, y, config: ForestConfig) -> RandomForest:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(int).ravel()
    trees = []
    for t in range(config.n_estimators):
        rng = np.random.default_rng(derive_seed(config.seed, t))
        idx = bootstrap_indices(y.size, rng)
        trees.append(fit_tree(X[idx], y[idx], config, rng))
    return RandomForest(config, trees)


def sample_config(rng: np.random.Generator, seed: int) -> ForestConfig:
    pick = {k: v[int(rng.integers(len(v)))] for k, v in SEARCH_SPACE.items()}
    return ForestConfig(seed=seed, **pick)


@dataclass
class SearchResult:
    config: ForestConfig
    fold_scores: list

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.fold_scores))


def randomized_search(X, y, n_iter: int = 50, folds: int = 5, seed: int = 0, extra_candidates=()):
    """Sample ``n_iter`` configs and score each by mean validation weighted F1.

    Only ``X``/``y`` (the training split) are read. ``extra_candidates`` are
    scored alongside the sampled ones. Returns ``(best_config, results)`` with
    ``results`` in evaluation order; ties keep the earliest candidate.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(int).ravel()
    rng = np.random.default_rng(seed)
    candidates = [sample_config(rng, derive_seed(seed, i)) for i in range(n_iter)]
    candidates += [replace(c) for c in extra_candidates]
    splits = stratified_kfold(y, folds, seed)
    results = []
    for cfg in candidates:
        scores = []
        for tr, va in splits:
            model = fit_forest(X[tr], y[tr], cfg)
            scores.append(weighted_f1(model.predict(X[va]), y[va]))
        results.append(SearchResult(cfg, scores))
    best = max(range(len(results)), key=lambda i: (results[i].mean_score, -i))
    return results[best].config, results
