"""CART regression trees, random forests, and gradient boosting.

Split search is an exact scan over midpoints of sorted unique feature
values, with ties broken by lowest feature index then lowest threshold, so
a fit is a pure function of (X, y, params, seed).  Row subsampling draws
from row indices of the given order, which makes the whole ensemble
deterministic and reproducible from the seed alone.
"""
from __future__ import annotations

import math

import numpy as np

from .base import TreeEnsembleModel, TreeNode
from .params import BoostParams, ForestParams


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    features: np.ndarray,
    min_samples_leaf: int,
) -> tuple[int, float] | None:
    """Exact variance-reduction split over candidate features, or None."""
    n = len(y)
    if n < 2 * min_samples_leaf:
        return None
    best_score = -np.inf
    best: tuple[int, float] | None = None
    for f in features:
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y[order]
        # Split positions i mean "first i sorted rows go left"; only
        # boundaries between distinct values are real thresholds.
        cut = np.nonzero(xs_sorted[1:] > xs_sorted[:-1])[0] + 1
        cut = cut[(cut >= min_samples_leaf) & (cut <= n - min_samples_leaf)]
        if len(cut) == 0:
            continue
        csum = np.cumsum(ys_sorted)
        total = csum[-1]
        left_sum = csum[cut - 1]
        right_sum = total - left_sum
        # Maximizing sum_L^2/n_L + sum_R^2/n_R is equivalent to minimizing
        # within-node SSE, without having to carry the squared-y terms.
        score = left_sum**2 / cut + right_sum**2 / (n - cut)
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = float(score[k])
            i = cut[k]
            best = (int(f), float((xs_sorted[i - 1] + xs_sorted[i]) / 2.0))
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int,
    min_samples_leaf: int,
    max_features: float,
    depth: int = 0,
) -> TreeNode:
    node_value = float(y.mean())
    n, p = X.shape
    if depth >= max_depth or n < 2 * min_samples_leaf or np.all(y == y[0]):
        return TreeNode(-1, 0.0, None, None, node_value, n)
    k = max(1, math.ceil(max_features * p))
    features = np.sort(rng.choice(p, size=k, replace=False)) if k < p else np.arange(p)
    split = _best_split(X, y, features, min_samples_leaf)
    if split is None:
        return TreeNode(-1, 0.0, None, None, node_value, n)
    f, threshold = split
    go_left = X[:, f] <= threshold
    left = _grow_tree(X[go_left], y[go_left], rng, max_depth, min_samples_leaf, max_features, depth + 1)
    right = _grow_tree(X[~go_left], y[~go_left], rng, max_depth, min_samples_leaf, max_features, depth + 1)
    return TreeNode(f, threshold, left, right, node_value, n)


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    seed: int,
) -> TreeEnsembleModel:
    """Bagged CART trees on bootstrap row samples; prediction = tree mean."""
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    rng = np.random.default_rng(seed)
    n_draw = max(1, math.ceil(params.max_samples * n))
    trees = []
    for _ in range(params.n_estimators):
        idx = rng.integers(0, n, size=n_draw)
        trees.append(
            _grow_tree(
                X[idx],
                y[idx],
                rng,
                params.max_depth,
                params.min_samples_leaf,
                params.max_features,
            )
        )
    weights = np.full(len(trees), 1.0 / len(trees))
    return TreeEnsembleModel(
        algo="rf",
        n_features=X.shape[1],
        seed=seed,
        hyper=params,
        trees=trees,
        tree_weights=weights,
        base=0.0,
    )


def fit_gradient_boosting(
    X: np.ndarray,
    y: np.ndarray,
    params: BoostParams,
    seed: int,
) -> TreeEnsembleModel:
    """Stagewise residual-fitting trees added at the learning rate."""
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    rng = np.random.default_rng(seed)
    base = float(y.mean())
    current = np.full(n, base)
    n_draw = max(1, math.ceil(params.subsample * n))
    trees = []
    for _ in range(params.n_estimators):
        if n_draw < n:
            idx = rng.choice(n, size=n_draw, replace=False)
        else:
            idx = np.arange(n)
        resid = y[idx] - current[idx]
        tree = _grow_tree(
            X[idx],
            resid,
            rng,
            params.max_depth,
            params.min_samples_leaf,
            params.max_features,
        )
        trees.append(tree)
        current += params.learning_rate * tree.predict(X)
    weights = np.full(len(trees), params.learning_rate)
    return TreeEnsembleModel(
        algo="gb",
        n_features=X.shape[1],
        seed=seed,
        hyper=params,
        trees=trees,
        tree_weights=weights,
        base=base,
    )


def staged_training_mse(model: TreeEnsembleModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """In-sample MSE after each boosting stage (stage 0 = base only)."""
    X = np.asarray(X, dtype=np.float64)
    current = np.full(len(y), model.base)
    out = [float(np.mean((y - current) ** 2))]
    for w, tree in zip(model.tree_weights, model.trees):
        current += w * tree.predict(X)
        out.append(float(np.mean((y - current) ** 2)))
    return np.array(out)
