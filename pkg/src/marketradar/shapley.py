"""Shapley-value signal attribution and per-signal importance.

All methods share one value function: v(S) is the mean model output over a
background sample with the explained point's values spliced in on the
coalition S.  That makes the subset-enumeration brute force an oracle for
both the exact tree algorithm and the Monte-Carlo permutation estimator.

The tree method works leaf by leaf.  For an explained point x and one
background row z, a leaf is reached by the spliced point iff every feature
constrained on its path is satisfied by whichever of x/z supplies it, so
the leaf's indicator game is determined by the counts a (features only x
satisfies) and b (features only z satisfies).  Its exact Shapley weights
have the closed forms (a-1)! b! / (a+b)! for members of the x-side and
-a! (b-1)! / (a+b)! for the z-side, which are precomputed in small tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .learners.base import LinearModel, ModelError, TreeEnsembleModel, TreeNode, predict
from .panel import SignalBlock, SignalId
from .trading_calendar import Quarter

MAX_BRUTE_FORCE_FEATURES = 12

# Reported importance tables scale attributions of daily decimal returns by
# 1e4 (basis points); stored records stay in raw target units.
IMPORTANCE_REPORT_SCALE = 1e4


@dataclass(frozen=True)
class Attribution:
    """Per-feature contributions plus the background base value."""

    phi: np.ndarray
    base_value: float
    stderr: np.ndarray | None = None

    def total(self) -> float:
        return float(self.phi.sum() + self.base_value)


@dataclass(frozen=True)
class ImportanceRecord:
    asset: str
    quarter: Quarter
    algo: str
    signal: SignalId
    value: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and self.value >= 0.0):
            raise ValueError("importance must be finite and >= 0")


Predictor = Callable[[np.ndarray], np.ndarray]


def _as_background(background: np.ndarray) -> np.ndarray:
    Z = np.asarray(background, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("background must be a nonempty 2-D sample")
    return Z


def brute_force_shapley(
    f: Predictor,
    x: np.ndarray,
    background: np.ndarray,
    max_features: int = MAX_BRUTE_FORCE_FEATURES,
) -> Attribution:
    """Exact Shapley values by coalition enumeration (p <= 12)."""
    x = np.asarray(x, dtype=np.float64)
    Z = _as_background(background)
    p = len(x)
    if p > max_features:
        raise ValueError(f"{p} features: use the sampled method beyond {max_features}")

    v = np.empty(1 << p)
    for mask in range(1 << p):
        members = np.array([(mask >> j) & 1 for j in range(p)], dtype=bool)
        spliced = np.where(members, x, Z)
        v[mask] = float(np.mean(f(spliced)))

    weight = [
        float(Fraction(math.factorial(s) * math.factorial(p - s - 1), math.factorial(p)))
        for s in range(p)
    ]
    phi = np.zeros(p)
    for mask in range(1 << p):
        s = bin(mask).count("1")
        for j in range(p):
            if not (mask >> j) & 1:
                phi[j] += weight[s] * (v[mask | (1 << j)] - v[mask])
    return Attribution(phi=phi, base_value=float(v[0]))


def _leaf_paths(
    root: TreeNode,
) -> list[tuple[float, np.ndarray, np.ndarray, np.ndarray]]:
    """(value, features, lower, upper) per leaf; pass means lo < v <= hi."""
    leaves: list[tuple[float, np.ndarray, np.ndarray, np.ndarray]] = []

    def walk(node: TreeNode, bounds: dict[int, tuple[float, float]]) -> None:
        if node.is_leaf:
            feats = np.array(sorted(bounds), dtype=np.intp)
            lows = np.array([bounds[f][0] for f in feats])
            highs = np.array([bounds[f][1] for f in feats])
            leaves.append((node.value, feats, lows, highs))
            return
        lo, hi = bounds.get(node.feature, (-np.inf, np.inf))
        if node.threshold > lo:  # left region (lo, min(hi, t)] nonempty
            bounds[node.feature] = (lo, min(hi, node.threshold))
            walk(node.left, bounds)
        if node.threshold < hi:  # right region (max(lo, t), hi] nonempty
            bounds[node.feature] = (max(lo, node.threshold), hi)
            walk(node.right, bounds)
        if lo == -np.inf and hi == np.inf:
            bounds.pop(node.feature, None)
        else:
            bounds[node.feature] = (lo, hi)

    walk(root, {})
    return leaves


def _shapley_weight_tables(max_count: int) -> tuple[np.ndarray, np.ndarray]:
    size = max_count + 1
    only_x = np.zeros((size, size))
    only_z = np.zeros((size, size))
    for a in range(size):
        for b in range(size):
            if a + b > max_count:
                continue
            denom = math.factorial(a + b)
            if a >= 1:
                only_x[a, b] = float(
                    Fraction(math.factorial(a - 1) * math.factorial(b), denom)
                )
            if b >= 1:
                only_z[a, b] = -float(
                    Fraction(math.factorial(a) * math.factorial(b - 1), denom)
                )
    return only_x, only_z


def tree_shap_batch(
    model: TreeEnsembleModel,
    X: np.ndarray,
    background: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Exact interventional attributions for every row of X at once."""
    X = np.asarray(X, dtype=np.float64)
    Z = _as_background(background)
    n, p = X.shape
    m = Z.shape[0]
    phi = np.zeros((n, p))

    per_tree = [_leaf_paths(t) for t in model.trees]
    max_depth = max(
        (len(feats) for leaves in per_tree for _, feats, _, _ in leaves), default=0
    )
    w_only_x, w_only_z = _shapley_weight_tables(max_depth)

    for weight, leaves in zip(model.tree_weights, per_tree):
        for value, feats, lows, highs in leaves:
            if len(feats) == 0:
                continue  # constrains nothing: same contribution to every v(S)
            px = (X[:, feats] > lows) & (X[:, feats] <= highs)
            pz = (Z[:, feats] > lows) & (Z[:, feats] <= highs)
            fx = px.astype(np.float64)
            fz = pz.astype(np.float64)
            a = np.rint(fx @ (1.0 - fz).T).astype(np.intp)
            b = np.rint((1.0 - fx) @ fz.T).astype(np.intp)
            alive = ((1.0 - fx) @ (1.0 - fz).T) < 0.5
            gain_x = np.where(alive, w_only_x[a, b], 0.0)
            gain_z = np.where(alive, w_only_z[a, b], 0.0)
            scale = weight * value / m
            for i, f in enumerate(feats):
                contrib = fx[:, i] * (gain_x @ (1.0 - fz[:, i])) + (
                    1.0 - fx[:, i]
                ) * (gain_z @ fz[:, i])
                phi[:, f] += scale * contrib

    base = float(np.mean(predict(model, Z)))
    return phi, base


def tree_shap(
    model: TreeEnsembleModel,
    x: np.ndarray,
    background: np.ndarray,
) -> Attribution:
    if not isinstance(model, TreeEnsembleModel):
        raise ModelError("tree_shap requires a tree-ensemble model")
    phi, base = tree_shap_batch(model, np.asarray(x, dtype=np.float64)[None, :], background)
    return Attribution(phi=phi[0], base_value=base)


def sampled_shapley(
    f: Predictor,
    x: np.ndarray,
    background: np.ndarray,
    n_permutations: int,
    seed: int,
) -> Attribution:
    """Unbiased Monte-Carlo permutation estimator with per-feature stderr."""
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    Z = _as_background(background)
    p = len(x)
    rng = np.random.default_rng(seed)

    base = float(np.mean(f(Z)))
    draws = np.empty((n_permutations, p))
    for t in range(n_permutations):
        order = rng.permutation(p)
        spliced = Z.copy()
        prev = base
        for j in order:
            spliced[:, j] = x[j]
            cur = float(np.mean(f(spliced)))
            draws[t, j] = cur - prev
            prev = cur
    phi = draws.mean(axis=0)
    if n_permutations > 1:
        stderr = draws.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    else:
        stderr = np.zeros(p)
    return Attribution(phi=phi, base_value=base, stderr=stderr)


# ---------------------------------------------------------------------------
# Per-signal importance
# ---------------------------------------------------------------------------

def lasso_importance(
    model: LinearModel,
    signals: Sequence[SignalId],
    asset: str,
    quarter: Quarter,
) -> list[ImportanceRecord]:
    """|coefficient| per signal for linear fits on standardized inputs."""
    if not isinstance(model, LinearModel):
        raise ModelError("coefficient importance requires a linear model")
    if len(signals) != model.n_features:
        raise ModelError("signal list does not match model features")
    return [
        ImportanceRecord(asset, quarter, model.algo, sig, float(abs(c)))
        for sig, c in zip(signals, model.coef)
    ]


def _background_sample(values: np.ndarray, cap: int, seed: int) -> np.ndarray:
    if len(values) <= cap:
        return values
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(values), size=cap, replace=False))
    return values[idx]


def mean_abs_importance(
    model,
    block: SignalBlock,
    asset: str,
    quarter: Quarter,
    method: str = "tree_shap",
    background_cap: int = 500,
    n_permutations: int = 16,
    seed: int = 0,
) -> list[ImportanceRecord]:
    """Mean |attribution| per signal over all training rows of a block.

    The background is the training block itself, subsampled (seeded) past
    ``background_cap`` rows.
    """
    if block.n_rows == 0:
        raise ValueError("empty training block")
    background = _background_sample(block.values, background_cap, seed)
    if method == "tree_shap":
        if not isinstance(model, TreeEnsembleModel):
            raise ModelError("tree_shap importance requires a tree model")
        phi, _ = tree_shap_batch(model, block.values, background)
    elif method == "sampled_shapley":
        f: Predictor = lambda M: predict(model, M)
        rows = []
        for i in range(block.n_rows):
            rows.append(
                sampled_shapley(
                    f, block.values[i], background, n_permutations, seed + i
                ).phi
            )
        phi = np.array(rows)
    else:
        raise ValueError(f"unknown importance method {method!r}")
    mean_abs = np.abs(phi).mean(axis=0)
    return [
        ImportanceRecord(asset, quarter, model.algo, sig, float(v))
        for sig, v in zip(block.columns, mean_abs)
    ]
