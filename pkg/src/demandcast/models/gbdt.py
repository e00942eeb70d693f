"""Gradient-boosted regression trees with exact greedy split search.

Squared-error boosting: each round fits a depth-limited binary tree to the
current residuals.  With squared loss the per-row hessian is 1, so leaf
weights reduce to sum(residuals) / (rows + l2_lambda) and the split gain to

    0.5 * (GL^2/(nL+lam) + GR^2/(nR+lam) - G^2/(n+lam))

over every feature and every midpoint between consecutive distinct sorted
values.  There is no subsampling and no randomness anywhere: two fits on
identical input are bit-identical, and candidate rows are canonically
ordered by (feature value, residual) so fits are invariant to row
permutation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NoSplitsError, SchemaMismatchError
from ..features import FeatureMatrix

logger = logging.getLogger(__name__)

_LEAF = -1


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    l2_lambda: float = 0.1
    max_depth: int = 6
    min_child_rows: int = 1
    gamma_split_threshold: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.l2_lambda < 0.0:
            raise ValueError("l2_lambda must be >= 0")
        if self.n_trees < 0 or self.max_depth < 1 or self.min_child_rows < 1:
            raise ValueError("n_trees, max_depth, min_child_rows must be positive")


@dataclass
class RegressionTree:
    """Flat-array binary tree; feature == -1 marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = feature[node] != _LEAF
            if not internal.any():
                break
            idx = np.flatnonzero(internal)
            f = feature[node[idx]]
            goes_left = X[idx, f] <= threshold[node[idx]]
            node[idx] = np.where(goes_left, left[node[idx]], right[node[idx]])
        return value[node]


@dataclass
class GbdtModel:
    config: GbdtConfig
    base_score: float
    trees: list[RegressionTree]
    feature_names: list[str]
    gain_totals: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "kind": "gbdt",
            "config": {
                "n_trees": self.config.n_trees,
                "learning_rate": self.config.learning_rate,
                "l2_lambda": self.config.l2_lambda,
                "max_depth": self.config.max_depth,
                "min_child_rows": self.config.min_child_rows,
                "gamma_split_threshold": self.config.gamma_split_threshold,
            },
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "gain_totals": dict(self.gain_totals),
            "trees": [
                {
                    "feature": t.feature,
                    "threshold": t.threshold,
                    "left": t.left,
                    "right": t.right,
                    "value": t.value,
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbdtModel":
        return cls(
            config=GbdtConfig(**doc["config"]),
            base_score=float(doc["base_score"]),
            trees=[
                RegressionTree(
                    feature=list(t["feature"]),
                    threshold=list(t["threshold"]),
                    left=list(t["left"]),
                    right=list(t["right"]),
                    value=list(t["value"]),
                )
                for t in doc["trees"]
            ],
            feature_names=list(doc["feature_names"]),
            gain_totals=dict(doc["gain_totals"]),
        )


def _node_score(g: float, n: float, lam: float) -> float:
    return (g * g) / (n + lam)


def _best_split(
    X: np.ndarray,
    residual: np.ndarray,
    rows: np.ndarray,
    cfg: GbdtConfig,
) -> tuple[float, int, float] | None:
    """Highest-gain (feature, threshold) over all exact candidates.

    Ties break toward the lowest feature index, then the lowest threshold,
    which the strictly-greater comparison over an ascending scan guarantees.
    """
    Xn = X[rows]
    rf = residual[rows]
    g_total = float(rf.sum())
    n_total = float(len(rows))
    parent = _node_score(g_total, n_total, cfg.l2_lambda)
    best_gain = cfg.gamma_split_threshold
    best: tuple[float, int, float] | None = None
    min_rows = cfg.min_child_rows

    for f in range(X.shape[1]):
        xf = Xn[:, f]
        order = np.lexsort((rf, xf))
        xs = xf[order]
        rs = rf[order]
        if xs[0] == xs[-1]:
            continue
        csum = np.cumsum(rs)
        boundaries = np.flatnonzero(xs[:-1] != xs[1:])
        n_left = boundaries + 1.0
        ok = (n_left >= min_rows) & (n_total - n_left >= min_rows)
        boundaries = boundaries[ok]
        if not len(boundaries):
            continue
        n_left = boundaries + 1.0
        g_left = csum[boundaries]
        g_right = g_total - g_left
        gains = 0.5 * (
            g_left * g_left / (n_left + cfg.l2_lambda)
            + g_right * g_right / (n_total - n_left + cfg.l2_lambda)
            - parent
        )
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            i = boundaries[k]
            best = (best_gain, f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _build_tree(
    X: np.ndarray,
    residual: np.ndarray,
    cfg: GbdtConfig,
    gain_totals: dict[str, float],
    feature_names: Sequence[str],
) -> RegressionTree:
    tree = RegressionTree()

    def grow(rows: np.ndarray, depth: int) -> int:
        node = tree.add_node()
        split = None
        if depth < cfg.max_depth and len(rows) >= 2 * cfg.min_child_rows:
            split = _best_split(X, residual, rows, cfg)
        if split is None:
            g = float(residual[rows].sum())
            tree.value[node] = g / (len(rows) + cfg.l2_lambda)
            return node
        gain, f, threshold = split
        gain_totals[feature_names[f]] = gain_totals.get(feature_names[f], 0.0) + gain
        goes_left = X[rows, f] <= threshold
        tree.feature[node] = f
        tree.threshold[node] = threshold
        tree.left[node] = grow(rows[goes_left], depth + 1)
        tree.right[node] = grow(rows[~goes_left], depth + 1)
        return node

    grow(np.arange(len(residual)), 0)
    return tree


def fit_gbdt(matrix: FeatureMatrix, cfg: GbdtConfig = GbdtConfig()) -> GbdtModel:
    """Boost ``cfg.n_trees`` trees against the matrix target.

    A constant target degenerates gracefully: no split clears the gain
    threshold, every tree is a zero-weight leaf, and predictions equal the
    base score.
    """
    if not len(matrix):
        raise ValueError("cannot fit on an empty matrix")
    X = np.ascontiguousarray(matrix.rows)
    y = matrix.target
    base = float(y.mean())
    gain_totals = {name: 0.0 for name in matrix.columns}
    trees: list[RegressionTree] = []
    prediction = np.full(len(y), base)
    for _ in range(cfg.n_trees):
        residual = y - prediction
        tree = _build_tree(X, residual, cfg, gain_totals, matrix.columns)
        trees.append(tree)
        prediction = prediction + cfg.learning_rate * tree.predict(X)
    return GbdtModel(
        config=cfg,
        base_score=base,
        trees=trees,
        feature_names=list(matrix.columns),
        gain_totals=gain_totals,
    )


def predict_gbdt(model: GbdtModel, matrix: FeatureMatrix) -> np.ndarray:
    if list(matrix.columns) != list(model.feature_names):
        raise SchemaMismatchError(
            f"matrix columns {matrix.columns} != model features {model.feature_names}"
        )
    out = np.full(len(matrix), model.base_score)
    X = np.ascontiguousarray(matrix.rows)
    for tree in model.trees:
        out += model.config.learning_rate * tree.predict(X)
    return out


def feature_importance(model: GbdtModel) -> list[tuple[str, float]]:
    """Gain shares per feature, descending, ties broken by name."""
    total = sum(model.gain_totals.values())
    if total <= 0.0:
        raise NoSplitsError("model contains no accepted splits")
    ranked = sorted(model.gain_totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(name, gain / total) for name, gain in ranked]
