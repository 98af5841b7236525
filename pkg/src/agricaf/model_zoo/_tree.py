"""Array-encoded regression tree grown by greedy SSE-minimizing splits.

The split search runs through the kernel pair in ``agricaf._kernels``; the
Python level only orchestrates node bookkeeping, per-split feature
subsampling, and the cost-complexity gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from agricaf import _kernels


@dataclass
class Tree:
    feature: np.ndarray  # int64; -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    importance: np.ndarray  # per-feature summed SSE reductions

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _kernels.tree_predict(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_nested(self, names) -> dict:
        def node(i: int) -> dict:
            if self.feature[i] < 0:
                return {"value": float(self.value[i]), "n": int(self.n_samples[i])}
            return {
                "feature": names[self.feature[i]],
                "threshold": float(self.threshold[i]),
                "n": int(self.n_samples[i]),
                "left": node(int(self.left[i])),
                "right": node(int(self.right[i])),
            }

        return node(0)

    @staticmethod
    def from_nested(nested: dict, names) -> "Tree":
        pos = {n: j for j, n in enumerate(names)}
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def add(node: dict) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(node.get("value", 0.0)))
            count.append(int(node.get("n", 0)))
            if "feature" in node:
                feature[i] = pos[node["feature"]]
                threshold[i] = float(node["threshold"])
                left[i] = add(node["left"])
                right[i] = add(node["right"])
            return i

        add(nested)
        return Tree(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=np.float64),
            n_samples=np.array(count, dtype=np.int64),
            importance=np.zeros(len(names)),
        )


def _node_stats(y: np.ndarray, rows: np.ndarray) -> tuple[float, float]:
    vals = y[rows]
    total = float(np.sum(vals))
    mean = total / rows.size
    sse = float(np.sum(vals * vals)) - total * mean
    return mean, max(sse, 0.0)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    max_depth: int | None,
    min_leaf: int,
    cp: float,
    mtry: int | None,
    rng: np.random.Generator | None,
) -> Tree:
    """Grow a tree on the given row subset (preorder, deterministic).

    A split is accepted only when its SSE reduction exceeds ``cp`` times the
    root SSE; ``mtry`` (when below the feature count) subsamples split
    candidates per node through ``rng``.
    """
    n_features = X.shape[1]
    depth_cap = max_depth if max_depth is not None else np.iinfo(np.int64).max
    all_feats = np.arange(n_features, dtype=np.int64)
    subsample = mtry is not None and mtry < n_features

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    count: list[int] = []
    importance = np.zeros(n_features)

    root_mean, root_sse = _node_stats(y, rows)
    gain_floor = max(cp * root_sse, 1e-12 * max(root_sse, 1e-300))

    def new_node(mean: float, n: int) -> int:
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(mean)
        count.append(n)
        return i

    stack = [(new_node(root_mean, rows.size), rows, 0, root_sse)]
    while stack:
        node_id, node_rows, depth, node_sse = stack.pop()
        if depth >= depth_cap or node_rows.size < 2 * min_leaf or node_sse <= 0.0:
            continue
        if subsample:
            feats = np.sort(rng.choice(all_feats, size=mtry, replace=False))
        else:
            feats = all_feats
        f, thresh, children_sse, _ = _kernels.best_split(
            X, y, np.ascontiguousarray(node_rows), feats, min_leaf
        )
        if f < 0:
            continue
        gain = node_sse - children_sse
        if gain <= gain_floor:
            continue
        mask = X[node_rows, f] <= thresh
        left_rows = node_rows[mask]
        right_rows = node_rows[~mask]
        l_mean, l_sse = _node_stats(y, left_rows)
        r_mean, r_sse = _node_stats(y, right_rows)
        feature[node_id] = int(f)
        threshold[node_id] = float(thresh)
        importance[f] += gain
        lid = new_node(l_mean, left_rows.size)
        rid = new_node(r_mean, right_rows.size)
        left[node_id] = lid
        right[node_id] = rid
        # right pushed first so the left child is processed next (preorder)
        stack.append((rid, right_rows, depth + 1, r_sse))
        stack.append((lid, left_rows, depth + 1, l_sse))

    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        n_samples=np.array(count, dtype=np.int64),
        importance=importance,
    )
