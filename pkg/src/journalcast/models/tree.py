"""CART regression trees and bagged forests.

Splits minimize the summed squared error of the two children. For each
feature the candidate thresholds are the midpoints between consecutive
distinct sorted values; ties in gain go to the lowest feature index, then
the lowest threshold.
"""

from __future__ import annotations

import numpy as np

LEAF = -1


class DecisionTree:
    """Regression tree stored as parallel node arrays."""

    def __init__(self, max_depth=9, min_samples_split=2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.feature = self.threshold = self.left = self.right = self.value = None
        self.n_node_samples = self.impurity = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        feature, threshold, left, right, value, counts, impurity = [], [], [], [], [], [], []

        def new_node(idx):
            yn = y[idx]
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(float(yn.mean()))
            counts.append(len(idx))
            impurity.append(float(yn.var()))
            return len(feature) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if depth >= self.max_depth or len(idx) < max(2, self.min_samples_split):
                continue
            split = best_split(X[idx], y[idx])
            if split is None:
                continue
            j, thr = split
            go_left = X[idx, j] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node] = j
            threshold[node] = thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=float)
        self.n_node_samples = np.array(counts, dtype=np.int64)
        self.impurity = np.array(impurity, dtype=float)
        return self

    def apply(self, X):
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f != LEAF
            if not active.any():
                return node
            go_left = X[rows, np.where(active, f, 0)] <= self.threshold[node]
            node = np.where(active, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        depths = np.zeros(len(self.feature), dtype=int)
        for n in range(len(self.feature)):
            if self.feature[n] != LEAF:
                depths[self.left[n]] = depths[self.right[n]] = depths[n] + 1
        return int(depths.max())

    def state(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    @classmethod
    def from_state(cls, s, max_depth=None, min_samples_split=None):
        t = cls(max_depth, min_samples_split)
        t.feature = np.asarray(s["feature"], dtype=np.int64)
        t.threshold = np.asarray(s["threshold"], dtype=float)
        t.left = np.asarray(s["left"], dtype=np.int64)
        t.right = np.asarray(s["right"], dtype=np.int64)
        t.value = np.asarray(s["value"], dtype=float)
        return t


def best_split(X, y):
    """``(feature, threshold)`` of the best variance-reducing split, or None."""
    n = len(y)
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    s_left = csum[:-1]
    s_right = total - s_left
    score = s_left ** 2 / n_left + s_right ** 2 / (n - n_left)
    distinct = Xs[1:] > Xs[:-1]
    score = np.where(distinct, score, -np.inf)
    pos = np.argmax(score, axis=0)
    per_feature = score[pos, np.arange(X.shape[1])]
    j = int(np.argmax(per_feature))
    gain = per_feature[j] - total[j] ** 2 / n
    sse = float(np.sum((y - y.mean()) ** 2))
    if not np.isfinite(gain) or gain <= 1e-12 * max(sse, 1e-300):
        return None
    i = int(pos[j])
    lo, hi = Xs[i, j], Xs[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return j, float(thr)


class RandomForest:
    """Bootstrap-aggregated CART trees with per-tree seeds derived from ``seed``."""

    def __init__(self, max_depth=15, min_samples_split=2, n_trees=100, seed=0, bootstrap=True):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.n_trees = n_trees
        self.seed = seed
        self.bootstrap = bootstrap
        self.trees: list[DecisionTree] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            self.trees.append(DecisionTree(self.max_depth, self.min_samples_split).fit(X[idx], y[idx]))
        return self

    def predict(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def state(self):
        out = {}
        for i, t in enumerate(self.trees):
            for k, v in t.state().items():
                out[f"tree{i}.{k}"] = v
        return out

    @classmethod
    def from_state(cls, s, **kw):
        f = cls(**kw)
        n = len({k.split(".")[0] for k in s})
        f.trees = [DecisionTree.from_state({k.split(".", 1)[1]: v for k, v in s.items()
                                            if k.split(".")[0] == f"tree{i}"})
                   for i in range(n)]
        return f
