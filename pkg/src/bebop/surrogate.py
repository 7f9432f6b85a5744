"""Extremely randomized regression forest with two uncertainty estimates.

Every tree sees the whole training set (no bootstrap). At each node the
best variance-reducing split is computed for each feature in a random
subset, and the split actually used is drawn uniformly among those
per-feature optima (ties between equally good thresholds of one feature are
also broken at random). Thresholds sit midway between adjacent training
values.

``predict_std_classic`` is the spread of the per-tree predictions.
``predict_std_augmented`` adds ``lam * d_min(x)``, where ``d_min`` is the
Euclidean distance to the nearest training input, so uncertainty keeps
growing away from observed data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy.spatial import cKDTree

_TIE_TOL = 1e-12


@numba.njit(cache=True)
def _best_split(X, y, row, feature):
    """Best SSE split of the samples in ``row`` (already sorted by
    ``feature``) as (found, threshold)."""
    m = row.shape[0]
    total = 0.0
    total_sq = 0.0
    for i in range(m):
        v = y[row[i]]
        total += v
        total_sq += v * v
    best = np.inf
    best_pos = -1
    n_ties = 0
    csum = 0.0
    csq = 0.0
    for i in range(m - 1):
        v = y[row[i]]
        csum += v
        csq += v * v
        if X[row[i + 1], feature] <= X[row[i], feature]:
            continue
        nl = i + 1
        nr = m - nl
        sse = (csq - csum * csum / nl) + ((total_sq - csq) - (total - csum) ** 2 / nr)
        if sse < best - _TIE_TOL:
            best = sse
            best_pos = i
            n_ties = 1
        elif abs(sse - best) <= _TIE_TOL:
            n_ties += 1
            # reservoir sampling keeps a uniform choice among tied positions
            if np.random.randint(0, n_ties) == 0:
                best_pos = i
    if best_pos < 0:
        return False, 0.0
    lo = X[row[best_pos], feature]
    hi = X[row[best_pos + 1], feature]
    thr = 0.5 * (lo + hi)
    if thr >= hi:  # adjacent floats: the midpoint rounds up
        thr = lo
    return True, thr


@numba.njit(cache=True)
def _build_tree(X, y, presorted, seed, max_features, min_samples_split):
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    goes_left = np.zeros(n, dtype=np.bool_)

    # each stack entry carries a (d, m) matrix: row f lists the node's
    # samples sorted by feature f
    stack_nodes = [0]
    stack_rows = [presorted]
    n_nodes = 1
    cand_f = np.empty(d, dtype=np.int64)
    cand_t = np.empty(d)
    while len(stack_nodes) > 0:
        node = stack_nodes.pop()
        rows = stack_rows.pop()
        members = rows[0]
        m = members.shape[0]
        lo = np.inf
        hi = -np.inf
        acc = 0.0
        for i in range(m):
            v = y[members[i]]
            acc += v
            lo = min(lo, v)
            hi = max(hi, v)
        value[node] = acc / m
        if m < min_samples_split or hi - lo <= 0.0:
            continue
        features = np.random.permutation(d)[:max_features]
        k = 0
        for f in features:
            found, thr = _best_split(X, y, rows[f], f)
            if found:
                cand_f[k] = f
                cand_t[k] = thr
                k += 1
        if k == 0:
            continue
        j = np.random.randint(0, k)
        f = cand_f[j]
        thr = cand_t[j]
        n_left = 0
        for i in range(m):
            s = members[i]
            goes_left[s] = X[s, f] <= thr
            if goes_left[s]:
                n_left += 1
        lrows = np.empty((d, n_left), dtype=np.int64)
        rrows = np.empty((d, m - n_left), dtype=np.int64)
        for g in range(d):
            a = 0
            b = 0
            for i in range(m):
                s = rows[g, i]
                if goes_left[s]:
                    lrows[g, a] = s
                    a += 1
                else:
                    rrows[g, b] = s
                    b += 1
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_nodes.append(n_nodes)
        stack_rows.append(lrows)
        stack_nodes.append(n_nodes + 1)
        stack_rows.append(rrows)
        n_nodes += 2
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
    )


@numba.njit(cache=True)
def _predict_trees(X, features, thresholds, lefts, rights, values, offsets):
    n_trees = offsets.shape[0] - 1
    out = np.empty((n_trees, X.shape[0]))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(X.shape[0]):
            node = base
            while features[node] >= 0:
                if X[i, features[node]] <= thresholds[node]:
                    node = base + lefts[node]
                else:
                    node = base + rights[node]
            out[t, i] = values[node]
    return out


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_features: Optional[int] = None  # None: all features
    min_samples_split: int = 2
    lam: Optional[float] = None  # None: lam_scale * (max(y) - min(y)), refreshed on fit
    lam_scale: float = 0.5


class Forest:
    """A fitted forest. Use :func:`fit` to build one."""

    def __init__(self, X, y, trees, lam, config):
        self.X = X
        self.y = y
        self.lam = float(lam)
        self.config = config
        self.n_trees = len(trees)
        self._kdtree = cKDTree(X) if X.shape[1] > 0 else None
        sizes = [len(t[0]) for t in trees]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self._feature = np.concatenate([t[0] for t in trees])
        self._threshold = np.concatenate([t[1] for t in trees])
        self._left = np.concatenate([t[2] for t in trees])
        self._right = np.concatenate([t[3] for t in trees])
        self._value = np.concatenate([t[4] for t in trees])

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        return x, single

    def predict_trees(self, x) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, n_points)."""
        X, _ = self._as_batch(x)
        return _predict_trees(
            X, self._feature, self._threshold, self._left, self._right, self._value, self._offsets
        )

    def _out(self, v, single):
        return float(v[0]) if single else v

    def predict_mean(self, x):
        X, single = self._as_batch(x)
        return self._out(self.predict_trees(X).mean(axis=0), single)

    def predict_std_classic(self, x):
        X, single = self._as_batch(x)
        return self._out(self.predict_trees(X).std(axis=0), single)

    def d_min(self, x):
        X, single = self._as_batch(x)
        if self._kdtree is None:
            d = np.zeros(len(X))
        else:
            d, _ = self._kdtree.query(X, k=1)
        return self._out(np.asarray(d, dtype=float), single)

    def predict_std_augmented(self, x):
        X, single = self._as_batch(x)
        return self._out(self.predict_std_classic(X) + self.lam * self.d_min(X), single)

    def predict(self, x, uncertainty: str = "augmented"):
        """Mean and standard deviation in one pass over the trees."""
        X, single = self._as_batch(x)
        per_tree = self.predict_trees(X)
        mean = per_tree.mean(axis=0)
        std = per_tree.std(axis=0)
        if uncertainty == "augmented":
            std = std + self.lam * self.d_min(X)
        elif uncertainty != "classic":
            raise ValueError(f"unknown uncertainty mode {uncertainty!r}")
        return self._out(mean, single), self._out(std, single)

    def dump(self) -> str:
        """Text listing of every tree's splits, for debugging."""
        lines = []
        for t in range(self.n_trees):
            base = self._offsets[t]
            lines.append(f"tree {t}")

            def walk(node, depth):
                f = self._feature[base + node]
                pad = "  " * (depth + 1)
                if f < 0:
                    lines.append(f"{pad}leaf {self._value[base + node]:.6g}")
                    return
                lines.append(f"{pad}x[{f}] <= {self._threshold[base + node]:.6g}")
                walk(self._left[base + node], depth + 1)
                walk(self._right[base + node], depth + 1)

            walk(0, 0)
        return "\n".join(lines)


def default_lambda(y: np.ndarray, scale: float = 0.5) -> float:
    """``scale`` times the observed reward range; falls back to the reward
    magnitude (at least 1) when all targets are equal so exploration never
    switches off."""
    spread = float(np.max(y) - np.min(y))
    if spread <= 0.0:
        spread = max(abs(float(y[0])), 1.0)
    return scale * spread


def fit(X, y, config: ForestConfig = ForestConfig(), seed: int = 0) -> Forest:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training set must be a non-empty 2-D array")
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    d = X.shape[1]
    max_features = d if config.max_features is None else max(1, min(config.max_features, d))
    ss = np.random.SeedSequence(seed)
    tree_seeds = ss.generate_state(config.n_trees, dtype=np.uint32) % (2**31 - 1)
    if d:
        presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T, dtype=np.int64)
    else:
        presorted = np.arange(len(X), dtype=np.int64).reshape(1, -1)
    trees = [
        _build_tree(X, y, presorted, int(s), max_features, config.min_samples_split)
        for s in tree_seeds
    ]
    lam = config.lam if config.lam is not None else default_lambda(y, config.lam_scale)
    return Forest(X, y, trees, lam, config)
