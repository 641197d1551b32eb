"""Random forest regression and probability estimation built on CART trees.

Trees split on variance reduction; for 0/1 targets this coincides with the
Gini criterion (n*Gini = n*p*(1-p) equals the sum of squared deviations of a
binary vector), so one split routine serves both modes. Split candidates are
the midpoints of consecutive distinct sorted values of each sampled feature;
ties are broken toward the lowest feature index, then the lowest threshold,
which makes fitting fully deterministic given the data order and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from .data import RngStream, as_stream

__all__ = ["ForestParams", "ForestModel", "fit_forest"]


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters and seed for one forest."""

    n_trees: int = 100
    max_depth: int = 5
    min_samples_leaf: int = 1
    max_features: Optional[int] = None  # None = use all features
    bootstrap: bool = True
    seed: Union[int, RngStream] = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1 or None")

    def with_seed(self, seed: Union[int, RngStream]) -> "ForestParams":
        return replace(self, seed=seed)


class _Tree(NamedTuple):
    feature: np.ndarray    # split feature per node, -1 for leaves
    threshold: np.ndarray  # split threshold per node
    left: np.ndarray       # left child index
    right: np.ndarray      # right child index
    value: np.ndarray      # mean target (= class-1 frequency in probability mode)


def _grow_tree(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
               max_depth: int, min_leaf: int, max_features: Optional[int]) -> _Tree:
    """Level-synchronous CART builder.

    Each tree level is processed with a fixed number of vectorized passes
    over the level's rows, so deep trees stay cheap. Rows are kept grouped
    by node (segments); per-feature candidate evaluation uses one lexsort
    plus prefix sums, and the first per-segment minimum picks the lowest
    threshold on ties. Nodes are created breadth-first and the per-node
    feature subsets are drawn from ``rng`` in that order.
    """
    n, d = x.shape
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [float(y.mean())]

    rows = np.arange(n)                     # level rows, grouped by segment
    seg_id = np.zeros(n, dtype=np.int64)    # dense segment index per row
    node_of_seg = np.array([0])             # segment -> tree node id

    for _ in range(max_depth):
        n_seg = node_of_seg.shape[0]
        if n_seg == 0 or rows.shape[0] == 0:
            break
        counts = np.bincount(seg_id, minlength=n_seg)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        yv = y[rows]
        parent_sum = np.add.reduceat(yv, starts)
        parent_sq = np.add.reduceat(yv * yv, starts)
        parent_sse = parent_sq - parent_sum**2 / counts

        if max_features is None or max_features >= d:
            allowed = None
        else:
            allowed = np.zeros((n_seg, d), dtype=bool)
            for s in range(n_seg):
                allowed[s, rng.choice(d, size=max_features, replace=False)] = True

        best_sse = np.full(n_seg, np.inf)
        best_feat = np.full(n_seg, -1, dtype=np.int64)
        best_thr = np.zeros(n_seg)
        best_left_n = np.zeros(n_seg, dtype=np.int64)
        best_left_sum = np.zeros(n_seg)

        m = rows.shape[0]
        for j in range(d):
            if allowed is not None and not allowed[:, j].any():
                continue
            order = np.lexsort((x[rows, j], seg_id))
            xs = x[rows[order], j]
            ys = yv[order]
            seg_s = seg_id[order]
            cy = np.cumsum(ys)
            cy2 = np.cumsum(ys * ys)
            # candidate = split after sorted position i, inside one segment
            seg_c = seg_s[:-1]
            valid = (seg_s[1:] == seg_c) & (xs[1:] != xs[:-1])
            left_n = (np.arange(m) - starts[seg_s])[:-1] + 1
            right_n = counts[seg_c] - left_n
            valid &= (left_n >= min_leaf) & (right_n >= min_leaf)
            if allowed is not None:
                valid &= allowed[seg_c, j]
            if not valid.any():
                continue
            base = np.where(starts[seg_c] > 0, cy[starts[seg_c] - 1], 0.0)
            base2 = np.where(starts[seg_c] > 0, cy2[starts[seg_c] - 1], 0.0)
            left_sum = cy[:-1] - base
            left_sq = cy2[:-1] - base2
            with np.errstate(invalid="ignore", divide="ignore"):
                sse = (left_sq - left_sum**2 / left_n) + (
                    (parent_sq[seg_c] - left_sq)
                    - (parent_sum[seg_c] - left_sum) ** 2 / right_n
                )
            sse[~valid] = np.inf
            seg_min = np.full(n_seg, np.inf)
            np.minimum.at(seg_min, seg_c[valid], sse[valid])
            hit = np.flatnonzero(np.isfinite(sse) & (sse == seg_min[seg_c]))
            if hit.size == 0:
                continue
            uniq, first = np.unique(seg_c[hit], return_index=True)
            pick = hit[first]  # first occurrence = lowest threshold
            improved = seg_min[uniq] < best_sse[uniq]  # strict: lowest feature keeps ties
            upd = uniq[improved]
            pos = pick[improved]
            best_sse[upd] = sse[pos]
            best_feat[upd] = j
            best_thr[upd] = 0.5 * (xs[pos] + xs[pos + 1])
            best_left_n[upd] = left_n[pos]
            best_left_sum[upd] = left_sum[pos]

        split = (best_feat >= 0) & (best_sse < parent_sse)
        if not split.any():
            break

        # finalize split nodes and allocate children in breadth-first order
        split_segs = np.flatnonzero(split)
        seg_rank = np.full(n_seg, -1, dtype=np.int64)
        seg_rank[split_segs] = np.arange(split_segs.size)
        base_node = len(feature)
        for s in split_segs:
            node = node_of_seg[s]
            feature[node] = int(best_feat[s])
            threshold[node] = float(best_thr[s])
            left[node] = len(feature)
            right[node] = len(feature) + 1
            ln = int(best_left_n[s])
            lsum = best_left_sum[s]
            for child_val in (lsum / ln, (parent_sum[s] - lsum) / (counts[s] - ln)):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(child_val))

        keep = split[seg_id]
        rows_k = rows[keep]
        seg_k = seg_id[keep]
        go_right = x[rows_k, best_feat[seg_k]] > best_thr[seg_k]
        key = 2 * seg_rank[seg_k] + go_right
        order2 = np.argsort(key, kind="stable")
        rows = rows_k[order2]
        seg_id = key[order2]
        node_of_seg = base_node + np.arange(2 * split_segs.size)

    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
    )


def _predict_tree(tree: _Tree, x: np.ndarray) -> np.ndarray:
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        active = np.flatnonzero(tree.feature[node] >= 0)
        if active.size == 0:
            return tree.value[node]
        cur = node[active]
        go_left = x[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])


@dataclass(frozen=True)
class ForestModel:
    """A fitted forest; immutable, prediction is reentrant."""

    trees: tuple
    mode: str
    input_dim: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected covariates with {self.input_dim} columns, got shape {x.shape}"
            )
        out = np.zeros(x.shape[0])
        for tree in self.trees:
            out += _predict_tree(tree, x)
        out /= len(self.trees)
        if self.mode == "probability":
            out = np.clip(out, 0.0, 1.0)
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x)


def fit_forest(x: np.ndarray, t: np.ndarray, params: ForestParams,
               mode: str = "regression") -> ForestModel:
    """Fit a forest of CART trees to targets ``t``.

    In ``probability`` mode the targets must be 0/1 and predictions are the
    average of leaf class frequencies across trees (soft voting), so they
    always lie in [0, 1]. Regression predictions are averages of leaf means
    and therefore stay inside the hull of the training targets. Constant or
    otherwise unsplittable nodes become leaves; that is never an error.
    """
    if mode not in ("regression", "probability"):
        raise ValueError(f"mode must be 'regression' or 'probability', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    t = np.asarray(t, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 1 or x.shape[0] != t.shape[0]:
        raise ValueError(f"incompatible shapes x={x.shape}, t={t.shape}")
    if x.shape[0] < max(1, params.min_samples_leaf):
        raise ValueError(
            f"need at least {params.min_samples_leaf} rows, got {x.shape[0]}"
        )
    if not (np.isfinite(x).all() and np.isfinite(t).all()):
        raise ValueError("inputs contain non-finite entries")
    if mode == "probability" and not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("probability mode requires 0/1 targets")

    stream = as_stream(params.seed)
    n = x.shape[0]
    trees = []
    for i in range(params.n_trees):
        rng = stream.child("tree", i).generator()
        if params.bootstrap:
            rows = rng.integers(0, n, size=n)
            xt, tt = x[rows], t[rows]
        else:
            xt, tt = x, t
        trees.append(
            _grow_tree(xt, tt, rng, params.max_depth, params.min_samples_leaf,
                       params.max_features)
        )
    return ForestModel(trees=tuple(trees), mode=mode, input_dim=x.shape[1])
