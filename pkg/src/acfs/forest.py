"""Conditional weighted forest sampling.

A multi-target regression forest over decision space yields, for any query
decision, a weight vector on the training pairs (the share of leaves the
query has in common with each training point). Synthetic scenarios are
drawn by systematically resampling training outcomes with those weights
and adding Gaussian jitter with a Silverman-rule bandwidth.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import DomainError, as_generator, check_positive_int
from .risk import spectral_risk


class _Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "leaf_index",
                 "members", "leaf_start", "leaf_size")

    def route(self, X):
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return self.leaf_index[node]

    @property
    def n_leaves(self):
        return self.leaf_size.size


def _best_split(X, Y, rows, features, min_node):
    """Best multi-target variance-reduction split of ``rows`` on ``features``."""
    n = rows.size
    best = (0.0, -1, 0.0)
    Ysub = Y[rows]
    total_sq = (Ysub**2).sum()
    parent_sse = total_sq - (Ysub.sum(axis=0) ** 2).sum() / n
    if parent_sse <= 1e-14:
        return best
    sizes_left = np.arange(1, n)
    for f in features:
        xv = X[rows, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        csum = np.cumsum(Ysub[order], axis=0)[:-1]
        total = csum[-1] + Ysub[order[-1]] if n > 1 else Ysub.sum(axis=0)
        left_term = (csum**2).sum(axis=1) / sizes_left
        right_term = ((total - csum) ** 2).sum(axis=1) / (n - sizes_left)
        # SSE_left + SSE_right = total_sq - left_term - right_term
        gain = left_term + right_term - (total**2).sum() / n
        valid = (sizes_left >= min_node) & (n - sizes_left >= min_node) & (xs[1:] > xs[:-1])
        if not np.any(valid):
            continue
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            best = (gain[k], f, 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_tree(X, Y, rows, min_node, mtry, rng):
    feature, threshold, left, right = [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        return len(feature) - 1

    root = new_node()
    stack = [(root, rows)]
    while stack:
        node, idx = stack.pop()
        if idx.size < 2 * min_node:
            continue
        feats = rng.choice(X.shape[1], size=min(mtry, X.shape[1]), replace=False)
        gain, f, thr = _best_split(X, Y, idx, feats, min_node)
        if f < 0:
            continue
        mask = X[idx, f] <= thr
        l, r = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, l, r
        stack.append((r, idx[~mask]))
        stack.append((l, idx[mask]))

    tree = _Tree()
    tree.feature = np.asarray(feature, dtype=np.intp)
    tree.threshold = np.asarray(threshold, dtype=float)
    tree.left = np.asarray(left, dtype=np.intp)
    tree.right = np.asarray(right, dtype=np.intp)
    is_leaf = tree.feature < 0
    tree.leaf_index = np.full(tree.feature.size, -1, dtype=np.intp)
    tree.leaf_index[is_leaf] = np.arange(is_leaf.sum())
    return tree


def _populate_leaves(tree, X):
    leaf_of = tree.route(X)
    order = np.argsort(leaf_of, kind="stable")
    counts = np.bincount(leaf_of, minlength=int(tree.leaf_index.max()) + 1)
    tree.members = order
    tree.leaf_start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    tree.leaf_size = counts
    return leaf_of


class ConditionalForestSampler(BaseEstimator):
    """Forest-weighted conditional sampler of multi-output outcomes.

    Parameters
    ----------
    n_trees : int, default=70
        Number of trees in the ensemble.
    min_node : int, default=15
        Minimum number of subsample points in a child node; nodes with fewer
        than ``2 * min_node`` points are not split.
    sample_fraction : float, default=0.5
        Fraction of the training set each tree is grown on (drawn without
        replacement).
    mtry : int or None, default=None
        Split candidates per node; ``None`` means ``ceil(sqrt(n_features))``.
    bandwidth_scale : float, default=1.0
        Multiplier on the Silverman-rule jitter bandwidth.
    random_state : int, Generator or None

    Attributes
    ----------
    trees_ : list
    X_train_, W_train_ : ndarray
    bandwidth_ : ndarray of shape (n_outputs,)
    """

    def __init__(self, n_trees=70, min_node=15, sample_fraction=0.5, mtry=None,
                 bandwidth_scale=1.0, random_state=None):
        self.n_trees = n_trees
        self.min_node = min_node
        self.sample_fraction = sample_fraction
        self.mtry = mtry
        self.bandwidth_scale = bandwidth_scale
        self.random_state = random_state

    def fit(self, X, W):
        X = check_array(X)
        W = check_array(W)
        if X.shape[0] != W.shape[0]:
            raise DomainError("X and W must have the same number of rows")
        n_trees = check_positive_int(self.n_trees, "n_trees")
        min_node = check_positive_int(self.min_node, "min_node")
        n = X.shape[0]
        mtry = self.mtry or int(np.ceil(np.sqrt(X.shape[1])))
        n_sub = max(1, int(round(self.sample_fraction * n)))
        seeds = np.random.SeedSequence(
            as_generator(self.random_state).integers(0, 2**63 - 1)
        ).spawn(n_trees)
        # standardised targets so no component dominates the split criterion
        scale = W.std(axis=0)
        Y = (W - W.mean(axis=0)) / np.where(scale > 0, scale, 1.0)
        self.trees_ = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
            tree = _grow_tree(X, Y, rows, min_node, mtry, rng)
            _populate_leaves(tree, X)
            self.trees_.append(tree)
        self.X_train_ = X
        self.W_train_ = W
        self.bandwidth_ = silverman_bandwidth(W, self.bandwidth_scale)
        return self

    def weights(self, x):
        """Forest weights of every training point for query ``x`` (simplex)."""
        check_is_fitted(self, "trees_")
        q = np.asarray(x, dtype=float).reshape(1, -1)
        w = np.zeros(self.X_train_.shape[0])
        for tree in self.trees_:
            leaf = tree.route(q)[0]
            start, size = tree.leaf_start[leaf], tree.leaf_size[leaf]
            w[tree.members[start:start + size]] += 1.0 / size
        return w / len(self.trees_)

    def predict(self, X):
        """Forest-weighted conditional mean of the outcomes at each query row."""
        X = check_array(X)
        return np.vstack([self.weights(x) @ self.W_train_ for x in X])

    def sample(self, x, n, random_state=None, bandwidth=None):
        """Draw ``n`` synthetic outcomes at query ``x``."""
        check_is_fitted(self, "trees_")
        rng = as_generator(random_state)
        idx = systematic_resample(self.weights(x), n, rng)
        h = self.bandwidth_ if bandwidth is None else np.asarray(bandwidth, dtype=float)
        return self.W_train_[idx] + h * rng.standard_normal((n, self.W_train_.shape[1]))


def fit_forest(X, W, n_trees=70, min_node=15, seed=None, **kwargs):
    return ConditionalForestSampler(n_trees=n_trees, min_node=min_node,
                                    random_state=seed, **kwargs).fit(X, W)


def leaf_weights(model, x):
    return model.weights(x)


def systematic_resample(w, n, seed=None):
    """Indices drawn by systematic resampling against cumulative weights.

    A single offset ``u`` in ``[0, 1)`` defines the grid ``(u + m) / n``;
    each index ``i`` is chosen between ``floor(n w_i)`` and ``ceil(n w_i)``
    times.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.isfinite(w).all():
        raise DomainError("weights must be a non-empty nonnegative vector")
    n = check_positive_int(n, "n")
    total = w.sum()
    if total <= 0:
        raise DomainError("weights must have positive mass")
    u = as_generator(seed).random() if not isinstance(seed, float) else seed
    # scaled cumulative mass; comparing in units of 1/n keeps integral n*w_i exact
    edges = np.cumsum(w) * (n / total)
    edges = np.minimum(edges, n)
    edges[np.flatnonzero(w)[-1]:] = n  # trailing zero weights must not inherit rounding slack
    # grid points u + m below edge E number floor(E) + [frac(E) > u]; counting this
    # way avoids forming u + m, which rounds across integer edges when u is near 1
    whole = np.floor(edges)
    below = whole.astype(np.intp) + (edges - whole > u)
    counts = np.diff(below, prepend=0)
    return np.repeat(np.arange(w.size), counts)


def silverman_bandwidth(W, scale=1.0):
    """Per-column Silverman bandwidth ``0.9 min(sd, IQR/1.34) N^(-1/5)``, floored."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] < 2:
        raise DomainError("need at least two rows")
    if scale <= 0:
        raise DomainError("scale must be positive")
    sd = W.std(axis=0, ddof=1)
    q75, q25 = np.percentile(W, [75, 25], axis=0)
    spread = np.minimum(sd, (q75 - q25) / 1.34)
    h = scale * 0.9 * spread * W.shape[0] ** (-0.2)
    return np.maximum(h, 1e-8 * (1.0 + np.abs(sd)))


def cwfs_draw(model, x, n, seed=None):
    return model.sample(x, n, random_state=seed)


def surrogate_risk(model, x, n, params, cost_fn, seed=None):
    """Forest-surrogate spectral risk at ``x`` from ``n`` synthetic draws."""
    W = model.sample(x, n, random_state=seed)
    return spectral_risk(cost_fn(W, x), params)
