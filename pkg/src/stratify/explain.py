"""Feature attribution: split-gain importance and exact Shapley values.

The Shapley value function is interventional: v(S) is the model output averaged
over background rows whose features in S are overwritten with the explained
row's values. ``shap_bruteforce`` enumerates all 2^p subsets and works for any
scoring function (guarded at p <= 20). ``shap_tree_fast`` computes the same
quantity for additive tree ensembles in closed form per (background row, leaf):
a leaf is reached under a coalition iff every path feature taken from x
satisfies its interval ("positive" literal) and every one taken from the
background row does too ("negative" literal), and the Shapley value of such a
conjunction game has a factorial closed form. Tree ensembles are explained on
their additive scale (margin for boosting), so positive values push toward
certification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifiers import TrainedModel
from .classifiers.boosting import GBTState
from .classifiers.trees import DTState, RFState, TreeNode
from .errors import ExplainError

EFFICIENCY_TOL = 1e-9


@dataclass(frozen=True)
class ImportanceRanking:
    """Per-feature share of total split gain, descending rank order."""

    scores: np.ndarray
    order: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def to_rows(self):
        names = self.feature_names or tuple(f"f{j}" for j in range(len(self.scores)))
        return [(names[j], float(self.scores[j]), rank + 1)
                for rank, j in enumerate(self.order)]


@dataclass(frozen=True)
class ShapMatrix:
    """Attributions phi (n x p), shared base value, and the explained feature values."""

    values: np.ndarray
    base: float
    feature_values: np.ndarray
    feature_names: tuple[str, ...] | None = None


def _tree_state(model):
    if isinstance(model, TrainedModel):
        state = model.state
    else:
        state = model
    if not isinstance(state, (DTState, RFState, GBTState)):
        raise ExplainError("tree-based attribution needs a DT, RF or GBT model")
    return state


def split_gain_importance(model, feature_names=None) -> ImportanceRanking:
    """Sum each feature's split gain over every node of the ensemble, normalized to 1."""
    state = _tree_state(model)
    p = state.n_features
    scores = np.zeros(p)
    for tree in state.trees:
        stack = [tree]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            scores[node.feature] += node.gain
            stack.extend([node.left, node.right])
    total = scores.sum()
    if total > 0:
        scores = scores / total
    order = np.lexsort((np.arange(p), -scores))
    return ImportanceRanking(scores, order, tuple(feature_names) if feature_names else None)


# ---------------------------------------------------------------------------
# exact Shapley, any model
# ---------------------------------------------------------------------------

def shap_bruteforce(predict_fn, x, background, max_features_guard: int = 20):
    """Exact Shapley attribution of predict_fn at x against a background sample.

    phi_i = sum over S not containing i of |S|!(p-|S|-1)!/p! * (v(S+i) - v(S)),
    v(S) = mean over background rows of predict_fn with S taken from x.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    B = np.asarray(background, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] == 0:
        raise ExplainError("background must be a nonempty matrix")
    p = len(x)
    if B.shape[1] != p:
        raise ExplainError("background and x must share the feature dimension")
    if p > max_features_guard:
        raise ExplainError(f"{p} features exceed the exact-enumeration guard "
                           f"({max_features_guard}); raise it explicitly if you mean it")

    v = np.empty(1 << p)
    for mask in range(1 << p):
        hybrid = B.copy()
        for i in range(p):
            if mask >> i & 1:
                hybrid[:, i] = x[i]
        v[mask] = float(np.mean(predict_fn(hybrid)))

    fact = [math.factorial(m) for m in range(p + 1)]
    weight = [fact[s] * fact[p - s - 1] / fact[p] for s in range(p)]
    phi = np.zeros(p)
    for mask in range(1 << p):
        s = bin(mask).count("1")
        for i in range(p):
            if not mask >> i & 1:
                phi[i] += weight[s] * (v[mask | (1 << i)] - v[mask])
    base = float(v[0])
    _check_efficiency(phi, base, float(np.mean(predict_fn(x[None, :]))))
    return phi, base


def _check_efficiency(phi, base, fx):
    err = abs(base + phi.sum() - fx)
    if err > EFFICIENCY_TOL * max(1.0, abs(fx)):
        raise ExplainError(f"efficiency axiom violated by {err:.3e}")


# ---------------------------------------------------------------------------
# exact Shapley, tree ensembles
# ---------------------------------------------------------------------------

def _leaf_paths(tree: TreeNode):
    """Yield (value, {feature: (lo, hi]}) for every leaf with a nonempty box."""
    out = []
    stack = [(tree, {})]
    while stack:
        node, box = stack.pop()
        if node.is_leaf:
            out.append((node.value, box))
            continue
        j, t = node.feature, node.threshold
        lo, hi = box.get(j, (-np.inf, np.inf))
        if t > lo:  # left interval (lo, min(hi, t)] is nonempty
            left = dict(box)
            left[j] = (lo, min(hi, t))
            stack.append((node.left, left))
        if t < hi:  # right interval (max(lo, t), hi] is nonempty
            right = dict(box)
            right[j] = (max(lo, t), hi)
            stack.append((node.right, right))
    return out


def shap_tree_fast(model, x, background):
    """Interventional Shapley for additive tree ensembles, exact and polynomial.

    For one (background row b, leaf) pair, v restricted to the leaf's used
    features U is w * [P subset of S] * [S disjoint from N] with
    P = {j in U: x passes, b fails} and N = {j: b passes, x fails}; features
    passing for both contribute a constant, a feature failing for both kills
    the leaf. The Shapley values of that conjunction are
    phi_j = w * (q-1)! r! / (q+r)!  for j in P, and
    phi_j = -w * q! (r-1)! / (q+r)! for j in N  (q = |P|, r = |N|).
    """
    state = _tree_state(model)
    x = np.asarray(x, dtype=np.float64).ravel()
    B = np.asarray(background, dtype=np.float64)
    prepared = [_leaf_paths(t) for t in state.trees]
    return _shap_tree_prepared(state, prepared, x, B)


def _conjunction_tables(p_max: int):
    # pos_tab[q, r] = (q-1)! r! / (q+r)!   (q >= 1)
    # neg_tab[q, r] = q! (r-1)! / (q+r)!   (r >= 1)
    fact = np.array([math.factorial(m) for m in range(2 * p_max + 2)], dtype=np.float64)
    q = np.arange(p_max + 1)[:, None]
    r = np.arange(p_max + 1)[None, :]
    denom = fact[q + r]
    pos_tab = fact[np.maximum(q - 1, 0)] * fact[r] / denom
    neg_tab = fact[q] * fact[np.maximum(r - 1, 0)] / denom
    return pos_tab, neg_tab


def _shap_tree_prepared(state, prepared, x, B):
    if B.ndim != 2 or B.shape[0] == 0:
        raise ExplainError("background must be a nonempty matrix")
    p = state.n_features
    if len(x) != p or B.shape[1] != p:
        raise ExplainError("feature dimension mismatch")
    nb = B.shape[0]
    pos_tab, neg_tab = _conjunction_tables(p)
    phi = np.zeros(p)
    base = state.base_offset
    weight = state.tree_weight
    fx = state.base_offset

    for leaves in prepared:
        for value, box in leaves:
            if not box:  # leaf-only tree: constant contribution
                base += weight * value
                fx += weight * value
                continue
            feats = list(box.keys())
            lo = np.array([box[j][0] for j in feats])
            hi = np.array([box[j][1] for j in feats])
            x_pass = (x[feats] > lo) & (x[feats] <= hi)
            b_pass = (B[:, feats] > lo[None, :]) & (B[:, feats] <= hi[None, :])
            if x_pass.all():
                fx += weight * value
            # rows where some feature fails for both x and b never reach the leaf
            alive = ~((~x_pass[None, :]) & (~b_pass)).any(axis=1)
            if not alive.any():
                continue
            pos = x_pass[None, :] & (~b_pass[alive])   # P per live row
            neg = (~x_pass[None, :]) & b_pass[alive]   # N per live row
            q = pos.sum(axis=1)
            r = neg.sum(axis=1)
            base += weight * value * float((q == 0).sum()) / nb
            scale = weight * value / nb
            w_pos = scale * pos_tab[q, r]
            w_neg = -scale * neg_tab[q, r]
            for c, j in enumerate(feats):
                phi[j] += w_pos[pos[:, c]].sum() + w_neg[neg[:, c]].sum()

    _check_efficiency(phi, base, fx)
    return phi, float(base)


def shap_matrix(model, X, background, feature_names=None, fast=True) -> ShapMatrix:
    """Explain every row of X; tree models take the closed-form path by default."""
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(background, dtype=np.float64)
    rows = []
    base = 0.0
    if fast:
        state = _tree_state(model)
        prepared = [_leaf_paths(t) for t in state.trees]
        for i in range(X.shape[0]):
            phi, base = _shap_tree_prepared(state, prepared, X[i], B)
            rows.append(phi)
    else:
        from .classifiers import predict_scores
        for i in range(X.shape[0]):
            phi, base = shap_bruteforce(lambda M: predict_scores(model, M), X[i], B)
            rows.append(phi)
    return ShapMatrix(np.array(rows), base, X.copy(),
                      tuple(feature_names) if feature_names else None)


def beeswarm_export(matrix: ShapMatrix):
    """Long-format rows (feature, sample, shap, value, value percentile), ordered by
    mean |shap| per feature descending; percentile is the midrank ECDF in [0, 1]."""
    n, p = matrix.values.shape
    names = matrix.feature_names or tuple(f"f{j}" for j in range(p))
    mean_abs = np.abs(matrix.values).mean(axis=0)
    feat_order = np.lexsort((np.arange(p), -mean_abs))
    out = []
    for j in feat_order:
        col = matrix.feature_values[:, j]
        less = np.sum(col[None, :] < col[:, None], axis=1)
        equal = np.sum(col[None, :] == col[:, None], axis=1)
        pct = (less + 0.5 * equal) / n
        for i in range(n):
            out.append((names[j], i, float(matrix.values[i, j]), float(col[i]), float(pct[i])))
    return out
