"""Second-order gradient boosting on the logistic loss with regularized trees.

Each round fits a depth-capped tree to the current gradient/hessian pair
(g = p - y, h = p(1-p)); leaves take the closed-form optimum -G/(H + lambda)
and splits maximize the standard regularized gain

    1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)) - gamma.

Split search is exact greedy over presorted feature columns (sorted index lists
are partitioned down the tree, so no per-node re-sorting). Leaf values are
stored pre-scaled by the learning rate; the ensemble margin is their sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .linear import log_loss_terms, sigmoid
from .trees import TreeNode, tree_predict


@dataclass
class GBTParams:
    max_depth: int = 5
    n_trees: int = 100
    max_iterations: int = 50   # hard cap on boosting rounds; min(n_trees, this) governs
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    reg_gamma: float = 0.0
    min_child_weight: float = 0.0
    min_leaf: int = 1

    def __post_init__(self):
        if self.max_depth < 1 or self.n_trees < 1 or self.max_iterations < 1:
            raise TrainingError("depth and round counts must be >= 1")
        if self.learning_rate <= 0 or self.reg_lambda < 0:
            raise TrainingError("learning rate must be > 0 and lambda >= 0")


@dataclass
class GBTState:
    forest: list[TreeNode]
    base_margin: float
    n_features: int

    @property
    def trees(self) -> list[TreeNode]:
        return self.forest

    @property
    def tree_weight(self) -> float:
        return 1.0

    @property
    def base_offset(self) -> float:
        return self.base_margin


def leaf_weight(G: float, H: float, lam: float) -> float:
    """Closed-form minimizer of G*w + 1/2*(H + lam)*w^2."""
    return -G / (H + lam)


def split_gain(GL, HL, GR, HR, lam, gamma):
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam)
                  - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def _grow_tree(X, g, h, orders, params: GBTParams):
    lam, gamma_, eta = params.reg_lambda, params.reg_gamma, params.learning_rate
    mcw, min_leaf = params.min_child_weight, params.min_leaf
    n, p = X.shape
    in_left = np.zeros(n, dtype=bool)
    root = TreeNode()
    leaf_rows = []
    stack = [(root, orders, 0)]
    while stack:
        node, lists, depth = stack.pop()
        rows = lists[0]
        G, H = float(g[rows].sum()), float(h[rows].sum())
        node.n_samples = len(rows)
        node.value = eta * (-G / max(H + lam, 1e-16))
        if depth >= params.max_depth or len(rows) < 2 * min_leaf or len(rows) < 2:
            leaf_rows.append((node, rows))
            continue
        best = None
        best_gain = 1e-12
        for j in range(p):
            sid = lists[j]
            xv = X[sid, j]
            GL = np.cumsum(g[sid])[:-1]
            HL = np.cumsum(h[sid])[:-1]
            m = len(sid)
            left_n = np.arange(1, m)
            ok = ((xv[:-1] < xv[1:]) & (left_n >= min_leaf) & (m - left_n >= min_leaf)
                  & (HL >= mcw) & (H - HL >= mcw))
            if not ok.any():
                continue
            gains = split_gain(GL, HL, G - GL, H - HL, lam, gamma_)
            gains[~ok] = -np.inf
            i = int(np.argmax(gains))
            if gains[i] > best_gain:
                best_gain = float(gains[i])
                best = (j, i)
        if best is None:
            leaf_rows.append((node, rows))
            continue
        j, i = best
        sid = lists[j]
        node.feature = j
        node.threshold = float((X[sid[i], j] + X[sid[i + 1], j]) / 2.0)
        node.gain = best_gain
        in_left[sid[:i + 1]] = True
        left_lists = [lst[in_left[lst]] for lst in lists]
        right_lists = [lst[~in_left[lst]] for lst in lists]
        in_left[sid[:i + 1]] = False
        node.left, node.right = TreeNode(), TreeNode()
        stack.append((node.left, left_lists, depth + 1))
        stack.append((node.right, right_lists, depth + 1))
    return root, leaf_rows


def fit_gbt(X, y, params: GBTParams, seed: int):
    n, p = X.shape
    y = np.asarray(y, dtype=np.float64)
    rounds = min(params.n_trees, params.max_iterations)
    orders = [np.argsort(X[:, j], kind="stable") for j in range(p)]
    margin = np.full(n, 0.0)
    curve = [float(log_loss_terms(margin, y).mean())]
    forest = []
    for _ in range(rounds):
        prob = sigmoid(margin)
        g = prob - y
        h = prob * (1.0 - prob)
        tree, leaf_rows = _grow_tree(X, g, h, orders, params)
        tree.validate()
        if all(lr_node.value == 0.0 for lr_node, _ in leaf_rows):
            break  # nothing left to fit
        for leaf, rows in leaf_rows:
            margin[rows] += leaf.value
        forest.append(tree)
        loss = float(log_loss_terms(margin, y).mean())
        # second-order steps with a small learning rate never increase the loss
        assert params.learning_rate > 0.3 or loss <= curve[-1] + 1e-9 * max(1.0, abs(curve[-1])), \
            "boosting loss increased"
        curve.append(loss)
    state = GBTState(forest, 0.0, p)
    meta = {"n_iter": len(forest), "final_loss": curve[-1], "loss_curve": curve}
    return state, meta


def gbt_margin(state: GBTState, X) -> np.ndarray:
    out = np.full(X.shape[0], state.base_margin)
    for tree in state.forest:
        out += tree_predict(tree, X)
    return out


def predict_gbt(state: GBTState, X) -> np.ndarray:
    return sigmoid(gbt_margin(state, X))
