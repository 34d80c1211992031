"""RBF-kernel support vector classifier solved with simplified SMO.

The dual is optimized by sweeping candidate multipliers that violate the KKT
conditions and pairing each with a randomly chosen partner; the pairwise
subproblem has a closed form. Probability-like scores squash the decision value
through the logistic function: monotone in the margin, so thresholding and ROC
behave, but not calibrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError
from ..rng import derive_rng


@dataclass
class SVCParams:
    C: float = 5.0
    kernel: str = "rbf"
    gamma: object = "scale"   # "scale" => 1 / (p * var(X)); or a positive float
    tol: float = 1e-3
    max_passes: int = 5       # consecutive no-change sweeps before declaring convergence
    max_sweeps: int = 500

    def __post_init__(self):
        if self.kernel != "rbf":
            raise TrainingError(f"unsupported kernel {self.kernel!r}")
        if self.C <= 0:
            raise TrainingError("C must be positive")


@dataclass
class SVCState:
    support_X: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for support vectors
    bias: float
    gamma: float


def _resolve_gamma(X, gamma):
    if gamma == "scale":
        var = float(X.var())
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0 / X.shape[1]
    g = float(gamma)
    if g <= 0:
        raise TrainingError("gamma must be positive")
    return g


def _rbf_columns(X, idx, gamma, sq):
    # kernel columns K[:, idx] computed on demand; K_ii = 1 for RBF
    d2 = sq[:, None] - 2.0 * (X @ X[idx].T) + sq[idx][None, :]
    return np.exp(-gamma * np.maximum(d2, 0.0))


def fit_svc(X, y01, params: SVCParams, seed: int):
    n = X.shape[0]
    y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
    gamma = _resolve_gamma(X, params.gamma)
    C, tol = params.C, params.tol
    rng = derive_rng(seed, "svc_smo")
    sq = (X * X).sum(1)
    # full Gram only when it is small; otherwise columns on demand
    gram = np.exp(-gamma * np.maximum(sq[:, None] - 2.0 * (X @ X.T) + sq[None, :], 0.0)) \
        if n <= 2048 else None

    def col(i):
        if gram is not None:
            return gram[:, i]
        return _rbf_columns(X, np.array([i]), gamma, sq).ravel()

    alphas = np.zeros(n)
    b = 0.0
    f = np.zeros(n)  # sum_j alpha_j y_j K(x_j, x_i), bias excluded
    passes = 0
    sweeps = 0
    while passes < params.max_passes and sweeps < params.max_sweeps:
        changed = 0
        for i in range(n):
            E_i = f[i] + b - y[i]
            if not ((y[i] * E_i < -tol and alphas[i] < C) or (y[i] * E_i > tol and alphas[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            E_j = f[j] + b - y[j]
            ai_old, aj_old = alphas[i], alphas[j]
            if y[i] != y[j]:
                L, H = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
            else:
                L, H = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
            if L >= H:
                continue
            Kij = col(i)[j]
            eta = 2.0 * Kij - 2.0  # K_ii = K_jj = 1 for RBF
            if eta >= 0:
                continue
            aj = aj_old - y[j] * (E_i - E_j) / eta
            aj = min(max(aj, L), H)
            if abs(aj - aj_old) < 1e-7:
                continue
            ai = ai_old + y[i] * y[j] * (aj_old - aj)
            d_i, d_j = ai - ai_old, aj - aj_old
            b1 = b - E_i - y[i] * d_i - y[j] * d_j * Kij
            b2 = b - E_j - y[i] * d_i * Kij - y[j] * d_j
            if 0 < ai < C:
                b = b1
            elif 0 < aj < C:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            f += y[i] * d_i * col(i) + y[j] * d_j * col(j)
            alphas[i], alphas[j] = ai, aj
            changed += 1
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0

    sv = alphas > 1e-12
    state = SVCState(X[sv].copy(), (alphas * y)[sv], float(b), gamma)
    meta = {"n_iter": sweeps, "n_support": int(sv.sum()),
            "final_loss": None}
    return state, meta


def decision_function(state: SVCState, X) -> np.ndarray:
    sq_sv = (state.support_X * state.support_X).sum(1)
    d2 = (X * X).sum(1)[:, None] - 2.0 * (X @ state.support_X.T) + sq_sv[None, :]
    K = np.exp(-state.gamma * np.maximum(d2, 0.0))
    return K @ state.dual_coef + state.bias


def predict_svc(state: SVCState, X) -> np.ndarray:
    from .linear import sigmoid

    return sigmoid(decision_function(state, X))
