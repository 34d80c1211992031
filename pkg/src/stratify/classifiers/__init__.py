"""Seven classifier families behind one train/score contract.

``fit(algorithm, X, y, params, seed)`` returns a TrainedModel whose
``predict_scores`` output always lies in [0, 1]; ``predict_labels`` applies the
strict ``score > threshold`` rule. Models serialize to a versioned JSON
document that round-trips bit-exactly (JSON floats carry Python's shortest
repr, which reconstructs the same float64).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError
from . import boosting, linear, neighbors, neural, svm, trees
from .boosting import GBTParams, GBTState, gbt_margin, leaf_weight, split_gain
from .linear import LRParams, LRState, lr_loss_grad, sigmoid
from .neighbors import KNNParams, KNNState
from .neural import MLPParams, MLPState, mlp_loss_grad
from .svm import SVCParams, SVCState, decision_function
from .trees import (DTParams, DTState, RFParams, RFState, TreeNode, best_split,
                    build_cart, gini_impurity, tree_predict)

MODEL_FORMAT_VERSION = 1

ALGORITHMS = ("LR", "DT", "RF", "KNN", "MLP", "SVC", "GBT")

# algorithms whose objective needs both classes to be trainable at all
_NEEDS_BOTH_CLASSES = frozenset({"LR", "MLP", "SVC", "GBT"})

_PARAM_TYPES = {
    "LR": LRParams, "DT": DTParams, "RF": RFParams, "KNN": KNNParams,
    "MLP": MLPParams, "SVC": SVCParams, "GBT": GBTParams,
}


@dataclass
class TrainedModel:
    algorithm: str
    hyperparams: dict
    seed: int
    state: object
    meta: dict

    @property
    def n_features(self) -> int:
        s = self.state
        if isinstance(s, LRState):
            return len(s.weights)
        if isinstance(s, (DTState, RFState, GBTState)):
            return s.n_features
        if isinstance(s, KNNState):
            return s.X.shape[1]
        if isinstance(s, MLPState):
            return s.W1.shape[0]
        if isinstance(s, SVCState):
            return s.support_X.shape[1]
        raise TrainingError("unknown model state")


def resolve_params(algorithm: str, params=None, **overrides):
    """Build the algorithm's parameter dataclass from a dict/dataclass/overrides."""
    if algorithm not in ALGORITHMS:
        raise TrainingError(f"unknown algorithm {algorithm!r}; supported: {ALGORITHMS}")
    cls = _PARAM_TYPES[algorithm]
    if params is None:
        return cls(**overrides)
    if isinstance(params, cls):
        return dataclasses.replace(params, **overrides) if overrides else params
    if isinstance(params, dict):
        merged = {**params, **overrides}
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(merged) - known
        if bad:
            raise TrainingError(f"unknown {algorithm} hyperparameters: {sorted(bad)}")
        return cls(**merged)
    raise TrainingError(f"cannot interpret params {params!r}")


def _validate_training_input(algorithm, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise TrainingError("X must be 2-D and aligned with y")
    if X.shape[0] < 1:
        raise TrainingError("empty training set")
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite feature values")
    if not np.isin(y, (0, 1)).all():
        raise TrainingError("labels must be binary 0/1")
    y = y.astype(np.float64)
    if algorithm in _NEEDS_BOTH_CLASSES and (y.min() == y.max()):
        raise TrainingError(f"{algorithm} requires both classes in the training data")
    return X, y


def fit(algorithm: str, X, y, params=None, seed: int = 0, **overrides) -> TrainedModel:
    p = resolve_params(algorithm, params, **overrides)
    X, y = _validate_training_input(algorithm, X, y)
    meta: dict = {}
    if algorithm == "LR":
        state, meta = linear.fit_lr(X, y, p, seed)
    elif algorithm == "DT":
        state = trees.fit_dt(X, y, p, seed)
    elif algorithm == "RF":
        state = trees.fit_rf(X, y, p, seed)
    elif algorithm == "KNN":
        state = neighbors.fit_knn(X, y, p, seed)
    elif algorithm == "MLP":
        state, meta = neural.fit_mlp(X, y, p, seed)
    elif algorithm == "SVC":
        state, meta = svm.fit_svc(X, y, p, seed)
    else:
        state, meta = boosting.fit_gbt(X, y, p, seed)
    return TrainedModel(algorithm, dataclasses.asdict(p), seed, state, meta)


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise TrainingError(
            f"feature dimension {X.shape[1] if X.ndim == 2 else '?'} does not match "
            f"the {model.n_features} the model was trained on")
    if model.algorithm == "LR":
        scores = linear.predict_lr(model.state, X)
    elif model.algorithm == "DT":
        scores = trees.predict_dt(model.state, X)
    elif model.algorithm == "RF":
        scores = trees.predict_rf(model.state, X)
    elif model.algorithm == "KNN":
        scores = neighbors.predict_knn(model.state, X)
    elif model.algorithm == "MLP":
        scores = neural.predict_mlp(model.state, X)
    elif model.algorithm == "SVC":
        scores = svm.predict_svc(model.state, X)
    else:
        scores = boosting.predict_gbt(model.state, X)
    return np.clip(scores, 0.0, 1.0)


def predict_labels(scores, threshold: float = 0.5) -> np.ndarray:
    """Label 1 iff score is strictly above the threshold."""
    scores = np.asarray(scores)
    if scores.size and (scores.min() < 0 or scores.max() > 1):
        raise TrainingError("scores must lie in [0, 1]")
    return (scores > threshold).astype(np.int64)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _arr(a):
    return np.asarray(a).tolist()


def _state_to_dict(model: TrainedModel) -> dict:
    s = model.state
    if isinstance(s, LRState):
        return {"weights": _arr(s.weights), "bias": s.bias}
    if isinstance(s, DTState):
        return {"tree": s.tree.to_dict(), "n_features": s.n_features}
    if isinstance(s, RFState):
        return {"forest": [t.to_dict() for t in s.forest], "n_features": s.n_features}
    if isinstance(s, KNNState):
        return {"X": _arr(s.X), "y": _arr(s.y), "k": s.k}
    if isinstance(s, MLPState):
        return {"W1": _arr(s.W1), "b1": _arr(s.b1), "W2": _arr(s.W2), "b2": s.b2}
    if isinstance(s, SVCState):
        return {"support_X": _arr(s.support_X), "dual_coef": _arr(s.dual_coef),
                "bias": s.bias, "gamma": s.gamma}
    if isinstance(s, GBTState):
        return {"forest": [t.to_dict() for t in s.forest],
                "base_margin": s.base_margin, "n_features": s.n_features}
    raise TrainingError("unknown model state")


def _state_from_dict(algorithm: str, d: dict):
    if algorithm == "LR":
        return LRState(np.array(d["weights"], dtype=np.float64), float(d["bias"]))
    if algorithm == "DT":
        return DTState(TreeNode.from_dict(d["tree"]), int(d["n_features"]))
    if algorithm == "RF":
        return RFState([TreeNode.from_dict(t) for t in d["forest"]], int(d["n_features"]))
    if algorithm == "KNN":
        return KNNState(np.array(d["X"], dtype=np.float64),
                        np.array(d["y"], dtype=np.float64), int(d["k"]))
    if algorithm == "MLP":
        return MLPState(np.array(d["W1"], dtype=np.float64), np.array(d["b1"], dtype=np.float64),
                        np.array(d["W2"], dtype=np.float64), float(d["b2"]))
    if algorithm == "SVC":
        return SVCState(np.array(d["support_X"], dtype=np.float64),
                        np.array(d["dual_coef"], dtype=np.float64),
                        float(d["bias"]), float(d["gamma"]))
    if algorithm == "GBT":
        return GBTState([TreeNode.from_dict(t) for t in d["forest"]],
                        float(d["base_margin"]), int(d["n_features"]))
    raise TrainingError(f"unknown algorithm {algorithm!r}")


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "algorithm": model.algorithm,
        "hyperparams": model.hyperparams,
        "seed": model.seed,
        "state": _state_to_dict(model),
        "meta": {k: v for k, v in model.meta.items() if k != "loss_curve"},
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise TrainingError(f"unsupported model format {d.get('format_version')!r}")
    algorithm = d["algorithm"]
    return TrainedModel(algorithm, d["hyperparams"], d["seed"],
                        _state_from_dict(algorithm, d["state"]), dict(d["meta"]))


def save_model(path, model: TrainedModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
