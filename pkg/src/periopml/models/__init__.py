"""Seven binary classifier families behind one ``fit`` / ``predict_proba`` interface."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .base import LOG_ODDS, PROBABILITY, ProvenanceError, TrainedModel, as_labels, as_matrix, default_roles, require_both_classes
from .linear import (
    LogisticModel,
    MLPModel,
    NaiveBayesModel,
    fit_logistic,
    fit_mlp,
    fit_naive_bayes,
    logistic_gradient,
    logistic_loss,
    mlp_init,
    mlp_loss_grad,
)
from .params import (
    FAMILIES,
    AdaBoostParams,
    ForestParams,
    GradBoostParams,
    Hyperparams,
    LogisticParams,
    MLPParams,
    NaiveBayesParams,
    TreeParams,
    make_params,
)
from .trees import AdaBoostModel, ForestModel, GradBoostModel, Tree, TreeModel, grow_tree, presort
from . import base as _base

MODEL_CLASSES: dict[str, type[TrainedModel]] = {
    c.family: c
    for c in (LogisticModel, NaiveBayesModel, TreeModel, ForestModel, AdaBoostModel, GradBoostModel, MLPModel)
}

# simpler families first; used to break performance ties
INTERPRETABILITY_RANK = {
    "logistic": 0, "naive_bayes": 1, "tree": 2,
    "random_forest": 3, "ada_boost": 3, "grad_boost": 3, "mlp": 4,
}


def fit(family: str, X, y, hp: Hyperparams | None = None, seed: int = 0, backend=None) -> TrainedModel:
    """Train one model. ``X`` is an :class:`EncodedMatrix` or a 2-D array."""
    from .trees import fit_ada_boost, fit_forest, fit_grad_boost, fit_tree

    hp = hp if hp is not None else make_params(family)
    if hp.family != family:
        raise ValueError(f"hyperparameters for {hp.family!r} passed to {family!r}")
    arr, names, roles = as_matrix(X)
    n, p = arr.shape
    if n == 0 or p == 0:
        raise ValueError(f"cannot fit on an empty matrix of shape {arr.shape}")
    yy = as_labels(y, n)
    names = names or tuple(f"x{j}" for j in range(p))
    roles = roles or default_roles(p)
    if family != "naive_bayes":
        require_both_classes(yy, family)
    t0 = time.perf_counter()
    if family == "logistic":
        m = fit_logistic(arr, yy, hp, names, roles)
    elif family == "naive_bayes":
        m = fit_naive_bayes(arr, yy, hp, names, roles)
    elif family == "tree":
        m = fit_tree(arr, yy, hp, names, roles, backend)
    elif family == "random_forest":
        m = fit_forest(arr, yy, hp, names, roles, seed, backend)
    elif family == "ada_boost":
        m = fit_ada_boost(arr, yy, hp, names, roles, backend)
    elif family == "grad_boost":
        m = fit_grad_boost(arr, yy, hp, names, roles, backend)
    else:
        m = fit_mlp(arr, yy, hp, names, roles, seed)
    m.fit_seconds = time.perf_counter() - t0
    return m


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    return model.predict_proba(X)


def loss_gradient_check(family: str, X, y, hp: Hyperparams | None = None, eps: float = 1e-6, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients
    at a random parameter point. Defined for the differentiable families."""
    hp = hp if hp is not None else make_params(family)
    arr, _, _ = as_matrix(X)
    if arr.shape[0] == 0:
        raise ValueError("gradient check needs at least one row")
    yy = as_labels(y, arr.shape[0])
    rng = np.random.default_rng(seed)
    if family == "logistic":
        theta = rng.normal(0.0, 0.5, arr.shape[1] + 1)
        f = lambda t: logistic_loss(t, arr, yy, hp.l2_lambda)  # noqa: E731
        grad = logistic_gradient(theta, arr, yy, hp.l2_lambda)
    elif family == "mlp":
        theta = mlp_init(arr.shape[1], hp.hidden_width, rng) + rng.normal(0.0, 0.1, arr.shape[1] * hp.hidden_width + 2 * hp.hidden_width + 1)
        f = lambda t: mlp_loss_grad(t, arr, yy, hp.l2_lambda, hp.hidden_width)[0]  # noqa: E731
        grad = mlp_loss_grad(theta, arr, yy, hp.l2_lambda, hp.hidden_width)[1]
    else:
        raise ValueError(f"{family!r} has no differentiable training loss")
    num = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = eps
        num[j] = (f(theta + e) - f(theta - e)) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(num)), 1e-7)
    return float(np.max(np.abs(grad - num) / denom))


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != _base.FORMAT:
        raise ValueError("not a serialized model")
    if d.get("version") != _base.FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    family = d["family"]
    params = make_params(family, **d["params"])
    return MODEL_CLASSES[family]._from_state(params, tuple(d["columns"]), tuple(d["roles"]), d["state"])


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "FAMILIES", "INTERPRETABILITY_RANK", "LOG_ODDS", "PROBABILITY", "ProvenanceError", "TrainedModel",
    "fit", "predict_proba", "loss_gradient_check", "model_from_dict", "save_model", "load_model", "make_params",
    "Hyperparams", "LogisticParams", "NaiveBayesParams", "TreeParams", "ForestParams", "AdaBoostParams",
    "GradBoostParams", "MLPParams", "Tree", "grow_tree", "presort",
    "LogisticModel", "NaiveBayesModel", "TreeModel", "ForestModel", "AdaBoostModel", "GradBoostModel", "MLPModel",
]
