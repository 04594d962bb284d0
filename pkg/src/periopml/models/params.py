"""Family-tagged hyperparameter sets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import ClassVar


def _check_count(name: str, v, minimum: int = 1) -> None:
    if v is None:
        return
    if int(v) != v or v < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {v!r}")


def _check_rate(name: str, v) -> None:
    if not v > 0:
        raise ValueError(f"{name} must be > 0, got {v!r}")


def _check_nonneg(name: str, v) -> None:
    if not v >= 0:
        raise ValueError(f"{name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class Hyperparams:
    family: ClassVar[str] = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.to_dict().items())


@dataclass(frozen=True)
class LogisticParams(Hyperparams):
    family: ClassVar[str] = "logistic"
    l2_lambda: float = 1e-3
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        _check_nonneg("l2_lambda", self.l2_lambda)
        _check_count("max_iter", self.max_iter)
        _check_rate("tol", self.tol)


@dataclass(frozen=True)
class NaiveBayesParams(Hyperparams):
    family: ClassVar[str] = "naive_bayes"
    laplace_alpha: float = 1.0
    var_floor: float = 1e-9

    def __post_init__(self):
        _check_rate("laplace_alpha", self.laplace_alpha)
        _check_rate("var_floor", self.var_floor)


@dataclass(frozen=True)
class TreeParams(Hyperparams):
    family: ClassVar[str] = "tree"
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        _check_count("max_depth", self.max_depth, 0)
        _check_count("min_samples_leaf", self.min_samples_leaf)


@dataclass(frozen=True)
class ForestParams(Hyperparams):
    family: ClassVar[str] = "random_forest"
    n_trees: int = 100
    max_depth: int | None = None
    features_per_split: int | None = None
    bootstrap: bool = True
    min_samples_leaf: int = 1

    def __post_init__(self):
        _check_count("n_trees", self.n_trees)
        _check_count("max_depth", self.max_depth, 0)
        _check_count("features_per_split", self.features_per_split)
        _check_count("min_samples_leaf", self.min_samples_leaf)


@dataclass(frozen=True)
class AdaBoostParams(Hyperparams):
    family: ClassVar[str] = "ada_boost"
    n_rounds: int = 50
    stump_depth: int = 1

    def __post_init__(self):
        _check_count("n_rounds", self.n_rounds)
        _check_count("stump_depth", self.stump_depth)


@dataclass(frozen=True)
class GradBoostParams(Hyperparams):
    family: ClassVar[str] = "grad_boost"
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    l2_lambda: float = 1.0
    gamma_min_gain: float = 0.0
    min_child_hessian: float = 1e-3

    def __post_init__(self):
        _check_count("n_rounds", self.n_rounds)
        _check_rate("learning_rate", self.learning_rate)
        _check_count("max_depth", self.max_depth, 0)
        _check_nonneg("l2_lambda", self.l2_lambda)
        _check_nonneg("gamma_min_gain", self.gamma_min_gain)
        _check_nonneg("min_child_hessian", self.min_child_hessian)


@dataclass(frozen=True)
class MLPParams(Hyperparams):
    family: ClassVar[str] = "mlp"
    hidden_width: int = 16
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    l2_lambda: float = 1e-4

    def __post_init__(self):
        _check_count("hidden_width", self.hidden_width)
        _check_rate("learning_rate", self.learning_rate)
        _check_count("epochs", self.epochs)
        _check_count("batch_size", self.batch_size)
        _check_nonneg("l2_lambda", self.l2_lambda)


PARAMS: dict[str, type[Hyperparams]] = {
    cls.family: cls
    for cls in (LogisticParams, NaiveBayesParams, TreeParams, ForestParams, AdaBoostParams, GradBoostParams, MLPParams)
}
FAMILIES = tuple(PARAMS)


def make_params(family: str, **kwargs) -> Hyperparams:
    try:
        cls = PARAMS[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; expected one of {list(PARAMS)}") from None
    return cls(**kwargs)
