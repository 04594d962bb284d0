"""Shared model plumbing: input checks, provenance, serialization."""

from __future__ import annotations

from typing import Any, ClassVar

import numpy as np
from scipy.special import expit

from ..ingest import SCALED, EncodedMatrix
from .params import Hyperparams

FORMAT = "periopml-model"
FORMAT_VERSION = 1

PROBABILITY = "probability"
LOG_ODDS = "log-odds"


class ProvenanceError(ValueError):
    """Columns presented at prediction time differ from the training columns."""


def as_matrix(X) -> tuple[np.ndarray, tuple[str, ...] | None, tuple[str, ...] | None]:
    """Return ``(array, column names, roles)``; names/roles are None for bare arrays."""
    if isinstance(X, EncodedMatrix):
        arr, names, roles = X.X, X.names, tuple(c.role for c in X.columns)
    else:
        arr, names, roles = X, None, None
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature matrix contains non-finite values")
    return arr, names, roles


def as_labels(y, n: int) -> np.ndarray:
    y = np.asarray(getattr(y, "y", y))
    if y.shape != (n,):
        raise ValueError(f"labels have shape {y.shape}, expected ({n},)")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return y.astype(np.float64)


def require_both_classes(y: np.ndarray, family: str) -> None:
    if y.size == 0 or y.min() == y.max():
        raise ValueError(f"{family} needs both classes in the training labels")


class TrainedModel:
    family: ClassVar[str] = ""
    output_space: ClassVar[str] = PROBABILITY

    def __init__(self, params: Hyperparams, columns: tuple[str, ...], roles: tuple[str, ...]):
        self.params = params
        self.columns = tuple(columns)
        self.roles = tuple(roles)
        self.fit_seconds = 0.0

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def _check(self, X) -> np.ndarray:
        arr, names, _ = as_matrix(X)
        if arr.shape[1] != self.n_features:
            raise ProvenanceError(f"model expects {self.n_features} columns, got {arr.shape[1]}")
        if names is not None and tuple(names) != self.columns:
            diff = [f"{a}!={b}" for a, b in zip(names, self.columns) if a != b][:5]
            raise ProvenanceError(f"column provenance mismatch: {', '.join(diff)}")
        return arr

    def decision(self, X) -> np.ndarray:
        """Model output in its native space (see ``output_space``)."""
        return self._decision(self._check(X))

    def predict_proba(self, X) -> np.ndarray:
        out = self._decision(self._check(X))
        return expit(out) if self.output_space == LOG_ODDS else out

    def _decision(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def complexity(self) -> int:
        """Count of learned scalars; a deterministic proxy for inference cost."""
        raise NotImplementedError

    def _state(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, params, columns, roles, state):
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "family": self.family,
            "params": self.params.to_dict(),
            "columns": list(self.columns),
            "roles": list(self.roles),
            "state": self._state(),
        }


def default_roles(p: int) -> tuple[str, ...]:
    return (SCALED,) * p
