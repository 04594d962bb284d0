"""Backend selection for the tree kernels.

The compiled extension is used when it imports; otherwise, or when
``PERIOPML_PURE_PYTHON=1`` is set, the numpy fallback is used. Both expose
``find_best_splits``, ``partition``, ``apply_tree`` and ``tree_shap`` with identical
signatures.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module("periopml._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends() -> dict[str, ModuleType]:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return _active
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(available_backends())}") from None


if os.environ.get("PERIOPML_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    _active = _kernels_py
    BACKEND = "python"
else:
    _active = _compiled
    BACKEND = "compiled"

find_best_splits = _active.find_best_splits
partition = _active.partition
apply_tree = _active.apply_tree
tree_shap = _active.tree_shap
