"""Split-search kernels.

The compiled Cython kernel is used when it was built; otherwise the numpy
implementation is selected. Setting ``FUNDCAT_PURE_PYTHON=1`` forces the
fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _splitter_py

try:
    from . import _splitter as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends() -> list[str]:
    return (["cython"] if _compiled is not None else []) + ["python"]


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _splitter_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel is not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


if _compiled is not None and not os.environ.get("FUNDCAT_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

kernel = get_backend(BACKEND)
best_split = kernel.best_split
node_impurity = kernel.node_impurity
