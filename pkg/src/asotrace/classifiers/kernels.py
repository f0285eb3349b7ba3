"""Select the tree-kernel backend at import.

The compiled extension is used when it was built; setting
``ASOTRACE_PURE_PYTHON=1`` forces the numpy fallback. Both backends produce
identical trees.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

PURE_ENV = "ASOTRACE_PURE_PYTHON"


def load_backend(name: str) -> ModuleType:
    """``"cython"`` or ``"python"``; raises ImportError if the extension is missing."""
    if name == "cython":
        return importlib.import_module("asotrace.classifiers._kernels")
    if name == "python":
        return importlib.import_module("asotrace.classifiers._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    out = ["python"]
    try:
        load_backend("cython")
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


BACKEND = "python" if os.environ.get(PURE_ENV) == "1" else available_backends()[0]
_impl = load_backend(BACKEND)
build_tree = _impl.build_tree
predict_forest = _impl.predict_forest
