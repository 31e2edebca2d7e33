"""SGD kernel backends.

The hot loop (per-batch forward/backward/update) exists twice: a Cython
extension (``_fast``) and a vectorized NumPy fallback (``_py``) with
identical semantics. The compiled one is picked when importable; set
``ASPECTMF_KERNEL=python`` or ``=c`` to force a choice.
"""

from __future__ import annotations

import os

__all__ = ["NonFiniteGradient", "get_backend", "default_backend", "available_backends"]


class NonFiniteGradient(RuntimeError):
    """A NaN/Inf gradient was produced; carries the parameter group name."""

    def __init__(self, param: str):
        super().__init__(f"non-finite gradient in parameter group {param!r}")
        self.param = param


def _import_fast():
    from . import _fast

    return _fast


def _import_py():
    from . import _py

    return _py


def available_backends() -> tuple:
    names = []
    try:
        _import_fast()
        names.append("c")
    except ImportError:
        pass
    names.append("python")
    return tuple(names)


def get_backend(name: str = "auto"):
    """Return (backend_name, module) for the requested kernel."""
    choice = (name or "auto").strip().lower()
    if choice == "auto":
        choice = os.environ.get("ASPECTMF_KERNEL", "auto").strip().lower() or "auto"
    if choice == "auto":
        try:
            return "c", _import_fast()
        except ImportError:
            return "python", _import_py()
    if choice in ("c", "fast", "cython"):
        return "c", _import_fast()
    if choice in ("python", "py", "numpy"):
        return "python", _import_py()
    raise ValueError(f"unknown kernel backend {name!r}")


def default_backend() -> str:
    return get_backend("auto")[0]
