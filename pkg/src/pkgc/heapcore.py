"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``PKGC_PURE_PYTHON=1`` to force the fallback (used by the kernel
benchmark to time both implementations in one process).
"""

from __future__ import annotations

import os

from . import _heapcore_py


def load_implementation(name: str):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name == "python":
        return _heapcore_py
    if name == "compiled":
        from . import _heapcore  # noqa: F401  (ImportError surfaces to caller)

        return _heapcore
    raise ValueError(f"unknown kernel implementation {name!r}")


def available_implementations() -> list[str]:
    names = ["python"]
    try:
        load_implementation("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


if os.environ.get("PKGC_PURE_PYTHON"):
    _impl = _heapcore_py
else:
    try:
        from . import _heapcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _heapcore_py

TopKHeap = _impl.TopKHeap
PackedSet = _impl.PackedSet
IMPLEMENTATION = _impl.IMPLEMENTATION
