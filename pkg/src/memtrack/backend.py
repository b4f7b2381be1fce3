"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; otherwise
the numpy implementations in ``_pykernels`` are used. Set ``MEMTRACK_PURE=1``
to force the pure-Python path.
"""
import os

from . import _pykernels

python_kernels = _pykernels
compiled_kernels = None

if os.environ.get("MEMTRACK_PURE") != "1":
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels


def available():
    """Names of the kernel sets importable in this environment."""
    names = ["python"]
    if compiled_kernels is not None:
        names.append("compiled")
    return names


def use(name):
    """Switch the active kernel set by name; returns the previous name."""
    global kernels
    previous = kernels.NAME
    if name == "python":
        kernels = python_kernels
    elif name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not built")
        kernels = compiled_kernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous
