"""Optional numba acceleration.

Kernels are compiled with numba when it is importable, unless the
environment variable ``HEATSCATTER_DISABLE_NUMBA`` is set to a truthy
value, in which case the pure-numpy implementations are used.  The
choice can also be flipped at runtime with :func:`use_backend`, which
is what the benchmark and the backend-equivalence tests do.
"""

from __future__ import annotations

import contextlib
import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _have_numba()

if HAVE_NUMBA:
    from numba import njit
else:
    njit = _noop_jit

_DISABLED = os.environ.get("HEATSCATTER_DISABLE_NUMBA", "").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)

_backend = "numba" if (HAVE_NUMBA and not _DISABLED) else "numpy"


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
