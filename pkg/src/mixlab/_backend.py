"""Selects the compiled kernels when available, the numpy fallback otherwise.

``MIXLAB_BACKEND=python`` forces the fallback at import time.
"""
from __future__ import annotations

import os

from . import _fallback
from .errors import ConfigError

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

_BACKENDS = {"python": _fallback}
if _kernels is not None:
    _BACKENDS["cython"] = _kernels

if os.environ.get("MIXLAB_BACKEND", "").lower() == "python" or _kernels is None:
    DEFAULT = "python"
else:
    DEFAULT = "cython"


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); None means the default."""
    name = DEFAULT if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigError(f"backend {name!r} is not available (have {available()})") from None
