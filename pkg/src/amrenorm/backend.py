"""Numeric backend selection.

All series and matrix arithmetic runs on a single floating dtype chosen
here.  The default is float64; runs that lose digits to the large unstable
multiplier of the six-step operator can switch to 80-bit extended
precision.  Orbit kernels (numba) always run in float64 and are unaffected.
"""

from __future__ import annotations

import numpy as np

_NAMES = {
    "double": np.float64,
    "extended": np.longdouble,
}

_default = np.float64


def set_precision(name: str) -> None:
    """Set the default dtype for newly constructed series ('double'/'extended')."""
    global _default
    try:
        _default = _NAMES[name]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}; choose from {sorted(_NAMES)}")


def default_dtype():
    return _default


def resolve_dtype(dtype=None):
    """Return an explicit numpy dtype, falling back to the session default."""
    if dtype is None:
        return _default
    if isinstance(dtype, str):
        return _NAMES[dtype]
    return np.dtype(dtype).type
