"""Cutoff functions: the clamp T_k, its complement G_k, the plateau-ramp Z_delta
and the window S_{k,n}.

All functions accept scalars or numpy arrays and are applied elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WindowLevels:
    """Pair of truncation heights with ``n > k > 0``."""

    k: float
    n: float

    def __post_init__(self):
        if not (np.isfinite(self.k) and np.isfinite(self.n)):
            raise ValueError("window levels must be finite")
        if not (self.n > self.k > 0):
            raise ValueError(f"window levels need n > k > 0, got k={self.k}, n={self.n}")


def _check_level(k):
    k = np.asarray(k, dtype=float)
    if not np.all(np.isfinite(k) & (k > 0)):
        raise ValueError(f"truncation level must be a positive finite real, got {k}")


def _as_finite(s, name="s"):
    a = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _nonneg(s):
    a = _as_finite(s)
    if np.any(a < 0):
        raise ValueError("argument must be nonnegative")
    return a


def _out(a, s):
    return float(a) if np.ndim(s) == 0 else a


def t_cut(s, k):
    """T_k(s) = max(-k, min(s, k))."""
    _check_level(k)
    a = _as_finite(s)
    return _out(np.clip(a, -k, k), s)


def g_cut(s, k):
    """G_k(s) = s - T_k(s), the correctly rounded difference.

    ``t_cut + g_cut`` reproduces ``s`` exactly whenever the difference is
    representable, in particular whenever |s| <= 2k.
    """
    _check_level(k)
    a = _as_finite(s)
    return _out(a - np.clip(a, -k, k), s)


def z_delta(s, delta):
    """Plateau-ramp cutoff: 1 on [0, delta], 2 - s/delta on [delta, 2 delta], 0 beyond."""
    _check_level(delta)
    a = _nonneg(s)
    return _out(np.clip(2.0 - a / delta, 0.0, 1.0), s)


def s_window(s, levels: WindowLevels | tuple):
    """S_{k,n}(s): 0 below k, s - k on [k, n], n - k above n.

    ``levels`` is a ``WindowLevels`` or a ``(k, n)`` pair, possibly of arrays
    broadcasting against ``s``.
    """
    if isinstance(levels, WindowLevels):
        k, n = levels.k, levels.n
    else:
        k, n = (np.asarray(v, dtype=float) for v in levels)
        _check_level(k)
        if not np.all(np.isfinite(n) & (n > k)):
            raise ValueError("window levels need n > k > 0")
    a = _nonneg(s)
    return _out(np.clip(a, k, n) - k, s)
