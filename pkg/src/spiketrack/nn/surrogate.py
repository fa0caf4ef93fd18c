"""Surrogate derivatives for the integer spike rounding.

The integer forward clip(round(m / theta), 0, t_max) is flat almost
everywhere, so backward always substitutes one of these smooth stand-ins.
Closed forms are exposed for the scalar-sweep consistency tests.
"""

from __future__ import annotations

import numpy as np

WINDOW = "window"
ARCTAN = "arctan"

SURROGATES = (WINDOW, ARCTAN)


def window_derivative(m: np.ndarray, threshold: float, t_max: int) -> np.ndarray:
    """Straight-through window: 1/theta on [0, theta * t_max], 0 outside.

    This is the exact derivative of the piecewise-linear relaxation
    clip(m / theta, 0, t_max) away from the two corners.
    """
    m = np.asarray(m, dtype=np.float64)
    inside = (m >= 0.0) & (m <= threshold * t_max)
    return inside * (1.0 / threshold)


def arctan_derivative(
    m: np.ndarray, threshold: float, t_max: int, width: float
) -> np.ndarray:
    """Scaled arctan bump centred on the nearest spike-count plateau."""
    m = np.asarray(m, dtype=np.float64)
    k_nearest = np.clip(np.floor(m / threshold + 0.5), 0.0, float(t_max))
    u = np.pi * width * (m - threshold * k_nearest)
    return 1.0 / (1.0 + u * u)


def surrogate_derivative(
    name: str, m: np.ndarray, threshold: float, t_max: int, width: float
) -> np.ndarray:
    if name == WINDOW:
        return window_derivative(m, threshold, t_max)
    if name == ARCTAN:
        return arctan_derivative(m, threshold, t_max, width)
    raise ValueError(f"unknown surrogate {name!r}; choose one of {SURROGATES}")
