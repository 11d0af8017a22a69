from __future__ import annotations

from typing import Callable

import numpy as np


def perturbation_sizes(x: np.ndarray, rel: float, floor: float) -> np.ndarray:
    """Step per coordinate: ``rel`` times the state magnitude, but never below
    ``rel`` (states are per unit, so 1 is their natural scale) nor ``floor``."""
    return np.maximum(rel * np.maximum(np.abs(x), 1.0), floor)


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     rel: float = 1e-6, floor: float = 1e-9) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = perturbation_sizes(x, rel, floor)
    n = x.size
    f0 = f(x)
    J = np.empty((f0.size, n))
    xp = x.copy()
    for j in range(n):
        xp[j] = x[j] + h[j]
        fp = f(xp)
        xp[j] = x[j] - h[j]
        fm = f(xp)
        xp[j] = x[j]
        J[:, j] = (fp - fm) / (2.0 * h[j])
    return J
