"""Power oscillation damping controller: washout, low-pass, lead/lag stages, gain, clamp.

Realization (input is the converter frequency deviation in pu)::

    washout   y_w = u - x_w                 dx_w/dt = y_w / T_W
    low-pass  dx_f/dt = (y_w - x_f) / T_f
    lead/lag  y_k = r z_k + (1 - r) x_k     dx_k/dt = (z_k - x_k) / T_S2,  r = T_S1 / T_S2
    output    clamp(K * y_N, -limit, limit)

The output depends on states only, so the block adds no algebraic loop.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _layout as L
from ._kernels_py import pod_deriv, pod_output


@dataclass(frozen=True)
class PodParams:
    k: float = 200.0
    t_f: float = 0.1
    t_w: float = 5.0
    t_s1: float = 0.0
    t_s2: float = 0.0
    n_s: int = 2
    limit: float = 0.2

    def __post_init__(self):
        if self.t_f <= 0 or self.t_w <= 0:
            raise ValueError("T_f and T_W must be positive")
        if self.n_s < 1:
            raise ValueError("at least one lead/lag stage is required")
        if self.limit <= 0:
            raise ValueError("output limit must be positive")
        if self.compensated and (self.t_s1 <= 0 or self.t_s2 <= 0):
            raise ValueError("lead/lag time constants must both be positive, or both zero")

    @property
    def compensated(self) -> bool:
        return not (self.t_s1 == 0.0 and self.t_s2 == 0.0)

    @property
    def n_states(self) -> int:
        return 2 + self.n_s

    def leadlag_pair(self) -> tuple[float, float]:
        """Time constants as realized; the uncompensated case becomes an identity stage."""
        return (self.t_s1, self.t_s2) if self.compensated else (1.0, 1.0)

    def packed(self) -> np.ndarray:
        t1, t2 = self.leadlag_pair()
        return np.array([self.k, self.t_w, self.t_f, t1, t2, self.limit])

    def with_gain(self, k: float) -> "PodParams":
        return PodParams(k, self.t_f, self.t_w, self.t_s1, self.t_s2, self.n_s, self.limit)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PodParams":
        return cls(**d)


def pod_derivatives(state: np.ndarray, d_omega: float, params: PodParams) -> tuple[np.ndarray, float]:
    """Block state derivatives and saturated output for input ``d_omega``."""
    p = params.packed().tolist()
    x = list(map(float, state))
    dx = [0.0] * params.n_states
    pod_deriv(x, dx, 0, p, 0, params.n_s, float(d_omega))
    return np.array(dx), pod_output(x, 0, p, 0, params.n_s)


def state_space(params: PodParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, B, C) of the unsaturated block; the feed-through term is zero."""
    n = params.n_states
    t1, t2 = params.leadlag_pair()
    r = t1 / t2
    A = np.zeros((n, n))
    B = np.zeros(n)
    A[0, 0] = -1.0 / params.t_w
    B[0] = 1.0 / params.t_w
    A[1, 0] = -1.0 / params.t_f
    A[1, 1] = -1.0 / params.t_f
    B[1] = 1.0 / params.t_f
    # z_k (input of stage k) as a row vector over states
    z = np.zeros(n)
    z[1] = 1.0
    for k in range(params.n_s):
        i = 2 + k
        A[i] = z / t2
        A[i, i] -= 1.0 / t2
        z = r * z
        z[i] += 1.0 - r
    return A, B, params.k * z


def frequency_response(params: PodParams, omega: float | np.ndarray) -> complex | np.ndarray:
    """Unsaturated transfer function evaluated at ``j*omega`` (rad/s)."""
    s = 1j * np.asarray(omega, dtype=float)
    t1, t2 = params.leadlag_pair()
    g = (params.k * (params.t_w * s / (1.0 + params.t_w * s)) / (1.0 + params.t_f * s)
         * ((1.0 + t1 * s) / (1.0 + t2 * s)) ** params.n_s)
    return complex(g) if g.ndim == 0 else g


def state_names(params: PodParams) -> tuple[str, ...]:
    return L.pod_state_names(params.n_s)
