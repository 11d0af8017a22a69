"""Grid-forming converter average model with droop control and POD channels.

RLC coupling filter (inductor current, capacitor voltage with series damping
resistor) feeding an internal step-up transformer.  Voltage and current PI
loops run in the converter's own rotating frame, whose angle integrates the
P-f droop frequency.  Both supplementary POD outputs enter the droop power
references.
"""
from __future__ import annotations

import cmath
from dataclasses import asdict, dataclass, replace

import numpy as np

from .. import _layout as L
from .._kernels_py import gf_core
from ..perunit import OMEGA_BASE
from ..pod import PodParams


class GforInitError(ValueError):
    """Operating point violates a converter current limit."""


@dataclass(frozen=True)
class GforParams:
    rating_mva: float = 1500.0
    rc: float = 0.005
    xc: float = 0.15
    bc: float = 0.15
    rtr: float = 0.002
    xtr: float = 0.15
    tau_cc: float = 1e-3
    iq_max: float = 1.1
    id_max: float = 1.1
    tau_vac: float = 0.05
    xi: float = 0.707
    tau_ff: float = 1e-4
    rf: float = 0.05
    rv: float = 0.067
    tau_p: float = 0.1
    tau_q: float = 0.1
    # "scaled" keeps the x100 factor on the voltage-loop proportional gain,
    # "textbook" uses 2*xi*omega_n*C_c
    kpv_rule: str = "scaled"
    # sign with which each POD output enters its droop reference; the P channel
    # is negated because a same-sign path through the P-f droop is a positive
    # feedback loop on the converter frequency with gain R_f * K >> 1
    pod_sign_p: float = -1.0
    pod_sign_q: float = 1.0

    def __post_init__(self):
        for name in ("rating_mva", "xc", "bc", "tau_cc", "tau_vac", "xi", "tau_ff",
                     "tau_p", "tau_q", "xtr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.rf < 1 and 0 < self.rv < 1):
            raise ValueError("droop gains must lie in (0, 1)")
        if self.iq_max < 1 or self.id_max < 1:
            raise ValueError("current limits must be at least 1 pu")
        if self.kpv_rule not in ("scaled", "textbook"):
            raise ValueError(f"unknown kpv_rule {self.kpv_rule!r}")

    def c_filter(self, wb: float = OMEGA_BASE) -> float:
        return self.bc / wb

    def r_cap(self) -> float:
        return 1.0 / (30.0 * self.bc)

    def omega_n(self) -> float:
        return 4.0 / (self.tau_vac * self.xi)

    def gains(self, wb: float = OMEGA_BASE) -> dict[str, float]:
        cc = self.c_filter(wb)
        wn = self.omega_n()
        scale = 100.0 if self.kpv_rule == "scaled" else 1.0
        return {
            "kp_cc": (self.xc / wb) / self.tau_cc,
            "ki_cc": self.rc / self.tau_cc,
            "kp_vac": 2.0 * self.xi * wn * cc * scale,
            "ki_vac": wn * wn * cc,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "GforParams":
        return replace(self, **kw)


def gfor_param_row(g: GforParams, s_ratio: float, p_star: float = 0.0, q_star: float = 0.0,
                   v_star: float = 1.0, pod_p: PodParams | None = None,
                   pod_q: PodParams | None = None, wb: float = OMEGA_BASE) -> np.ndarray:
    k = g.gains(wb)
    p = np.zeros(L.GF_NP)
    p[L.GF_RC], p[L.GF_XC], p[L.GF_BC], p[L.GF_RCAP] = g.rc, g.xc, g.bc, g.r_cap()
    p[L.GF_RTR], p[L.GF_XTR] = g.rtr, g.xtr
    p[L.GF_KPC], p[L.GF_KIC] = k["kp_cc"], k["ki_cc"]
    p[L.GF_KPV], p[L.GF_KIV] = k["kp_vac"], k["ki_vac"]
    p[L.GF_TFF], p[L.GF_IQMAX], p[L.GF_IDMAX] = g.tau_ff, g.iq_max, g.id_max
    p[L.GF_RF], p[L.GF_RV], p[L.GF_TP], p[L.GF_TQ] = g.rf, g.rv, g.tau_p, g.tau_q
    p[L.GF_PSTAR], p[L.GF_QSTAR], p[L.GF_VSTAR], p[L.GF_WSTAR] = p_star, q_star, v_star, 1.0
    p[L.GF_SRATIO], p[L.GF_PODSIGN], p[L.GF_PODSIGN_Q] = s_ratio, g.pod_sign_p, g.pod_sign_q
    for base, pod in ((L.GF_PODP, pod_p), (L.GF_PODQ, pod_q)):
        p[base:base + 6] = (pod or PodParams()).packed()
    return p


@dataclass
class GforOperatingPoint:
    state: np.ndarray  # converter states followed by POD-P then POD-Q states
    params_row: np.ndarray
    index_row: np.ndarray

    def named(self) -> dict[str, float]:
        return dict(zip(L.GF_STATES, self.state[:L.GF_NX].tolist()))


def gfor_init_from_powerflow(v_term: complex, s_term: complex, params: GforParams,
                             pod_p: PodParams | None = None, pod_q: PodParams | None = None,
                             s_ratio: float = 1.0, wb: float = OMEGA_BASE) -> GforOperatingPoint:
    """Steady state delivering ``s_term`` at bus voltage ``v_term`` (device base).

    POD states start at zero (their steady state).  Raises
    :class:`GforInitError` naming the binding current limit.
    """
    g = params
    k = g.gains(wb)
    v = complex(v_term)
    ig = (complex(s_term) / v).conjugate()
    u = v + complex(g.rtr, g.xtr) * ig
    uc = u / (1.0 + 1j * g.bc * g.r_cap())
    i_s = ig + 1j * g.bc * uc
    theta = cmath.phase(u)
    rot = cmath.exp(-1j * theta)
    u_l, ig_l, is_l = u * rot, ig * rot, i_s * rot
    if abs(is_l.real) > g.iq_max:
        raise GforInitError(f"q-axis current {is_l.real:.4g} pu exceeds iq_max = {g.iq_max}")
    if abs(is_l.imag) > g.id_max:
        raise GforInitError(f"d-axis current {is_l.imag:.4g} pu exceeds id_max = {g.id_max}")
    s_meas = u * ig.conjugate()
    xi_v = (is_l - ig_l - 1j * g.bc * u_l) / k["ki_vac"]
    xi_i = g.rc * is_l / k["ki_cc"]
    x = [i_s.real, i_s.imag, uc.real, uc.imag, ig.real, ig.imag,
         xi_i.real, xi_i.imag, xi_v.real, xi_v.imag,
         ig_l.real, ig_l.imag, u_l.real, u_l.imag,
         s_meas.real, s_meas.imag, theta]
    n_p = pod_p.n_states if pod_p else 0
    n_q = pod_q.n_states if pod_q else 0
    x += [0.0] * (n_p + n_q)
    row = gfor_param_row(g, s_ratio, s_meas.real, s_meas.imag, abs(u_l), pod_p, pod_q, wb)
    gi = np.array([0, 0,
                   L.GF_NX if pod_p else -1,
                   L.GF_NX + n_p if pod_q else -1,
                   pod_p.n_s if pod_p else 0,
                   pod_q.n_s if pod_q else 0], dtype=np.intc)
    return GforOperatingPoint(state=np.array(x), params_row=row, index_row=gi)


def gfor_derivatives(state: np.ndarray, v_term: complex, params_row: np.ndarray,
                     index_row: np.ndarray, wb: float = OMEGA_BASE) -> tuple[np.ndarray, complex]:
    """Derivatives (converter plus attached POD states) and injected current.

    ``state`` is laid out with offset 0 as in :class:`GforOperatingPoint`.
    """
    gi = [int(v) for v in index_row]
    gi[L.GI_OFF] = 0
    dx = [0.0] * len(state)
    cur = gf_core(list(map(float, state)), dx, 0, params_row.tolist(), gi, complex(v_term), wb)
    return np.array(dx), cur


def gfor_outputs(state: np.ndarray, v_term: complex, params_row: np.ndarray,
                 index_row: np.ndarray, wb: float = OMEGA_BASE) -> dict[str, float]:
    gi = [int(v) for v in index_row]
    gi[L.GI_OFF] = 0
    out = [0.0] * L.GF_NOUT
    gf_core(list(map(float, state)), None, 0, params_row.tolist(), gi, complex(v_term), wb, out)
    return dict(zip(L.GF_OUTPUTS, out))


def droop_frequency(params: GforParams, p_star: float, p_filt: float, dp_pod: float = 0.0) -> float:
    return 1.0 + params.rf * (p_star + params.pod_sign_p * dp_pod - p_filt)

