"""Synchronous generator: sixth-order machine, AC4A exciter, IEEEG1 governor.

The step-up transformer is folded into the stator (its resistance and
leakage add to the armature ones), so the machine connects straight to the
high-voltage bus.  Standard-to-fundamental parameter conversion uses the
classical open-circuit time-constant approximations.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import _layout as L
from .._kernels_py import sg_core
from ..perunit import OMEGA_BASE


class SgInitError(ValueError):
    """The requested operating point cannot be reached by the machine."""


@dataclass(frozen=True)
class SgParams:
    """Machine data on its own rating."""

    rating_mva: float = 1500.0
    rs: float = 0.0025
    xl: float = 0.2
    xd: float = 1.8
    xd_prime: float = 0.3
    xd_dprime: float = 0.25
    xq: float = 1.7
    xq_prime: float = 0.55
    xq_dprime: float = 0.25
    td0_prime: float = 8.0
    td0_dprime: float = 0.03
    tq0_prime: float = 0.4
    tq0_dprime: float = 0.05
    rtr: float = 0.002
    xtr: float = 0.15
    h: float = 4.0
    d: float = 0.0
    r_snubber: float | None = None  # terminal shunt resistance; None = off

    def __post_init__(self):
        if not (self.xd >= self.xd_prime >= self.xd_dprime > self.xl >= 0):
            raise ValueError("d-axis reactances must satisfy Xd >= X'd >= X''d > Xl >= 0")
        if not (self.xq >= self.xq_prime >= self.xq_dprime > self.xl):
            raise ValueError("q-axis reactances must satisfy Xq >= X'q >= X''q > Xl")
        for name in ("td0_prime", "td0_dprime", "tq0_prime", "tq0_dprime", "h", "rating_mva"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.r_snubber is not None and self.r_snubber <= 0:
            raise ValueError("r_snubber must be positive when given")


@dataclass(frozen=True)
class Ac4aParams:
    ka: float = 200.0
    ta: float = 0.015
    tb: float = 10.0
    tc: float = 1.0
    efd_min: float = -10.0
    efd_max: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        if self.ka <= 0 or self.ta <= 0 or self.tb <= 0:
            raise ValueError("AC4A needs K_A, T_A, T_B > 0")
        if self.efd_min >= self.efd_max:
            raise ValueError("AC4A limits inverted")


@dataclass(frozen=True)
class Ieeeg1Params:
    r: float = 0.05
    t1: float = 0.0
    t2: float = 0.0
    t3: float = 0.1
    t4: float = 0.3
    t5: float = 7.0
    t6: float = 0.6
    t7: float = 0.0
    k: tuple[float, ...] = (0.3, 0.4, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0)
    enabled: bool = True

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("governor droop R must be positive")
        if len(self.k) != 8:
            raise ValueError("IEEEG1 needs eight stage fractions K1..K8")
        if self.t1 != 0.0 or self.t2 != 0.0 or self.t7 != 0.0:
            raise ValueError("only T1 = T2 = T7 = 0 is supported")
        if min(self.t3, self.t4, self.t5, self.t6) <= 0:
            raise ValueError("T3..T6 must be positive")

    @property
    def stage_weights(self) -> tuple[float, float, float]:
        """Weights of the three turbine stage outputs (T7 = 0 merges stage 4 into 3)."""
        k = self.k
        return k[0] + k[1], k[2] + k[3], k[4] + k[5] + k[6] + k[7]


@dataclass(frozen=True)
class FundamentalParams:
    ra: float
    ll: float
    lad: float
    laq: float
    lfd: float
    l1d: float
    l1q: float
    l2q: float
    rfd: float
    r1d: float
    r1q: float
    r2q: float
    d_inv: np.ndarray = field(repr=False)
    q_inv: np.ndarray = field(repr=False)


def fundamental_parameters(m: SgParams, wb: float = OMEGA_BASE) -> FundamentalParams:
    """Equivalent-circuit inductances and resistances, transformer merged."""
    lad = m.xd - m.xl
    laq = m.xq - m.xl
    dp = m.xd_prime - m.xl
    lfd = lad * dp / (lad - dp)
    dpp = m.xd_dprime - m.xl
    l1d = dpp * lad * lfd / (lad * lfd - dpp * (lad + lfd))
    qp = m.xq_prime - m.xl
    l1q = laq * qp / (laq - qp)
    qpp = m.xq_dprime - m.xl
    l2q = qpp * laq * l1q / (laq * l1q - qpp * (laq + l1q))
    if min(lfd, l1d, l1q, l2q) <= 0:
        raise ValueError("reactance set yields non-positive rotor leakage")
    rfd = (lad + lfd) / (wb * m.td0_prime)
    r1d = (l1d + lad * lfd / (lad + lfd)) / (wb * m.td0_dprime)
    r1q = (laq + l1q) / (wb * m.tq0_prime)
    r2q = (l2q + laq * l1q / (laq + l1q)) / (wb * m.tq0_dprime)
    ll = m.xl + m.xtr
    md = np.array([[lad + ll, lad, lad], [lad, lad + lfd, lad], [lad, lad, lad + l1d]])
    mq = np.array([[laq + ll, laq, laq], [laq, laq + l1q, laq], [laq, laq, laq + l2q]])
    return FundamentalParams(
        ra=m.rs + m.rtr, ll=ll, lad=lad, laq=laq, lfd=lfd, l1d=l1d, l1q=l1q, l2q=l2q,
        rfd=rfd, r1d=r1d, r1q=r1q, r2q=r2q,
        d_inv=np.linalg.inv(md), q_inv=np.linalg.inv(mq),
    )


def sg_param_row(m: SgParams, exc: Ac4aParams, gov: Ieeeg1Params, s_ratio: float,
                 v_ref: float = 1.0, p_ref: float = 0.0, wb: float = OMEGA_BASE) -> np.ndarray:
    """Packed kernel parameter row (see ``_layout``)."""
    fp = fundamental_parameters(m, wb)
    p = np.zeros(L.SG_NP)
    p[L.SG_RA], p[L.SG_LL], p[L.SG_LAD], p[L.SG_LAQ] = fp.ra, fp.ll, fp.lad, fp.laq
    p[L.SG_RFD], p[L.SG_R1D], p[L.SG_R1Q], p[L.SG_R2Q] = fp.rfd, fp.r1d, fp.r1q, fp.r2q
    p[L.SG_H], p[L.SG_D] = m.h, m.d
    p[L.SG_RTR], p[L.SG_XTR] = m.rtr, m.xtr
    p[L.SG_KA], p[L.SG_TA], p[L.SG_TB], p[L.SG_TC] = exc.ka, exc.ta, exc.tb, exc.tc
    p[L.SG_EMIN], p[L.SG_EMAX], p[L.SG_VREF] = exc.efd_min, exc.efd_max, v_ref
    p[L.SG_R], p[L.SG_T3], p[L.SG_T4], p[L.SG_T5], p[L.SG_T6] = gov.r, gov.t3, gov.t4, gov.t5, gov.t6
    p[L.SG_F1], p[L.SG_F2], p[L.SG_F3] = gov.stage_weights
    p[L.SG_PREF], p[L.SG_SRATIO] = p_ref, s_ratio
    p[L.SG_EXC_ON] = 1.0 if exc.enabled else 0.0
    p[L.SG_GOV_ON] = 1.0 if gov.enabled else 0.0
    p[L.SG_DINV:L.SG_DINV + 9] = fp.d_inv.ravel()
    p[L.SG_QINV:L.SG_QINV + 9] = fp.q_inv.ravel()
    return p


@dataclass
class SgOperatingPoint:
    state: np.ndarray
    params_row: np.ndarray
    efd: float
    v_ref: float
    p_mech: float

    def named(self) -> dict[str, float]:
        return dict(zip(L.SG_STATES, self.state.tolist()))


def sg_init_from_powerflow(v_term: complex, s_term: complex, machine: SgParams,
                           exciter: Ac4aParams | None = None,
                           governor: Ieeeg1Params | None = None,
                           s_ratio: float = 1.0, wb: float = OMEGA_BASE) -> SgOperatingPoint:
    """Steady state delivering ``s_term`` at the high-voltage terminal ``v_term``.

    Both are complex per-unit values on the machine rating, in the network
    frame.  Raises :class:`SgInitError` when the field current would be
    non-positive.
    """
    exciter = exciter or Ac4aParams()
    governor = governor or Ieeeg1Params()
    fp = fundamental_parameters(machine, wb)
    v = complex(v_term)
    cur = (complex(s_term) / v).conjugate()
    e_q_axis = v + complex(fp.ra, fp.laq + fp.ll) * cur
    delta = cmath.phase(e_q_axis)
    # past 90 deg the q-axis flips and i_fd > 0 below only describes the
    # pole-slipped equilibrium; the physical one needs negative field current
    if abs(cmath.phase(e_q_axis / v)) >= math.pi / 2:
        raise SgInitError("operating point needs non-positive field current "
                          "(load angle at or beyond 90 deg)")
    rot = cmath.exp(-1j * delta)
    em = 1j * v * rot
    im = 1j * cur * rot
    e_d, e_q = em.real, em.imag
    i_d, i_q = im.real, im.imag
    psi_d = e_q + fp.ra * i_q
    psi_q = -(e_d + fp.ra * i_d)
    i_fd = (psi_d + (fp.lad + fp.ll) * i_d) / fp.lad
    if i_fd <= 0:
        raise SgInitError(f"operating point needs non-positive field current ({i_fd:.4g} pu)")
    psi_fd = -fp.lad * i_d + (fp.lad + fp.lfd) * i_fd
    psi_1d = -fp.lad * i_d + fp.lad * i_fd
    psi_1q = -fp.laq * i_q
    efd = fp.lad * i_fd
    if not exciter.efd_min <= efd <= exciter.efd_max:
        raise SgInitError(f"required field voltage {efd:.4g} pu outside exciter limits")
    v_lv = abs(v + complex(machine.rtr, machine.xtr) * cur)
    te = psi_d * i_q - psi_q * i_d
    f1, f2, f3 = governor.stage_weights
    p_ref = te / (f1 + f2 + f3)
    v_err = efd / exciter.ka
    v_ref = v_lv + v_err
    x = np.array([psi_d, psi_q, psi_fd, psi_1d, psi_1q, psi_1q, 1.0, delta,
                  v_err, efd, p_ref, p_ref, p_ref, p_ref])
    row = sg_param_row(machine, exciter, governor, s_ratio, v_ref=v_ref, p_ref=p_ref, wb=wb)
    return SgOperatingPoint(state=x, params_row=row, efd=efd, v_ref=v_ref, p_mech=te)


def sg_derivatives(state: np.ndarray, v_term: complex, params_row: np.ndarray,
                   wb: float = OMEGA_BASE) -> tuple[np.ndarray, complex]:
    """State derivatives and injected terminal current for one machine in isolation."""
    dx = [0.0] * L.SG_NX
    cur = sg_core(list(map(float, state)), dx, 0, params_row.tolist(), complex(v_term), wb)
    return np.array(dx), cur


def sg_outputs(state: np.ndarray, v_term: complex, params_row: np.ndarray,
               wb: float = OMEGA_BASE) -> dict[str, float]:
    out = [0.0] * L.SG_NOUT
    sg_core(list(map(float, state)), None, 0, params_row.tolist(), complex(v_term), wb, out)
    return dict(zip(L.SG_OUTPUTS, out))


def params_to_dict(m: SgParams, exc: Ac4aParams, gov: Ieeeg1Params) -> dict:
    g = asdict(gov)
    g["k"] = list(gov.k)
    return {"machine": asdict(m), "exciter": asdict(exc), "governor": g}
