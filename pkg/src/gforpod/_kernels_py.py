"""Pure-Python reference kernels.

Same contract as the compiled ``_ckernels`` extension: right-hand side of
the assembled ODE, device output map and a fixed-step RK4 driver.  Used when
the extension is not built or when ``GFORPOD_PURE_PYTHON=1``.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from ._layout import (
    GF_BC, GF_IDMAX, GF_IQMAX, GF_KIC, GF_KIV, GF_KPC, GF_KPV, GF_NOUT,
    GF_PODP, GF_PODQ, GF_PODSIGN, GF_PODSIGN_Q, GF_PSTAR, GF_PSUP, GF_QSTAR, GF_QSUP, GF_RC,
    GF_RCAP, GF_RF, GF_RTR, GF_RV, GF_SRATIO, GF_TFF, GF_TP, GF_TQ, GF_VSTAR,
    GF_WSTAR, GF_XC, GF_XTR, GI_BUS, GI_OFF, GI_PODP_NS, GI_PODP_OFF,
    GI_PODQ_NS, GI_PODQ_OFF, POD_K, POD_LIM, POD_T1, POD_T2, POD_TF, POD_TW,
    SG_D, SG_DINV, SG_EMAX, SG_EMIN, SG_EXC_ON, SG_F1, SG_F2, SG_F3, SG_GOV_ON,
    SG_H, SG_KA, SG_LAD, SG_NOUT, SG_PREF, SG_PSUP, SG_QINV, SG_R, SG_R1D,
    SG_R1Q, SG_R2Q, SG_RA, SG_RFD, SG_RTR, SG_SRATIO, SG_T3, SG_T4, SG_T5,
    SG_T6, SG_TA, SG_TB, SG_TC, SG_VREF, SG_VSUP, SG_XTR,
)

BACKEND = "python"


def _clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def pod_output(x, o, p, base, ns):
    """Saturated POD output from its states (strictly proper: no input term)."""
    t1 = p[base + POD_T1]
    t2 = p[base + POD_T2]
    r = t1 / t2
    z = x[o + 1]
    for k in range(ns):
        z = r * z + (1.0 - r) * x[o + 2 + k]
    lim = p[base + POD_LIM]
    return _clamp(p[base + POD_K] * z, -lim, lim)


def pod_deriv(x, dx, o, p, base, ns, u):
    tw = p[base + POD_TW]
    tf = p[base + POD_TF]
    t1 = p[base + POD_T1]
    t2 = p[base + POD_T2]
    r = t1 / t2
    yw = u - x[o]
    dx[o] = yw / tw
    dx[o + 1] = (yw - x[o + 1]) / tf
    z = x[o + 1]
    for k in range(ns):
        xs = x[o + 2 + k]
        dx[o + 2 + k] = (z - xs) / t2
        z = r * z + (1.0 - r) * xs


def sg_core(x, dx, o, p, v, wb, out=None):
    """Machine + AC4A + IEEEG1.  ``v`` is the HV terminal voltage, device
    base, network frame.  Returns the injected current (device base)."""
    psd = x[o]
    psq = x[o + 1]
    psfd = x[o + 2]
    ps1d = x[o + 3]
    ps1q = x[o + 4]
    ps2q = x[o + 5]
    w = x[o + 6]
    delta = x[o + 7]
    xll = x[o + 8]
    efd_s = x[o + 9]
    pgv = x[o + 10]
    x1 = x[o + 11]
    x2 = x[o + 12]
    x3 = x[o + 13]

    di = SG_DINV
    qi = SG_QINV
    i_d = -(p[di] * psd + p[di + 1] * psfd + p[di + 2] * ps1d)
    i_fd = p[di + 3] * psd + p[di + 4] * psfd + p[di + 5] * ps1d
    i_1d = p[di + 6] * psd + p[di + 7] * psfd + p[di + 8] * ps1d
    i_q = -(p[qi] * psq + p[qi + 1] * ps1q + p[qi + 2] * ps2q)
    i_1q = p[qi + 3] * psq + p[qi + 4] * ps1q + p[qi + 5] * ps2q
    i_2q = p[qi + 6] * psq + p[qi + 7] * ps1q + p[qi + 8] * ps2q

    # network frame -> rotor frame: e_d + j e_q = j v exp(-j delta)
    rot = cmath.exp(-1j * delta)
    vm = 1j * v * rot
    e_d = vm.real
    e_q = vm.imag
    ra = p[SG_RA]
    lad = p[SG_LAD]
    rfd = p[SG_RFD]

    efd = _clamp(efd_s, p[SG_EMIN], p[SG_EMAX])
    te = psd * i_q - psq * i_d
    pm = p[SG_F1] * x1 + p[SG_F2] * x2 + p[SG_F3] * x3
    cur = -1j * complex(i_d, i_q) / rot
    vt = abs(v + complex(p[SG_RTR], p[SG_XTR]) * cur)

    if dx is not None:
        dx[o] = wb * (e_d + ra * i_d + w * psq)
        dx[o + 1] = wb * (e_q + ra * i_q - w * psd)
        dx[o + 2] = wb * (rfd / lad * efd - rfd * i_fd)
        dx[o + 3] = -wb * p[SG_R1D] * i_1d
        dx[o + 4] = -wb * p[SG_R1Q] * i_1q
        dx[o + 5] = -wb * p[SG_R2Q] * i_2q
        dx[o + 6] = (pm / w - te - p[SG_D] * (w - 1.0)) / (2.0 * p[SG_H])
        dx[o + 7] = wb * (w - 1.0)
        if p[SG_EXC_ON] != 0.0:
            tb = p[SG_TB]
            rt = p[SG_TC] / tb
            verr = p[SG_VREF] + p[SG_VSUP] - vt
            dx[o + 8] = (verr - xll) / tb
            y = rt * verr + (1.0 - rt) * xll
            dx[o + 9] = (p[SG_KA] * y - efd_s) / p[SG_TA]
        else:
            dx[o + 8] = 0.0
            dx[o + 9] = 0.0
        if p[SG_GOV_ON] != 0.0:
            dx[o + 10] = (p[SG_PREF] + p[SG_PSUP] - (w - 1.0) / p[SG_R] - pgv) / p[SG_T3]
            dx[o + 11] = (pgv - x1) / p[SG_T4]
            dx[o + 12] = (x1 - x2) / p[SG_T5]
            dx[o + 13] = (x2 - x3) / p[SG_T6]
        else:
            dx[o + 10] = 0.0
            dx[o + 11] = 0.0
            dx[o + 12] = 0.0
            dx[o + 13] = 0.0
    if out is not None:
        s = v * cur.conjugate()
        out[0] = w
        out[1] = s.real
        out[2] = s.imag
        out[3] = i_d
        out[4] = i_q
        out[5] = vt
        out[6] = efd
        out[7] = pm
    return cur


def gf_core(x, dx, o, p, gi, v, wb, out=None):
    """Droop grid-forming converter with POD channels.  ``v`` is the HV bus
    voltage, device base.  Returns the injected current (device base)."""
    i_s = complex(x[o], x[o + 1])
    uc = complex(x[o + 2], x[o + 3])
    ig = complex(x[o + 4], x[o + 5])
    xi_i = complex(x[o + 6], x[o + 7])
    xi_v = complex(x[o + 8], x[o + 9])
    f_ig = complex(x[o + 10], x[o + 11])
    f_u = complex(x[o + 12], x[o + 13])
    pf = x[o + 14]
    qf = x[o + 15]
    th = x[o + 16]

    op = gi[GI_PODP_OFF]
    oq = gi[GI_PODQ_OFF]
    dp = pod_output(x, op, p, GF_PODP, gi[GI_PODP_NS]) if op >= 0 else 0.0
    dq = pod_output(x, oq, p, GF_PODQ, gi[GI_PODQ_NS]) if oq >= 0 else 0.0
    w = p[GF_WSTAR] + p[GF_RF] * (p[GF_PSTAR] + p[GF_PSUP] + p[GF_PODSIGN] * dp - pf)
    vref = p[GF_VSTAR] + p[GF_RV] * (p[GF_QSTAR] + p[GF_QSUP] + p[GF_PODSIGN_Q] * dq - qf)

    rc = p[GF_RC]
    xc = p[GF_XC]
    bc = p[GF_BC]
    u = uc + p[GF_RCAP] * (i_s - ig)
    rot = cmath.exp(-1j * th)
    u_l = u * rot
    ig_l = ig * rot
    is_l = i_s * rot
    s = u * ig.conjugate()

    ev = vref - u_l
    iref = p[GF_KPV] * ev + p[GF_KIV] * xi_v + f_ig + 1j * w * bc * u_l
    iq_ref = _clamp(iref.real, -p[GF_IQMAX], p[GF_IQMAX])
    id_ref = _clamp(iref.imag, -p[GF_IDMAX], p[GF_IDMAX])
    ei = complex(iq_ref, id_ref) - is_l
    vc = (p[GF_KPC] * ei + p[GF_KIC] * xi_i + f_u + 1j * w * xc * is_l) / rot

    if dx is not None:
        d = wb / xc * (vc - u - rc * i_s) - 1j * wb * i_s
        dx[o] = d.real
        dx[o + 1] = d.imag
        d = wb / bc * (i_s - ig) - 1j * wb * uc
        dx[o + 2] = d.real
        dx[o + 3] = d.imag
        d = wb / p[GF_XTR] * (u - v - p[GF_RTR] * ig) - 1j * wb * ig
        dx[o + 4] = d.real
        dx[o + 5] = d.imag
        dx[o + 6] = ei.real
        dx[o + 7] = ei.imag
        dx[o + 8] = ev.real
        dx[o + 9] = ev.imag
        tff = p[GF_TFF]
        d = (ig_l - f_ig) / tff
        dx[o + 10] = d.real
        dx[o + 11] = d.imag
        d = (u_l - f_u) / tff
        dx[o + 12] = d.real
        dx[o + 13] = d.imag
        dx[o + 14] = (s.real - pf) / p[GF_TP]
        dx[o + 15] = (s.imag - qf) / p[GF_TQ]
        dx[o + 16] = wb * (w - 1.0)
        if op >= 0:
            pod_deriv(x, dx, op, p, GF_PODP, gi[GI_PODP_NS], w - 1.0)
        if oq >= 0:
            pod_deriv(x, dx, oq, p, GF_PODQ, gi[GI_PODQ_NS], w - 1.0)
    if out is not None:
        out[0] = w
        out[1] = s.real
        out[2] = s.imag
        out[3] = pf
        out[4] = qf
        out[5] = dp
        out[6] = dq
        out[7] = iq_ref
        out[8] = id_ref
        out[9] = abs(u)
    return ig


class Kernel:
    """Right-hand side of the assembled model over packed arrays.

    The arrays are held by reference; after mutating them in place call
    :meth:`refresh` so the cached Python lists pick up the change.
    """

    backend = BACKEND

    def __init__(self, n, wb, bus_off, bus_c, bus_g, br_from, br_to, br_r, br_x,
                 br_tap, br_off, src_bus, src_r, src_x, src_e, src_off,
                 sg_p, sg_i, gf_p, gf_i):
        self.n = int(n)
        self.wb = float(wb)
        self._arrays = dict(
            bus_off=bus_off, bus_c=bus_c, bus_g=bus_g, br_from=br_from, br_to=br_to,
            br_r=br_r, br_x=br_x, br_tap=br_tap, br_off=br_off, src_bus=src_bus,
            src_r=src_r, src_x=src_x, src_e=src_e, src_off=src_off,
            sg_p=sg_p, sg_i=sg_i, gf_p=gf_p, gf_i=gf_i,
        )
        self.refresh()

    def refresh(self):
        a = self._arrays
        self.bus_off = [int(v) for v in a["bus_off"]]
        self.bus_c = a["bus_c"].tolist()
        self.bus_g = a["bus_g"].tolist()
        self.branches = [
            (int(f), int(t), r, xx, tp, int(o)) for f, t, r, xx, tp, o in zip(
                a["br_from"], a["br_to"], a["br_r"].tolist(), a["br_x"].tolist(),
                a["br_tap"].tolist(), a["br_off"])
        ]
        self.sources = [
            (int(b), r, xx, complex(e[0], e[1]), int(o)) for b, r, xx, e, o in zip(
                a["src_bus"], a["src_r"].tolist(), a["src_x"].tolist(),
                a["src_e"].tolist(), a["src_off"])
        ]
        self.sgs = [(row.tolist(), [int(v) for v in ii]) for row, ii in zip(a["sg_p"], a["sg_i"])]
        self.gfs = [(row.tolist(), [int(v) for v in ii]) for row, ii in zip(a["gf_p"], a["gf_i"])]

    # ------------------------------------------------------------------
    def _eval(self, x, dx, out):
        wb = self.wb
        nb = len(self.bus_off)
        v = [complex(x[o], x[o + 1]) for o in self.bus_off]
        acc = [0j] * nb
        for f, t, r, xx, tap, o in self.branches:
            i = complex(x[o], x[o + 1])
            vt = v[t] if t >= 0 else 0j
            if dx is not None:
                d = wb / xx * (v[f] / tap - vt - r * i) - 1j * wb * i
                dx[o] = d.real
                dx[o + 1] = d.imag
            acc[f] -= i / tap
            if t >= 0:
                acc[t] += i
        for b, r, xx, e, o in self.sources:
            i = complex(x[o], x[o + 1])
            if dx is not None:
                d = wb / xx * (e - v[b] - r * i) - 1j * wb * i
                dx[o] = d.real
                dx[o + 1] = d.imag
            acc[b] += i
        k = nb
        for p, ii in self.sgs:
            o_out = None
            if out is not None:
                o_out = [0.0] * SG_NOUT
            cur = sg_core(x, dx, ii[0], p, v[ii[1]], wb, o_out)
            acc[ii[1]] += cur * p[SG_SRATIO]
            if out is not None:
                out[k:k + SG_NOUT] = o_out
                k += SG_NOUT
        for p, gi in self.gfs:
            o_out = None
            if out is not None:
                o_out = [0.0] * GF_NOUT
            cur = gf_core(x, dx, gi[GI_OFF], p, gi, v[gi[GI_BUS]], wb, o_out)
            acc[gi[GI_BUS]] += cur * p[GF_SRATIO]
            if out is not None:
                out[k:k + GF_NOUT] = o_out
                k += GF_NOUT
        if dx is not None:
            for j in range(nb):
                o = self.bus_off[j]
                d = wb / self.bus_c[j] * (acc[j] - self.bus_g[j] * v[j]) - 1j * wb * v[j]
                dx[o] = d.real
                dx[o + 1] = d.imag
        if out is not None:
            for j in range(nb):
                out[j] = abs(v[j])

    def f(self, x):
        xl = x.tolist() if isinstance(x, np.ndarray) else list(x)
        dx = [0.0] * self.n
        self._eval(xl, dx, None)
        return np.array(dx)

    def n_outputs(self):
        return len(self.bus_off) + SG_NOUT * len(self.sgs) + GF_NOUT * len(self.gfs)

    def outputs(self, x):
        xl = x.tolist() if isinstance(x, np.ndarray) else list(x)
        out = [0.0] * self.n_outputs()
        self._eval(xl, None, out)
        return np.array(out)

    def rk4(self, x0, dt, nsteps, rec_every):
        """Integrate ``nsteps`` RK4 steps, recording every ``rec_every``-th state.

        Returns ``(records, bad_step, x_final)``; ``bad_step`` is -1 on success
        or the step index at which a non-finite state appeared.
        """
        n = self.n
        x = [float(v) for v in x0]
        nrec = nsteps // rec_every + 1
        rec = np.empty((nrec, n))
        rec[0] = x
        k1 = [0.0] * n
        k2 = [0.0] * n
        k3 = [0.0] * n
        k4 = [0.0] * n
        h2 = 0.5 * dt
        h6 = dt / 6.0
        r = 1
        for step in range(1, nsteps + 1):
            self._eval(x, k1, None)
            xt = [x[i] + h2 * k1[i] for i in range(n)]
            self._eval(xt, k2, None)
            xt = [x[i] + h2 * k2[i] for i in range(n)]
            self._eval(xt, k3, None)
            xt = [x[i] + dt * k3[i] for i in range(n)]
            self._eval(xt, k4, None)
            x = [x[i] + h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in range(n)]
            if not all(map(math.isfinite, x)):
                return rec[:r], step, np.array(x)
            if step % rec_every == 0:
                rec[r] = x
                r += 1
        return rec[:r], -1, np.array(x)
