# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: ODE right-hand side, output map and RK4 driver.

Mirrors ``_kernels_py`` line for line; column indices follow ``_layout``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, isfinite

cnp.import_array()

BACKEND = "cython"

ctypedef double complex cplx

# parameter-row columns (see _layout.py)
cdef enum:
    SG_RA = 0
    SG_LL = 1
    SG_LAD = 2
    SG_LAQ = 3
    SG_RFD = 4
    SG_R1D = 5
    SG_R1Q = 6
    SG_R2Q = 7
    SG_H = 8
    SG_D = 9
    SG_RTR = 10
    SG_XTR = 11
    SG_KA = 12
    SG_TA = 13
    SG_TB = 14
    SG_TC = 15
    SG_EMIN = 16
    SG_EMAX = 17
    SG_VREF = 18
    SG_R = 19
    SG_T3 = 20
    SG_T4 = 21
    SG_T5 = 22
    SG_T6 = 23
    SG_F1 = 24
    SG_F2 = 25
    SG_F3 = 26
    SG_PREF = 27
    SG_SRATIO = 28
    SG_EXC_ON = 29
    SG_GOV_ON = 30
    SG_DINV = 31
    SG_QINV = 40
    SG_VSUP = 49
    SG_PSUP = 50
    SG_NOUT = 8
    GF_RC = 0
    GF_XC = 1
    GF_BC = 2
    GF_RCAP = 3
    GF_RTR = 4
    GF_XTR = 5
    GF_KPC = 6
    GF_KIC = 7
    GF_KPV = 8
    GF_KIV = 9
    GF_TFF = 10
    GF_IQMAX = 11
    GF_IDMAX = 12
    GF_RF = 13
    GF_RV = 14
    GF_TP = 15
    GF_TQ = 16
    GF_PSTAR = 17
    GF_QSTAR = 18
    GF_VSTAR = 19
    GF_WSTAR = 20
    GF_SRATIO = 21
    GF_PODSIGN = 22
    GF_PSUP = 23
    GF_QSUP = 24
    GF_PODP = 25
    GF_PODQ = 31
    GF_PODSIGN_Q = 37
    GF_NOUT = 10
    POD_K = 0
    POD_TW = 1
    POD_TF = 2
    POD_T1 = 3
    POD_T2 = 4
    POD_LIM = 5
    GI_OFF = 0
    GI_BUS = 1
    GI_PODP_OFF = 2
    GI_PODQ_OFF = 3
    GI_PODP_NS = 4
    GI_PODQ_NS = 5





cdef inline double _clamp(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline cplx _c(double re, double im) nogil:
    cdef cplx z
    z.real = re
    z.imag = im
    return z


cdef inline double _abs(cplx z) nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef inline cplx _conj(cplx z) nogil:
    return _c(z.real, -z.imag)


cdef double pod_output(const double* x, int o, const double* p, int base, int ns) nogil:
    cdef double r = p[base + POD_T1] / p[base + POD_T2]
    cdef double z = x[o + 1]
    cdef int k
    for k in range(ns):
        z = r * z + (1.0 - r) * x[o + 2 + k]
    cdef double lim = p[base + POD_LIM]
    return _clamp(p[base + POD_K] * z, -lim, lim)


cdef void pod_deriv(const double* x, double* dx, int o, const double* p, int base,
                    int ns, double u) nogil:
    cdef double tw = p[base + POD_TW]
    cdef double tf = p[base + POD_TF]
    cdef double t2 = p[base + POD_T2]
    cdef double r = p[base + POD_T1] / t2
    cdef double yw = u - x[o]
    dx[o] = yw / tw
    dx[o + 1] = (yw - x[o + 1]) / tf
    cdef double z = x[o + 1]
    cdef double xs
    cdef int k
    for k in range(ns):
        xs = x[o + 2 + k]
        dx[o + 2 + k] = (z - xs) / t2
        z = r * z + (1.0 - r) * xs


cdef cplx sg_core(const double* x, double* dx, int o, const double* p, cplx v,
                  double wb, double* out) nogil:
    cdef double psd = x[o], psq = x[o + 1], psfd = x[o + 2], ps1d = x[o + 3]
    cdef double ps1q = x[o + 4], ps2q = x[o + 5], w = x[o + 6], delta = x[o + 7]
    cdef double xll = x[o + 8], efd_s = x[o + 9], pgv = x[o + 10]
    cdef double x1 = x[o + 11], x2 = x[o + 12], x3 = x[o + 13]
    cdef int di = SG_DINV, qi = SG_QINV
    cdef double i_d = -(p[di] * psd + p[di + 1] * psfd + p[di + 2] * ps1d)
    cdef double i_fd = p[di + 3] * psd + p[di + 4] * psfd + p[di + 5] * ps1d
    cdef double i_1d = p[di + 6] * psd + p[di + 7] * psfd + p[di + 8] * ps1d
    cdef double i_q = -(p[qi] * psq + p[qi + 1] * ps1q + p[qi + 2] * ps2q)
    cdef double i_1q = p[qi + 3] * psq + p[qi + 4] * ps1q + p[qi + 5] * ps2q
    cdef double i_2q = p[qi + 6] * psq + p[qi + 7] * ps1q + p[qi + 8] * ps2q

    cdef cplx rot = _c(cos(delta), -sin(delta))
    cdef cplx vm = _c(0.0, 1.0) * v * rot
    cdef double e_d = vm.real, e_q = vm.imag
    cdef double ra = p[SG_RA], lad = p[SG_LAD], rfd = p[SG_RFD]
    cdef double efd = _clamp(efd_s, p[SG_EMIN], p[SG_EMAX])
    cdef double te = psd * i_q - psq * i_d
    cdef double pm = p[SG_F1] * x1 + p[SG_F2] * x2 + p[SG_F3] * x3
    # -j (i_d + j i_q) / rot
    cdef cplx cur = _c(0.0, -1.0) * _c(i_d, i_q) * _conj(rot)
    cdef double vt = _abs(v + _c(p[SG_RTR], p[SG_XTR]) * cur)
    cdef double tb, rt, verr, y
    cdef cplx s

    if dx != NULL:
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
    if out != NULL:
        s = v * _conj(cur)
        out[0] = w
        out[1] = s.real
        out[2] = s.imag
        out[3] = i_d
        out[4] = i_q
        out[5] = vt
        out[6] = efd
        out[7] = pm
    return cur


cdef cplx gf_core(const double* x, double* dx, int o, const double* p, const int* gi,
                  cplx v, double wb, double* out) nogil:
    cdef cplx i_s = _c(x[o], x[o + 1])
    cdef cplx uc = _c(x[o + 2], x[o + 3])
    cdef cplx ig = _c(x[o + 4], x[o + 5])
    cdef cplx xi_i = _c(x[o + 6], x[o + 7])
    cdef cplx xi_v = _c(x[o + 8], x[o + 9])
    cdef cplx f_ig = _c(x[o + 10], x[o + 11])
    cdef cplx f_u = _c(x[o + 12], x[o + 13])
    cdef double pf = x[o + 14], qf = x[o + 15], th = x[o + 16]
    cdef cplx J = _c(0.0, 1.0)

    cdef int op = gi[GI_PODP_OFF], oq = gi[GI_PODQ_OFF]
    cdef double dp = 0.0, dq = 0.0
    if op >= 0:
        dp = pod_output(x, op, p, GF_PODP, gi[GI_PODP_NS])
    if oq >= 0:
        dq = pod_output(x, oq, p, GF_PODQ, gi[GI_PODQ_NS])
    cdef double w = p[GF_WSTAR] + p[GF_RF] * (p[GF_PSTAR] + p[GF_PSUP] + p[GF_PODSIGN] * dp - pf)
    cdef double vref = p[GF_VSTAR] + p[GF_RV] * (p[GF_QSTAR] + p[GF_QSUP] + p[GF_PODSIGN_Q] * dq - qf)

    cdef double rc = p[GF_RC], xc = p[GF_XC], bc = p[GF_BC]
    cdef cplx u = uc + p[GF_RCAP] * (i_s - ig)
    cdef cplx rot = _c(cos(th), -sin(th))
    cdef cplx u_l = u * rot
    cdef cplx ig_l = ig * rot
    cdef cplx is_l = i_s * rot
    cdef cplx s = u * _conj(ig)

    cdef cplx ev = vref - u_l
    cdef cplx iref = p[GF_KPV] * ev + p[GF_KIV] * xi_v + f_ig + J * (w * bc) * u_l
    cdef double iq_ref = _clamp(iref.real, -p[GF_IQMAX], p[GF_IQMAX])
    cdef double id_ref = _clamp(iref.imag, -p[GF_IDMAX], p[GF_IDMAX])
    cdef cplx ei = _c(iq_ref, id_ref) - is_l
    cdef cplx vc = (p[GF_KPC] * ei + p[GF_KIC] * xi_i + f_u + J * (w * xc) * is_l) * _conj(rot)
    cdef cplx d
    cdef double tff

    if dx != NULL:
        d = (wb / xc) * (vc - u - rc * i_s) - J * wb * i_s
        dx[o] = d.real
        dx[o + 1] = d.imag
        d = (wb / bc) * (i_s - ig) - J * wb * uc
        dx[o + 2] = d.real
        dx[o + 3] = d.imag
        d = (wb / p[GF_XTR]) * (u - v - p[GF_RTR] * ig) - J * wb * ig
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
    if out != NULL:
        out[0] = w
        out[1] = s.real
        out[2] = s.imag
        out[3] = pf
        out[4] = qf
        out[5] = dp
        out[6] = dq
        out[7] = iq_ref
        out[8] = id_ref
        out[9] = _abs(u)
    return ig


cdef class Kernel:
    """Compiled right-hand side over packed arrays (held by reference)."""

    cdef readonly int n
    cdef readonly double wb
    cdef int nb, nbr, nsrc, nsg, ngf
    cdef int[::1] bus_off, br_from, br_to, br_off, src_bus, src_off
    cdef double[::1] bus_c, bus_g, br_r, br_x, br_tap, src_r, src_x
    cdef double[:, ::1] src_e, sg_p, gf_p
    cdef int[:, ::1] sg_i, gf_i
    cdef double[::1] _vre, _vim, _are, _aim
    cdef object _keep

    backend = BACKEND

    def __init__(self, n, wb, bus_off, bus_c, bus_g, br_from, br_to, br_r, br_x,
                 br_tap, br_off, src_bus, src_r, src_x, src_e, src_off,
                 sg_p, sg_i, gf_p, gf_i):
        self.n = n
        self.wb = wb
        self._keep = (bus_off, bus_c, bus_g, br_from, br_to, br_r, br_x, br_tap,
                      br_off, src_bus, src_r, src_x, src_e, src_off, sg_p, sg_i, gf_p, gf_i)
        self.bus_off = bus_off
        self.bus_c = bus_c
        self.bus_g = bus_g
        self.br_from = br_from
        self.br_to = br_to
        self.br_r = br_r
        self.br_x = br_x
        self.br_tap = br_tap
        self.br_off = br_off
        self.src_bus = src_bus
        self.src_r = src_r
        self.src_x = src_x
        self.src_e = src_e
        self.src_off = src_off
        self.sg_p = sg_p
        self.sg_i = sg_i
        self.gf_p = gf_p
        self.gf_i = gf_i
        self.nb = bus_off.shape[0]
        self.nbr = br_from.shape[0]
        self.nsrc = src_bus.shape[0]
        self.nsg = sg_p.shape[0]
        self.ngf = gf_p.shape[0]
        self._vre = np.zeros(self.nb)
        self._vim = np.zeros(self.nb)
        self._are = np.zeros(self.nb)
        self._aim = np.zeros(self.nb)

    def refresh(self):
        pass

    cdef void _eval(self, const double* x, double* dx, double* out) nogil:
        cdef int j, k, f, t, o, b
        cdef double wb = self.wb
        cdef cplx J = _c(0.0, 1.0)
        cdef cplx i, vt, d, e, cur, vj, acc
        cdef double tap, r, xx
        cdef double* vre = &self._vre[0] if self.nb > 0 else NULL
        cdef double* vim = &self._vim[0] if self.nb > 0 else NULL
        cdef double* are = &self._are[0] if self.nb > 0 else NULL
        cdef double* aim = &self._aim[0] if self.nb > 0 else NULL
        cdef int kout = self.nb
        for j in range(self.nb):
            o = self.bus_off[j]
            vre[j] = x[o]
            vim[j] = x[o + 1]
            are[j] = 0.0
            aim[j] = 0.0
        for k in range(self.nbr):
            f = self.br_from[k]
            t = self.br_to[k]
            o = self.br_off[k]
            tap = self.br_tap[k]
            i = _c(x[o], x[o + 1])
            if t >= 0:
                vt = _c(vre[t], vim[t])
            else:
                vt = _c(0.0, 0.0)
            if dx != NULL:
                d = (wb / self.br_x[k]) * (_c(vre[f], vim[f]) / tap - vt - self.br_r[k] * i) - J * wb * i
                dx[o] = d.real
                dx[o + 1] = d.imag
            are[f] -= i.real / tap
            aim[f] -= i.imag / tap
            if t >= 0:
                are[t] += i.real
                aim[t] += i.imag
        for k in range(self.nsrc):
            b = self.src_bus[k]
            o = self.src_off[k]
            i = _c(x[o], x[o + 1])
            if dx != NULL:
                e = _c(self.src_e[k, 0], self.src_e[k, 1])
                d = (wb / self.src_x[k]) * (e - _c(vre[b], vim[b]) - self.src_r[k] * i) - J * wb * i
                dx[o] = d.real
                dx[o + 1] = d.imag
            are[b] += i.real
            aim[b] += i.imag
        for k in range(self.nsg):
            b = self.sg_i[k, 1]
            cur = sg_core(x, dx, self.sg_i[k, 0], &self.sg_p[k, 0], _c(vre[b], vim[b]), wb,
                          &out[kout] if out != NULL else NULL)
            if out != NULL:
                kout += SG_NOUT
            are[b] += cur.real * self.sg_p[k, SG_SRATIO]
            aim[b] += cur.imag * self.sg_p[k, SG_SRATIO]
        for k in range(self.ngf):
            b = self.gf_i[k, GI_BUS]
            cur = gf_core(x, dx, self.gf_i[k, GI_OFF], &self.gf_p[k, 0], &self.gf_i[k, 0],
                          _c(vre[b], vim[b]), wb, &out[kout] if out != NULL else NULL)
            if out != NULL:
                kout += GF_NOUT
            are[b] += cur.real * self.gf_p[k, GF_SRATIO]
            aim[b] += cur.imag * self.gf_p[k, GF_SRATIO]
        if dx != NULL:
            for j in range(self.nb):
                o = self.bus_off[j]
                vj = _c(vre[j], vim[j])
                acc = _c(are[j], aim[j])
                d = (wb / self.bus_c[j]) * (acc - self.bus_g[j] * vj) - J * wb * vj
                dx[o] = d.real
                dx[o + 1] = d.imag
        if out != NULL:
            for j in range(self.nb):
                out[j] = sqrt(vre[j] * vre[j] + vim[j] * vim[j])

    def f(self, x):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        dx = np.zeros(self.n)
        cdef double[::1] dv = dx
        self._eval(&xv[0], &dv[0], NULL)
        return dx

    def n_outputs(self):
        return self.nb + SG_NOUT * self.nsg + GF_NOUT * self.ngf

    def outputs(self, x):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        out = np.zeros(self.n_outputs())
        cdef double[::1] ov = out
        self._eval(&xv[0], NULL, &ov[0] if ov.shape[0] > 0 else NULL)
        return out

    def rk4(self, x0, double dt, long nsteps, long rec_every):
        """Integrate ``nsteps`` RK4 steps, recording every ``rec_every``-th state.

        Returns ``(records, bad_step, x_final)``; ``bad_step`` is -1 on success
        or the step index at which a non-finite state appeared.
        """
        cdef int n = self.n
        cdef long nrec = nsteps // rec_every + 1
        rec_arr = np.empty((nrec, n))
        cdef double[:, ::1] rec = rec_arr
        xa = np.array(x0, dtype=np.float64)
        cdef double[::1] x = xa
        cdef double[::1] k1 = np.empty(n), k2 = np.empty(n), k3 = np.empty(n)
        cdef double[::1] k4 = np.empty(n), xt = np.empty(n)
        cdef double h2 = 0.5 * dt, h6 = dt / 6.0
        cdef long step, r = 1, bad = -1
        cdef int i
        for i in range(n):
            rec[0, i] = x[i]
        with nogil:
            for step in range(1, nsteps + 1):
                self._eval(&x[0], &k1[0], NULL)
                for i in range(n):
                    xt[i] = x[i] + h2 * k1[i]
                self._eval(&xt[0], &k2[0], NULL)
                for i in range(n):
                    xt[i] = x[i] + h2 * k2[i]
                self._eval(&xt[0], &k3[0], NULL)
                for i in range(n):
                    xt[i] = x[i] + dt * k3[i]
                self._eval(&xt[0], &k4[0], NULL)
                for i in range(n):
                    x[i] = x[i] + h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
                for i in range(n):
                    if not isfinite(x[i]):
                        bad = step
                        break
                if bad >= 0:
                    break
                if step % rec_every == 0:
                    for i in range(n):
                        rec[r, i] = x[i]
                    r += 1
        return rec_arr[:r], bad, xa
