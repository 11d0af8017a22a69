"""Assembly of devices and the dynamic network into one ODE, and its integration.

Network elements are dynamic: every series branch carries a current state and
every bus a capacitor-voltage state, all in one frame rotating at nominal
frequency (real axis = q, imaginary axis = d).  Loads are constant
impedances: a conductance on the bus plus an inductive shunt branch, or extra
bus capacitance when the load is capacitive.
"""
from __future__ import annotations

import copy
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _layout as L
from ._numdiff import central_jacobian
from .devices.gfor import gfor_init_from_powerflow
from .devices.sg import sg_init_from_powerflow
from .kernels import make_kernel
from .perunit import PowerFlowSolution, solve_powerflow
from .system import SystemSpec, snubber_conductance


class AssemblyError(RuntimeError):
    """The system description cannot be turned into an equilibrium model."""


class SimulationError(RuntimeError):
    def __init__(self, message: str, time: float, state: str):
        super().__init__(message)
        self.time = time
        self.state = state


REFERENCE_CHANNELS = {
    "sg": {"v_ref": L.SG_VSUP, "p_ref": L.SG_PSUP},
    "gfor": {"p_ref": L.GF_PSUP, "q_ref": L.GF_QSUP},
}


@dataclass(frozen=True)
class Event:
    """A discontinuity applied at ``time``.

    ``kind == "load"``: every load at ``bus`` is scaled to ``factor`` times its
    initial admittance.  ``kind == "ref"``: ``delta`` is added to reference
    ``channel`` of ``device``.
    """
    time: float
    kind: str
    bus: str | None = None
    factor: float = 1.0
    device: str | None = None
    channel: str | None = None
    delta: float = 0.0

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("event time must be non-negative")
        if self.kind == "load":
            if self.bus is None or self.factor <= 0:
                raise ValueError("load event needs a bus and a positive factor")
        elif self.kind == "ref":
            if self.device is None or self.channel is None:
                raise ValueError("reference event needs a device and a channel")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Event":
        """``load:bus=2,factor=1.01,t=1`` or ``ref:device=GFOR2,channel=p_ref,delta=0.01,t=1``."""
        kind, _, rest = text.partition(":")
        kv = dict(item.split("=", 1) for item in rest.split(",") if item)
        t = float(kv.pop("t", 0.0))
        if kind == "load":
            return cls(t, "load", bus=kv["bus"], factor=float(kv.get("factor", 1.0)))
        if kind == "ref":
            return cls(t, "ref", device=kv["device"], channel=kv["channel"],
                       delta=float(kv["delta"]))
        raise ValueError(f"unknown event kind {kind!r}")


@dataclass
class _LoadSlot:
    bus_index: int
    g: float
    b_cap: float
    branch: int  # index into branch arrays, -1 if none
    x: float


@dataclass
class DynamicModel:
    spec: SystemSpec
    pf: PowerFlowSolution
    labels: list[str]
    x0: np.ndarray
    wb: float
    arrays: dict[str, np.ndarray]
    output_names: list[str]
    device_rows: dict[str, tuple[str, int]]  # name -> ("sg"|"gfor", row)
    device_offsets: dict[str, int]
    bus_index: dict[str, int]
    loads: dict[str, _LoadSlot]
    base_bus_c: np.ndarray
    base_bus_g: np.ndarray
    load_scale: dict[str, float] = field(default_factory=dict)
    kernel: object = None
    backend: str | None = None

    def __post_init__(self):
        if self.kernel is None:
            self.kernel = make_kernel(self.arrays, len(self.x0), self.wb, self.backend)

    # -- evaluation -----------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.x0)

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.kernel.f(np.ascontiguousarray(x, dtype=float))

    def outputs(self, x: np.ndarray) -> np.ndarray:
        return self.kernel.outputs(np.ascontiguousarray(x, dtype=float))

    def output(self, x: np.ndarray, name: str) -> float:
        return float(self.outputs(x)[self.output_names.index(name)])

    def residual(self, x: np.ndarray | None = None) -> float:
        return float(np.max(np.abs(self.f(self.x0 if x is None else x))))

    def worst_state(self, x: np.ndarray | None = None) -> str:
        return self.labels[int(np.argmax(np.abs(self.f(self.x0 if x is None else x))))]

    def state_index(self, label: str) -> int:
        return self.labels.index(label)

    def jacobian(self, x: np.ndarray | None = None, rel: float = 1e-6,
                 floor: float = 1e-9) -> np.ndarray:
        return central_jacobian(self.f, self.x0 if x is None else x, rel, floor)

    # -- mutation ---------------------------------------------------------
    def copy(self, backend: str | None = None) -> "DynamicModel":
        arrays = {k: v.copy() for k, v in self.arrays.items()}
        return DynamicModel(
            self.spec, self.pf, list(self.labels), self.x0.copy(), self.wb, arrays,
            list(self.output_names), dict(self.device_rows), dict(self.device_offsets),
            dict(self.bus_index), copy.deepcopy(self.loads), self.base_bus_c.copy(),
            self.base_bus_g.copy(), dict(self.load_scale), None,
            backend if backend is not None else self.backend)

    def set_load_scale(self, bus: str, factor: float) -> None:
        if factor <= 0:
            raise ValueError("load factor must be positive")
        slots = [s for lid, s in self.loads.items() if self.spec_load_bus(lid) == bus]
        if not slots:
            raise KeyError(f"no load at bus {bus!r}")
        self.load_scale[bus] = factor
        j = self.bus_index[bus]
        g = self.base_bus_g[j]
        c = self.base_bus_c[j]
        for s in slots:
            g += (factor - 1.0) * s.g
            c += (factor - 1.0) * s.b_cap
            if s.branch >= 0:
                self.arrays["br_x"][s.branch] = s.x / factor
        self.arrays["bus_g"][j] = g
        self.arrays["bus_c"][j] = c
        self.kernel.refresh()

    def spec_load_bus(self, load_id: str) -> str:
        for ld in self.spec.loads:
            if ld.id == load_id:
                return ld.bus
        raise KeyError(load_id)

    def _ref_slot(self, device: str, channel: str) -> tuple[np.ndarray, int]:
        if device not in self.device_rows:
            raise KeyError(f"unknown device {device!r}")
        kind, row = self.device_rows[device]
        cols = REFERENCE_CHANNELS[kind]
        if channel not in cols:
            raise KeyError(f"{device} has no reference channel {channel!r}; "
                           f"choose from {sorted(cols)}")
        return self.arrays["sg_p" if kind == "sg" else "gf_p"][row], cols[channel]

    def add_reference(self, device: str, channel: str, delta: float) -> None:
        row, col = self._ref_slot(device, channel)
        row[col] += delta
        self.kernel.refresh()

    def get_reference(self, device: str, channel: str) -> float:
        row, col = self._ref_slot(device, channel)
        return float(row[col])

    def set_reference(self, device: str, channel: str, value: float) -> None:
        row, col = self._ref_slot(device, channel)
        row[col] = value
        self.kernel.refresh()

    def apply(self, event: Event) -> None:
        if event.kind == "load":
            self.set_load_scale(event.bus, event.factor)
        else:
            self.add_reference(event.device, event.channel, event.delta)

    # -- diagnostics ------------------------------------------------------
    def power_balance(self, x: np.ndarray | None = None) -> dict[str, float]:
        """Generation, load and series losses (system base) at state ``x``."""
        x = self.x0 if x is None else x
        a = self.arrays
        v = np.array([complex(x[o], x[o + 1]) for o in a["bus_off"]])
        out = self.outputs(x)
        gen = 0.0
        for name, (kind, row) in self.device_rows.items():
            if kind == "sg":
                gen += out[self.output_names.index(f"{name}.P_pu")] * a["sg_p"][row, L.SG_SRATIO]
            else:
                o = self.device_offsets[name]
                ig = complex(x[o + 4], x[o + 5])
                b = a["gf_i"][row, L.GI_BUS]
                gen += (v[b] * ig.conjugate()).real * a["gf_p"][row, L.GF_SRATIO]
        for k, o in enumerate(a["src_off"]):
            gen += (v[a["src_bus"][k]] * complex(x[o], x[o + 1]).conjugate()).real
        load = float(np.sum(a["bus_g"] * np.abs(v) ** 2))
        losses = 0.0
        for k, o in enumerate(a["br_off"]):
            losses += a["br_r"][k] * abs(complex(x[o], x[o + 1])) ** 2
        return {"generation": float(gen), "load": load, "losses": float(losses)}


# ----------------------------------------------------------------------
def _device_powers(spec: SystemSpec, pf: PowerFlowSolution) -> dict[str, complex]:
    """Complex output of every device (system base) consistent with the power flow."""
    out: dict[str, complex] = {}
    for b in spec.buses:
        devs = spec.devices_at(b.id)
        if not devs:
            continue
        k = pf.index(b.id)
        s_tot = complex(pf.p[k], pf.q[k])
        for ld in spec.loads:
            if ld.bus == b.id:
                s_tot += complex(ld.p, ld.q)
        for d in spec.sg:
            if d.bus == b.id:
                s_tot += snubber_conductance(d, spec.base_mva) * pf.vm[k] ** 2
        if spec.sources and any(s.bus == b.id for s in spec.sources):
            out[devs[0].name] = s_tot
            continue
        ratings = [spec.rating(d.name) for d in devs]
        share = [r / sum(ratings) for r in ratings]
        if b.kind == "slack":
            for d, w in zip(devs, share):
                out[d.name] = s_tot * w
        else:
            q_tot = s_tot.imag
            for d, w in zip(devs, share):
                out[d.name] = complex(d.p, q_tot * w)
    return out


def assemble(spec: SystemSpec, backend: str | None = None, polish: bool = True,
             pf: PowerFlowSolution | None = None) -> DynamicModel:
    """Power flow, device initialization, network states and equilibrium polish."""
    spec.validate()
    if not spec.sg and not spec.gfor:
        raise AssemblyError("system has no synchronous generator or grid-forming converter")
    if pf is None:
        buses, branches = spec.network()
        pf = solve_powerflow(buses, branches, tol=spec.solver.pf_tol)
    wb = 2.0 * math.pi * spec.f_hz
    nb = len(spec.buses)
    bidx = {b.id: k for k, b in enumerate(spec.buses)}
    labels: list[str] = []
    x: list[float] = []

    def add(names, values):
        off = len(x)
        labels.extend(names)
        x.extend(float(v) for v in values)
        return off

    v = pf.v
    bus_off = []
    for b in spec.buses:
        vk = v[bidx[b.id]]
        bus_off.append(add([f"bus.{b.id}.v_q", f"bus.{b.id}.v_d"], [vk.real, vk.imag]))

    bus_c = np.array([b.b_shunt for b in spec.buses], dtype=float)
    bus_g = np.zeros(nb)
    br_from, br_to, br_r, br_x, br_tap, br_off = [], [], [], [], [], []
    for br in spec.branches:
        f, t = bidx[br.from_bus], bidx[br.to_bus]
        if br.x <= 0:
            raise AssemblyError(f"branch {br.id}: dynamic network needs positive reactance")
        bus_c[f] += 0.5 * br.b
        bus_c[t] += 0.5 * br.b
        i = (v[f] / br.tap - v[t]) / complex(br.r, br.x)
        br_from.append(f)
        br_to.append(t)
        br_r.append(br.r)
        br_x.append(br.x)
        br_tap.append(br.tap)
        br_off.append(add([f"branch.{br.id}.i_q", f"branch.{br.id}.i_d"], [i.real, i.imag]))

    loads: dict[str, _LoadSlot] = {}
    for ld in spec.loads:
        j = bidx[ld.bus]
        vm2 = abs(v[j]) ** 2
        g = ld.p / vm2
        bus_g[j] += g
        slot = _LoadSlot(j, g, 0.0, -1, 0.0)
        if ld.q > 0:
            xl = vm2 / ld.q
            i = v[j] / complex(0.0, xl)
            slot.branch = len(br_from)
            slot.x = xl
            br_from.append(j)
            br_to.append(-1)
            br_r.append(0.0)
            br_x.append(xl)
            br_tap.append(1.0)
            br_off.append(add([f"load.{ld.id}.i_q", f"load.{ld.id}.i_d"], [i.real, i.imag]))
        elif ld.q < 0:
            slot.b_cap = -ld.q / vm2
            bus_c[j] += slot.b_cap
        loads[ld.id] = slot
    for d in spec.sg:
        bus_g[bidx[d.bus]] += snubber_conductance(d, spec.base_mva)

    for k, b in enumerate(spec.buses):
        if bus_c[k] <= 0:
            raise AssemblyError(f"bus {b.id} needs positive shunt capacitance for its voltage state")
    base_bus_c = bus_c.copy()
    base_bus_g = bus_g.copy()

    powers = _device_powers(spec, pf)
    src_bus, src_r, src_x, src_e, src_off = [], [], [], [], []
    for s in spec.sources:
        j = bidx[s.bus]
        i = (powers[s.name] / v[j]).conjugate()
        e = v[j] + complex(s.r, s.x) * i
        src_bus.append(j)
        src_r.append(s.r)
        src_x.append(s.x)
        src_e.append([e.real, e.imag])
        src_off.append(add([f"{s.name}.i_q", f"{s.name}.i_d"], [i.real, i.imag]))

    device_rows: dict[str, tuple[str, int]] = {}
    device_offsets: dict[str, int] = {}
    sg_p, sg_i = [], []
    for d in spec.sg:
        j = bidx[d.bus]
        ratio = d.machine.rating_mva / spec.base_mva
        try:
            op = sg_init_from_powerflow(v[j], powers[d.name] / ratio, d.machine, d.exciter,
                                        d.governor, s_ratio=ratio, wb=wb)
        except ValueError as exc:
            raise AssemblyError(f"{d.name}: {exc}") from exc
        o = add([f"{d.name}.{s}" for s in L.SG_STATES], op.state)
        device_rows[d.name] = ("sg", len(sg_p))
        device_offsets[d.name] = o
        sg_p.append(op.params_row)
        sg_i.append([o, j])

    gf_p, gf_i = [], []
    for d in spec.gfor:
        j = bidx[d.bus]
        ratio = d.params.rating_mva / spec.base_mva
        try:
            op = gfor_init_from_powerflow(v[j], powers[d.name] / ratio, d.params,
                                          d.pod_p, d.pod_q, s_ratio=ratio, wb=wb)
        except ValueError as exc:
            raise AssemblyError(f"{d.name}: {exc}") from exc
        names = [f"{d.name}.{s}" for s in L.GF_STATES]
        if d.pod_p:
            names += [f"{d.name}.pod_p.{s}" for s in L.pod_state_names(d.pod_p.n_s)]
        if d.pod_q:
            names += [f"{d.name}.pod_q.{s}" for s in L.pod_state_names(d.pod_q.n_s)]
        o = add(names, op.state)
        gi = op.index_row.copy()
        gi[L.GI_OFF] = o
        gi[L.GI_BUS] = j
        for c in (L.GI_PODP_OFF, L.GI_PODQ_OFF):
            if gi[c] >= 0:
                gi[c] += o
        device_rows[d.name] = ("gfor", len(gf_p))
        device_offsets[d.name] = o
        gf_p.append(op.params_row)
        gf_i.append(gi)

    def f64(a, shape=None):
        arr = np.ascontiguousarray(a, dtype=np.float64)
        return arr.reshape(shape) if shape is not None and arr.size == 0 else arr

    def i32(a, shape=None):
        arr = np.ascontiguousarray(a, dtype=np.intc)
        return arr.reshape(shape) if shape is not None and arr.size == 0 else arr

    arrays = {
        "bus_off": i32(bus_off), "bus_c": f64(bus_c), "bus_g": f64(bus_g),
        "br_from": i32(br_from), "br_to": i32(br_to), "br_r": f64(br_r), "br_x": f64(br_x),
        "br_tap": f64(br_tap), "br_off": i32(br_off),
        "src_bus": i32(src_bus), "src_r": f64(src_r), "src_x": f64(src_x),
        "src_e": f64(src_e, (0, 2)), "src_off": i32(src_off),
        "sg_p": f64(sg_p, (0, L.SG_NP)), "sg_i": i32(sg_i, (0, 2)),
        "gf_p": f64(gf_p, (0, L.GF_NP)), "gf_i": i32(gf_i, (0, L.GI_N)),
    }
    out_names = [f"bus.{b.id}.v_pu" for b in spec.buses]
    out_names += [f"{d.name}.{s}" for d in spec.sg for s in L.SG_OUTPUTS]
    out_names += [f"{d.name}.{s}" for d in spec.gfor for s in L.GF_OUTPUTS]

    model = DynamicModel(spec, pf, labels, np.array(x), wb, arrays, out_names, device_rows,
                         device_offsets, bidx, loads, base_bus_c, base_bus_g,
                         backend=backend)
    if polish:
        polish_equilibrium(model, spec.solver.polish_tol)
    res = model.residual()
    if res > 1e-8:
        raise AssemblyError(
            f"initialization residual {res:.3e} exceeds 1e-8 (worst state {model.worst_state()})")
    return model


def polish_equilibrium(model: DynamicModel, tol: float = 1e-10, max_iter: int = 20) -> float:
    """Damped Newton on f(x) = 0; minimum-norm steps handle the angle null space."""
    x = model.x0.copy()
    r = model.f(x)
    err = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if err <= tol:
            break
        J = model.jacobian(x)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        step = 1.0
        while step > 1e-4:
            xn = x + step * dx
            rn = model.f(xn)
            en = float(np.max(np.abs(rn)))
            if np.isfinite(en) and en < err:
                break
            step *= 0.5
        else:
            break
        x, r, err = xn, rn, en
    model.x0 = x
    return err


# ----------------------------------------------------------------------
@dataclass
class TimeSeries:
    t: np.ndarray
    names: list[str]
    data: np.ndarray  # (len(t), len(names))
    states: np.ndarray | None = None
    state_labels: list[str] | None = None

    def __post_init__(self):
        if self.data.shape != (len(self.t), len(self.names)):
            raise ValueError("channel lengths do not match the time grid")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.names.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["t_s", *self.names]) + "\n")
        for k in range(len(self.t)):
            buf.write(f"{self.t[k]:.6f}," + ",".join(f"{v:.12e}" for v in self.data[k]) + "\n")
        return buf.getvalue()

    def select(self, names: list[str]) -> "TimeSeries":
        idx = [self.names.index(n) for n in names]
        return TimeSeries(self.t, list(names), self.data[:, idx])


def _trapezoidal(model: DynamicModel, x0: np.ndarray, h: float, nsteps: int, rec_every: int):
    n = len(x0)
    x = np.array(x0, dtype=float)
    nrec = nsteps // rec_every + 1
    rec = np.empty((nrec, n))
    rec[0] = x
    r = 1
    J = model.jacobian(x)
    lu = scipy.linalg.lu_factor(np.eye(n) - 0.5 * h * J)
    fx = model.f(x)
    for step in range(1, nsteps + 1):
        xn = x + h * fx
        for it in range(30):
            fn = model.f(xn)
            g = xn - x - 0.5 * h * (fx + fn)
            d = scipy.linalg.lu_solve(lu, -g)
            xn = xn + d
            if np.max(np.abs(d)) < 1e-11:
                break
            if it == 10:
                J = model.jacobian(xn)
                lu = scipy.linalg.lu_factor(np.eye(n) - 0.5 * h * J)
        x = xn
        fx = model.f(x)
        if not np.all(np.isfinite(x)):
            return rec[:r], step, x
        if step % rec_every == 0:
            rec[r] = x
            r += 1
    return rec[:r], -1, x


def simulate(model: DynamicModel, events: list[Event] | tuple = (), t_end: float = 10.0,
             dt: float | None = None, record_interval: float | None = None,
             method: str | None = None, keep_states: bool = False,
             x0: np.ndarray | None = None) -> TimeSeries:
    """Integrate from the equilibrium (or ``x0``) with events applied exactly.

    Works on a copy of ``model``; the caller's references are untouched.
    Records lie on the uniform grid ``k * record_interval``.
    """
    solver = model.spec.solver
    dt = dt or solver.dt
    record_interval = record_interval or solver.record_interval
    method = method or solver.method
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    if method not in ("rk4", "trapezoidal"):
        raise ValueError(f"unknown method {method!r}")
    times = [e.time for e in events]
    if times != sorted(times):
        raise ValueError("events must be sorted by time")
    rec_every = max(1, int(round(record_interval / dt)))
    n_total = int(round(t_end / dt))
    m = model.copy()

    def run(x, h, nsteps, every):
        if method == "rk4":
            return m.kernel.rk4(x, h, nsteps, every)
        return _trapezoidal(m, x, h, nsteps, every)

    records: list[np.ndarray] = []
    x = np.array(model.x0 if x0 is None else x0, dtype=float)
    step = 0

    def check(bad, seg_start, h, xs):
        if bad >= 0:
            t_bad = seg_start + bad * h
            k = int(np.argmax(~np.isfinite(xs))) if not np.all(np.isfinite(xs)) else 0
            raise SimulationError(f"non-finite state {m.labels[k]} at t = {t_bad:.6f} s",
                                  t_bad, m.labels[k])

    def advance(x, s0, s1):
        """Full steps from grid index s0 to s1, recording on the record grid."""
        s = s0
        if s % rec_every and s < s1:
            nxt = min(s1, (s // rec_every + 1) * rec_every)
            rec, bad, x = run(x, dt, nxt - s, nxt - s)
            check(bad, s * dt, dt, x)
            if nxt % rec_every == 0:
                records.append(rec[-1])
            s = nxt
        full = s + ((s1 - s) // rec_every) * rec_every
        if full > s:
            rec, bad, x = run(x, dt, full - s, rec_every)
            check(bad, s * dt, dt, x)
            records.extend(rec[1:])
            s = full
        if s1 > s:
            rec, bad, x = run(x, dt, s1 - s, s1 - s + 1)
            check(bad, s * dt, dt, x)
            s = s1
        return x

    records.append(x.copy())
    for ev in events:
        if ev.time >= t_end:
            break
        s_ev = int(math.floor(ev.time / dt + 1e-9))
        x = advance(x, step, s_ev)
        step = s_ev
        frac = ev.time - s_ev * dt
        if frac > 1e-12 * max(1.0, ev.time):
            rec, bad, x = run(x, frac, 1, 1)
            check(bad, s_ev * dt, frac, x)
            m.apply(ev)
            rec, bad, x = run(x, dt - frac, 1, 1)
            check(bad, ev.time, dt - frac, x)
            step = s_ev + 1
            if step % rec_every == 0:
                records.append(x.copy())
        else:
            m.apply(ev)
    x = advance(x, step, n_total)

    xs = np.array(records)
    t = np.arange(len(xs)) * rec_every * dt
    # outputs see the model state (references, loads) in force at each record
    out = np.empty((len(xs), len(m.output_names)))
    m_out = model.copy()
    ev_iter = iter(events)
    pending = next(ev_iter, None)
    for k in range(len(xs)):
        while pending is not None and pending.time <= t[k] + 1e-12 and pending.time < t_end:
            m_out.apply(pending)
            pending = next(ev_iter, None)
        out[k] = m_out.outputs(xs[k])
    return TimeSeries(t, list(m.output_names), out,
                      xs if keep_states else None, list(m.labels) if keep_states else None)
