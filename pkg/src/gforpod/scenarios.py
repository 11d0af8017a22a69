"""Benchmark builders, the five-scenario comparison and line-reactance sweeps."""
from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import assemble
from .design import DesignSpec, design_pod
from .devices.gfor import GforParams
from .devices.sg import SgParams
from .modal import Mode, TrackResult, format_number, eigen_analysis, linearize, select_mode, track_modes
from .pod import PodParams
from .system import (
    BranchData, BusData, GforEntry, LoadData, SgEntry, SystemSpec,
)

TWO_AREA_LINE = "L23"


@dataclass(frozen=True)
class TwoAreaOptions:
    """Knobs of the two-area benchmark (defaults give the design point)."""
    with_gfor: bool = True
    gfor_bus: str = "2"
    sg_h: float = 4.0
    sg_d: float = 0.0
    line_r_over_x: float = 0.1
    bus_capacitance: float = 2.0  # system base, per bus
    load_power_factor: float = 1.0
    sg1_mva: float = 1500.0
    sg2_mva: float = 5000.0
    gfor_mva: float = 1500.0
    unit_mw: float = 1350.0
    line_flow_mw: float = 100.0
    area2_load_mw: float = 4600.0
    gfor_params: GforParams = GforParams()


def _load(id_: str, bus: str, p: float, pf: float) -> LoadData:
    q = 0.0 if pf >= 1.0 else p * ((1.0 / pf ** 2 - 1.0) ** 0.5)
    return LoadData(id_, bus, p, q)


def build_two_area(x_l: float = 0.1, options: TwoAreaOptions | None = None) -> SystemSpec:
    """Two machines joined by one line: SG1 (plus the converter) at bus 2,
    SG2 at bus 3 as the slack.

    Bus-2 load is sized so the stated flow leaves bus 2 over the line.  Without
    the converter the bus-2 load drops by the converter dispatch so the flow is
    unchanged.
    """
    if not 0.0 < x_l < 10.0:
        raise ValueError("line reactance must lie in (0, 10) pu")
    o = options or TwoAreaOptions()
    base = 100.0
    unit = o.unit_mw / base
    gen2 = 2.0 * unit if o.with_gfor else unit
    load2 = gen2 - o.line_flow_mw / base
    sg_m = SgParams(rating_mva=o.sg1_mva, h=o.sg_h, d=o.sg_d)
    sg2_m = SgParams(rating_mva=o.sg2_mva, h=o.sg_h, d=o.sg_d)
    buses = (
        BusData("2", "PV", 1.0, b_shunt=o.bus_capacitance),
        BusData("3", "slack", 1.0, b_shunt=o.bus_capacitance),
    )
    branches = (BranchData(TWO_AREA_LINE, "2", "3", r=o.line_r_over_x * x_l, x=x_l),)
    loads = (
        _load("LD2", "2", load2, o.load_power_factor),
        _load("LD3", "3", o.area2_load_mw / base, o.load_power_factor),
    )
    sg = (SgEntry("SG1", "2", unit, sg_m), SgEntry("SG2", "3", 0.0, sg2_m))
    gfor = ()
    if o.with_gfor:
        gfor = (GforEntry(f"GFOR{o.gfor_bus}", o.gfor_bus, unit,
                          replace(o.gfor_params, rating_mva=o.gfor_mva)),)
    return SystemSpec(buses=buses, branches=branches, loads=loads, sg=sg, gfor=gfor)


# -- generation-unit surgery ------------------------------------------------
def remove_converter(spec: SystemSpec, name: str) -> SystemSpec:
    """Drop a converter and cut the loads on its bus by its dispatch, so every
    other injection and the line flows stay as they were."""
    conv = next((g for g in spec.gfor if g.name == name), None)
    if conv is None:
        raise KeyError(f"no converter {name!r}")
    at_bus = [ld for ld in spec.loads if ld.bus == conv.bus]
    total = sum(ld.p for ld in at_bus)
    if at_bus and total <= conv.p:
        raise ValueError(f"loads at bus {conv.bus} are smaller than the converter dispatch")
    loads = []
    for ld in spec.loads:
        if ld.bus == conv.bus:
            s = (total - conv.p) / total
            ld = replace(ld, p=ld.p * s, q=ld.q * s)
        loads.append(ld)
    if not at_bus and conv.p:
        loads.append(LoadData(f"LD{conv.bus}", conv.bus, -conv.p))
    return replace(spec, loads=tuple(loads), gfor=tuple(g for g in spec.gfor if g.name != name))


def split_generation_unit(spec: SystemSpec, bus: str, alpha: float,
                          gfor_params: GforParams | None = None) -> SystemSpec:
    """Share the generation unit at ``bus`` between an SG (``1 - alpha``) and a
    converter (``alpha``), keeping its total rating and dispatch.

    Per-unit device parameters stay on each device's own (rescaled) base.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    sgs = [d for d in spec.sg if d.bus == bus]
    gfs = [d for d in spec.gfor if d.bus == bus]
    if len(sgs) > 1 or len(gfs) > 1 or not (sgs or gfs):
        raise ValueError(f"bus {bus} must hold one SG and/or one converter")
    sg0 = sgs[0] if sgs else None
    gf0 = gfs[0] if gfs else None
    rating = (sg0.machine.rating_mva if sg0 else 0.0) + (gf0.params.rating_mva if gf0 else 0.0)
    p_tot = (sg0.p if sg0 else 0.0) + (gf0.p if gf0 else 0.0)
    sg_list = [d for d in spec.sg if d.bus != bus]
    gf_list = [d for d in spec.gfor if d.bus != bus]
    if alpha < 1.0:
        base = sg0 or SgEntry(f"SG{bus}", bus, 0.0)
        sg_list.append(replace(base, p=(1 - alpha) * p_tot,
                               machine=replace(base.machine, rating_mva=(1 - alpha) * rating)))
    if alpha > 0.0:
        base = gf0 or GforEntry(f"GFOR{bus}", bus, 0.0, gfor_params or GforParams())
        gf_list.append(replace(base, p=alpha * p_tot,
                               params=replace(base.params, rating_mva=alpha * rating)))
    order = {d.name: k for k, d in enumerate((*spec.sg, *spec.gfor))}
    key = lambda d: order.get(d.name, len(order))  # noqa: E731
    return replace(spec, sg=tuple(sorted(sg_list, key=key)),
                   gfor=tuple(sorted(gf_list, key=key)))


# -- scenario matrix ----------------------------------------------------------
SCENARIOS = ("Base", "SG+GFOR", "POD-P", "POD-Q", "POD-PQ")
_TOGGLES = {
    "Base": (False, False, False),
    "SG+GFOR": (True, False, False),
    "POD-P": (True, True, False),
    "POD-Q": (True, False, True),
    "POD-PQ": (True, True, True),
}


@dataclass(frozen=True)
class ModeSelection:
    f_lo: float = 0.2
    f_hi: float = 2.0
    min_speed_participation: float = 0.2


@dataclass(frozen=True)
class ScenarioMatrix:
    """Scenario variants of one system with a single converter under study.

    ``system`` is the SG+GFOR configuration without PODs; the POD settings
    are applied by toggles, and ``Base`` removes the converter.
    """
    system: SystemSpec
    converter: str
    pod_p: PodParams | None = None
    pod_q: PodParams | None = None
    scenarios: tuple[str, ...] = SCENARIOS
    selection: ModeSelection = ModeSelection()

    def __post_init__(self):
        unknown = [s for s in self.scenarios if s not in _TOGGLES]
        if unknown:
            raise ValueError(f"unknown scenarios {unknown}")
        if self.converter not in {g.name for g in self.system.gfor}:
            raise ValueError(f"no converter {self.converter!r}")

    def variant(self, name: str) -> SystemSpec:
        gfor_on, p_on, q_on = _TOGGLES[name]
        if not gfor_on:
            return remove_converter(self.system, self.converter)
        if (p_on and self.pod_p is None) or (q_on and self.pod_q is None):
            raise ValueError(f"scenario {name} needs a designed POD for each enabled channel")
        return self.system.with_gfor(self.converter, pod_p=self.pod_p if p_on else None,
                                     pod_q=self.pod_q if q_on else None)

    def with_designs(self, design: DesignSpec | None = None,
                     backend: str | None = None) -> tuple["ScenarioMatrix", dict]:
        """Design both channels separately on the POD-free system."""
        ds = design or DesignSpec()
        reports = {}
        pods = {}
        for ch in ("P", "Q"):
            pod, rep = design_pod(self.system, replace(ds, channel=ch, converter=self.converter))
            pods[ch], reports[ch] = pod, rep
        return replace(self, pod_p=pods["P"], pod_q=pods["Q"]), reports

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ScenarioMatrix":
        sysd = d["system"]
        if isinstance(sysd, str):
            system = SystemSpec.load((base_dir or Path(".")) / sysd)
        else:
            system = SystemSpec.from_dict(sysd)
        sel = d.get("selection", {})
        return cls(
            system=system,
            converter=d.get("converter") or system.gfor[0].name,
            pod_p=PodParams.from_dict(d["pod_p"]) if d.get("pod_p") else None,
            pod_q=PodParams.from_dict(d["pod_q"]) if d.get("pod_q") else None,
            scenarios=tuple(d.get("scenarios", SCENARIOS)),
            selection=ModeSelection(**sel),
        )


@dataclass
class ScenarioResult:
    scenario: str
    n_states: int = 0
    modes: list[Mode] = field(default_factory=list)  # electromechanical candidates
    labels: list[str] = field(default_factory=list)
    selected: Mode | None = None
    error: str = ""
    oscillatory: list[Mode] = field(default_factory=list)  # filled on request

    @property
    def ok(self) -> bool:
        return not self.error and self.selected is not None


def electromechanical_modes(modes, labels, sel: ModeSelection) -> list[Mode]:
    return [m for m in modes if sel.f_lo <= m.frequency_hz <= sel.f_hi
            and m.participation_of(labels, ".omega") >= sel.min_speed_participation]


def analyse(spec: SystemSpec, sel: ModeSelection, name: str = "",
            backend: str | None = None, f_max: float | None = None) -> ScenarioResult:
    """Modes of one configuration; failures land in ``error``.

    With ``f_max`` set, every oscillatory mode up to that frequency is kept too.
    """
    try:
        model = assemble(spec, backend=backend)
        lin = linearize(model, inputs=[])
        modes = eigen_analysis(lin)
        labels = lin.state_labels
        chosen = select_mode(modes, labels, sel.f_lo, sel.f_hi, sel.min_speed_participation)
        osc = [] if f_max is None else [m for m in modes
                                        if m.omega > 0 and m.frequency_hz <= f_max]
        return ScenarioResult(name, len(labels), electromechanical_modes(modes, labels, sel),
                              list(labels), chosen, oscillatory=osc)
    except (LookupError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        return ScenarioResult(name, error=f"{type(exc).__name__}: {exc}")


def _analyse_job(args):
    return analyse(*args)


def _ordered_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_scenarios(matrix: ScenarioMatrix, workers: int = 1,
                  backend: str | None = None) -> list[ScenarioResult]:
    """One result per scenario, in matrix order; a failing scenario does not
    stop the others."""
    jobs = []
    early = {}
    for name in matrix.scenarios:
        try:
            jobs.append((matrix.variant(name), matrix.selection, name, backend))
        except (ValueError, KeyError) as exc:
            early[name] = ScenarioResult(name, error=f"{type(exc).__name__}: {exc}")
    done = {r.scenario: r for r in _ordered_map(_analyse_job, jobs, workers)}
    done.update(early)
    return [done[name] for name in matrix.scenarios]


def comparison_csv(results: list[ScenarioResult]) -> str:
    buf = io.StringIO()
    buf.write("scenario,n_states,selected,re_1_s,im_rad_s,f_hz,damping_pct,error\n")
    for r in results:
        if not r.ok:
            buf.write(f"{r.scenario},{r.n_states},,,,,,\"{r.error}\"\n")
            continue
        for m in r.modes:
            sel = int(m.index == r.selected.index)
            buf.write(f"{r.scenario},{r.n_states},{sel},{format_number(m.sigma)},{format_number(m.omega)},"
                      f"{format_number(m.frequency_hz)},{format_number(100 * m.damping)},\n")
    return buf.getvalue()


# -- parameter sweeps -----------------------------------------------------------
_PATH_KINDS = ("branch", "bus", "load", "sg", "gfor")


def _find_branch(spec: SystemSpec, key: str) -> str:
    ids = {b.id for b in spec.branches}
    if key in ids:
        return key
    if "-" in key:
        a, b = key.split("-", 1)
        hits = [br.id for br in spec.branches if {br.from_bus, br.to_bus} == {a, b}]
        if len(hits) == 1:
            return hits[0]
    raise KeyError(f"no unique branch {key!r}")


def set_parameter(spec: SystemSpec, path: str, value: float) -> SystemSpec:
    """Return ``spec`` with the field named by ``kind:id:field`` set to ``value``.

    Branch ids may also be written ``from-to``; ``sg`` fields reach the machine
    parameters, ``gfor`` fields the converter parameters.
    """
    parts = path.split(":")
    if len(parts) != 3 or parts[0] not in _PATH_KINDS:
        raise ValueError(f"parameter path {path!r} is not kind:id:field with kind in {_PATH_KINDS}")
    kind, key, name = parts
    value = float(value)
    if kind == "branch":
        return spec.with_branch(_find_branch(spec, key), **{name: value})
    if kind == "bus":
        spec.bus(key)
        return replace(spec, buses=tuple(replace(b, **{name: value}) if b.id == key else b
                                         for b in spec.buses))
    if kind == "load":
        if key not in {ld.id for ld in spec.loads}:
            raise KeyError(f"no load {key!r}")
        return replace(spec, loads=tuple(replace(ld, **{name: value}) if ld.id == key else ld
                                         for ld in spec.loads))
    if kind == "sg":
        hits = [d for d in spec.sg if d.name == key]
        if not hits:
            raise KeyError(f"no SG {key!r}")
        new = (replace(hits[0], p=value) if name == "p"
               else replace(hits[0], machine=replace(hits[0].machine, **{name: value})))
        return replace(spec, sg=tuple(new if d.name == key else d for d in spec.sg))
    hits = [d for d in spec.gfor if d.name == key]
    if not hits:
        raise KeyError(f"no converter {key!r}")
    new = (replace(hits[0], p=value) if name == "p"
           else replace(hits[0], params=replace(hits[0].params, **{name: value})))
    return replace(spec, gfor=tuple(new if d.name == key else d for d in spec.gfor))


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma list."""
    if ":" in text:
        a, b, n = text.split(":")
        n = int(n)
        if n < 1:
            raise ValueError("grid needs at least one point")
        return tuple(float(v) for v in np.linspace(float(a), float(b), n))
    return tuple(float(v) for v in text.split(","))


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    grid: tuple[float, ...]
    selection: ModeSelection = ModeSelection()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.size == 0:
            raise ValueError("sweep grid is empty")
        d = np.diff(g)
        if g.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep grid must be strictly monotone")


@dataclass
class SweepPoint:
    value: float
    result: ScenarioResult


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[SweepPoint]
    tracking: TrackResult | None
    tracked_index: list[int]  # sweep-point index of each tracked (successful) point
    em_trajectory: list[int | None]  # trajectory holding the selected mode, per point
    splits: list[tuple[int, list[int]]]  # (point, [trajectory before, trajectory after])

    def tracked_mode(self, k: int) -> Mode | None:
        """The electromechanical mode followed from the first successful point."""
        if self.tracking is None or k not in self.tracked_index:
            return None
        tid = self.em_trajectory[self.tracked_index[0]]
        for pk, m in self.tracking.trajectories[tid].points:
            if self.tracked_index[pk] == k:
                return m
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("point,value,trajectory,re_1_s,im_rad_s,f_hz,damping_pct,"
                  "electromechanical,selected,event,error\n")
        pos = {k: j for j, k in enumerate(self.tracked_index)}
        split_at = {k: set(t) for k, t in self.splits}
        for k, p in enumerate(self.points):
            v = format_number(p.value)
            if not p.result.ok:
                buf.write(f"{k},{v},,,,,,,,,\"{p.result.error}\"\n")
                continue
            em = {m.index for m in p.result.modes}
            amap = self.tracking.assignment[pos[k]]
            for m in p.result.oscillatory:
                tid = amap[m.index]
                ev = "split" if tid in split_at.get(k, ()) else ""
                buf.write(f"{k},{v},{tid},{format_number(m.sigma)},{format_number(m.omega)},"
                          f"{format_number(m.frequency_hz)},{format_number(100 * m.damping)},"
                          f"{int(m.index in em)},{int(m.index == p.result.selected.index)},"
                          f"{ev},\n")
        return buf.getvalue()


def run_sweep(system: SystemSpec, sweep: SweepSpec, workers: int = 1,
              backend: str | None = None, f_max: float = 5.0) -> SweepResult:
    """Modes of ``system`` at every grid value, tracked across the grid.

    Oscillatory modes up to ``f_max`` Hz are tracked.  A split is reported
    where the selected (least-damped electromechanical) mode moves to another
    trajectory: from there on the mode family runs along two branches.
    """
    jobs = []
    for v in sweep.grid:
        jobs.append((set_parameter(system, sweep.parameter, v), sweep.selection,
                     sweep.parameter, backend, f_max))
    out = _ordered_map(_analyse_job, jobs, workers)
    points = [SweepPoint(v, res) for v, res in zip(sweep.grid, out)]
    ok = [k for k, p in enumerate(points) if p.result.ok]
    if not ok:
        return SweepResult(sweep, points, None, [], [None] * len(points), [])
    tracking = track_modes([(points[k].result.oscillatory, points[k].result.labels) for k in ok])
    em_traj: list[int | None] = [None] * len(points)
    splits = []
    for j, k in enumerate(ok):
        em_traj[k] = tracking.assignment[j].get(points[k].result.selected.index)
        if j and em_traj[k] != em_traj[ok[j - 1]]:
            splits.append((k, [em_traj[ok[j - 1]], em_traj[k]]))
    return SweepResult(sweep, points, tracking, ok, em_traj, splits)
