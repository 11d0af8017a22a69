"""System description and its JSON file format.

Every physical quantity in the file carries its base in the key name:
``*_pu_sys`` on the system base, ``*_pu_dev`` on the device rating, ``*_s``
for seconds, ``*_mva``/``*_kv``/``*_hz`` for engineering units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .devices.gfor import GforParams
from .devices.sg import Ac4aParams, Ieeeg1Params, SgParams
from .perunit import BranchSpec, BusSpec, NetworkError
from .pod import PodParams


@dataclass(frozen=True)
class BusData:
    id: str
    kind: str = "PQ"
    v_set: float = 1.0
    angle_deg: float = 0.0
    nominal_kv: float = 230.0
    b_shunt: float = 0.0  # system base; includes any dedicated capacitor bank


@dataclass(frozen=True)
class BranchData:
    id: str
    from_bus: str
    to_bus: str
    r: float = 0.0
    x: float = 0.1
    b: float = 0.0
    tap: float = 1.0


@dataclass(frozen=True)
class LoadData:
    """Constant-impedance load sized to draw ``p + jq`` at the power-flow voltage."""
    id: str
    bus: str
    p: float
    q: float = 0.0


@dataclass(frozen=True)
class SgEntry:
    name: str
    bus: str
    p: float  # dispatch, system base
    machine: SgParams = SgParams()
    exciter: Ac4aParams = Ac4aParams()
    governor: Ieeeg1Params = Ieeeg1Params()


@dataclass(frozen=True)
class GforEntry:
    name: str
    bus: str
    p: float  # dispatch, system base
    params: GforParams = GforParams()
    pod_p: PodParams | None = None
    pod_q: PodParams | None = None


@dataclass(frozen=True)
class SourceEntry:
    """Ideal voltage behind an impedance (infinite bus); sits on the slack bus."""
    name: str
    bus: str
    r: float = 0.0
    x: float = 0.01


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 50e-6
    record_interval: float = 1e-3
    method: str = "rk4"
    pf_tol: float = 1e-8
    polish_tol: float = 1e-10


@dataclass(frozen=True)
class SystemSpec:
    base_mva: float = 100.0
    base_kv: float = 230.0
    f_hz: float = 50.0
    buses: tuple[BusData, ...] = ()
    branches: tuple[BranchData, ...] = ()
    loads: tuple[LoadData, ...] = ()
    sg: tuple[SgEntry, ...] = ()
    gfor: tuple[GforEntry, ...] = ()
    sources: tuple[SourceEntry, ...] = ()
    solver: SolverSettings = SolverSettings()

    # ------------------------------------------------------------------
    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus id")
        known = set(ids)
        names = [d.name for d in (*self.sg, *self.gfor, *self.sources)]
        if len(set(names)) != len(names):
            raise NetworkError("duplicate device name")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise NetworkError(f"branch {br.id} references unknown bus {end!r}")
        for item in (*self.loads, *self.sg, *self.gfor, *self.sources):
            if item.bus not in known:
                raise NetworkError(f"{getattr(item, 'name', getattr(item, 'id', '?'))} "
                                   f"references unknown bus {item.bus!r}")
        kinds = {b.id: b.kind for b in self.buses}
        for d in (*self.sg, *self.gfor, *self.sources):
            if kinds[d.bus] == "PQ":
                raise NetworkError(f"device {d.name} sits on PQ bus {d.bus}; use PV or slack")
        for b in self.buses:
            if kinds[b.id] != "PQ" and not self.devices_at(b.id):
                raise NetworkError(f"{b.kind} bus {b.id} has no voltage-controlling device")
        for s in self.sources:
            if kinds[s.bus] != "slack" or len(self.devices_at(s.bus)) != 1:
                raise NetworkError(f"source {s.name} must be alone on the slack bus")
        for d in (*self.sg, *self.gfor):
            if abs(d.p) > (d.machine.rating_mva if isinstance(d, SgEntry)
                           else d.params.rating_mva) / self.base_mva * 1.0001:
                raise NetworkError(f"dispatch of {d.name} exceeds its rating")

    def devices_at(self, bus: str) -> list:
        return [d for d in (*self.sg, *self.gfor, *self.sources) if d.bus == bus]

    def bus(self, bus_id: str) -> BusData:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def rating(self, name: str) -> float:
        for d in self.sg:
            if d.name == name:
                return d.machine.rating_mva
        for d in self.gfor:
            if d.name == name:
                return d.params.rating_mva
        raise KeyError(name)

    def network(self) -> tuple[list[BusSpec], list[BranchSpec]]:
        """Bus and branch records for the power flow (injections filled in)."""
        p_inj = {b.id: 0.0 for b in self.buses}
        q_inj = {b.id: 0.0 for b in self.buses}
        for ld in self.loads:
            p_inj[ld.bus] -= ld.p
            q_inj[ld.bus] -= ld.q
        for d in (*self.sg, *self.gfor):
            p_inj[d.bus] += d.p
        for d in self.sg:
            g = snubber_conductance(d, self.base_mva)
            if g:
                p_inj[d.bus] -= g * self.bus(d.bus).v_set ** 2
        buses = [BusSpec(b.id, b.kind, b.nominal_kv, b.v_set, math.radians(b.angle_deg),
                         p_inj[b.id], q_inj[b.id], b.b_shunt) for b in self.buses]
        branches = [BranchSpec(br.from_bus, br.to_bus, br.r, br.x, br.b, br.tap, br.id)
                    for br in self.branches]
        return buses, branches

    def with_branch(self, branch_id: str, **kw) -> "SystemSpec":
        if branch_id not in {b.id for b in self.branches}:
            raise KeyError(f"no branch {branch_id!r}")
        return replace(self, branches=tuple(
            replace(b, **kw) if b.id == branch_id else b for b in self.branches))

    def with_gfor(self, name: str, **kw) -> "SystemSpec":
        if name not in {g.name for g in self.gfor}:
            raise KeyError(f"no converter {name!r}")
        return replace(self, gfor=tuple(
            replace(g, **kw) if g.name == name else g for g in self.gfor))

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "base": {"s_mva": self.base_mva, "v_kv": self.base_kv, "f_hz": self.f_hz},
            "buses": [_dump(b, _BUS_KEYS) for b in self.buses],
            "branches": [_dump(b, _BRANCH_KEYS) for b in self.branches],
            "loads": [_dump(ld, _LOAD_KEYS) for ld in self.loads],
            "sg": [{
                "name": d.name, "bus": d.bus, "p_pu_sys": d.p,
                "machine": _dump(d.machine, _SG_KEYS),
                "exciter": _dump(d.exciter, _AC4A_KEYS),
                "governor": _dump(d.governor, _GOV_KEYS),
            } for d in self.sg],
            "gfor": [{
                "name": d.name, "bus": d.bus, "p_pu_sys": d.p,
                "params": _dump(d.params, _GFOR_KEYS),
                "pod_p": _dump(d.pod_p, _POD_KEYS) if d.pod_p else None,
                "pod_q": _dump(d.pod_q, _POD_KEYS) if d.pod_q else None,
            } for d in self.gfor],
            "sources": [_dump(s, _SOURCE_KEYS) for s in self.sources],
            "solver": _dump(self.solver, _SOLVER_KEYS),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        base = d.get("base", {})
        return cls(
            base_mva=base.get("s_mva", 100.0), base_kv=base.get("v_kv", 230.0),
            f_hz=base.get("f_hz", 50.0),
            buses=tuple(_load(BusData, b, _BUS_KEYS) for b in d.get("buses", [])),
            branches=tuple(_load(BranchData, b, _BRANCH_KEYS) for b in d.get("branches", [])),
            loads=tuple(_load(LoadData, b, _LOAD_KEYS) for b in d.get("loads", [])),
            sg=tuple(SgEntry(
                e["name"], e["bus"], e["p_pu_sys"],
                _load(SgParams, e.get("machine", {}), _SG_KEYS),
                _load(Ac4aParams, e.get("exciter", {}), _AC4A_KEYS),
                _load(Ieeeg1Params, e.get("governor", {}), _GOV_KEYS),
            ) for e in d.get("sg", [])),
            gfor=tuple(GforEntry(
                e["name"], e["bus"], e["p_pu_sys"],
                _load(GforParams, e.get("params", {}), _GFOR_KEYS),
                _load(PodParams, e["pod_p"], _POD_KEYS) if e.get("pod_p") else None,
                _load(PodParams, e["pod_q"], _POD_KEYS) if e.get("pod_q") else None,
            ) for e in d.get("gfor", [])),
            sources=tuple(_load(SourceEntry, s, _SOURCE_KEYS) for s in d.get("sources", [])),
            solver=_load(SolverSettings, d.get("solver", {}), _SOLVER_KEYS),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SystemSpec":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SystemSpec":
        return cls.from_json(Path(path).read_text())


def snubber_conductance(entry: SgEntry, base_mva: float) -> float:
    """Terminal snubber conductance on the system base (0 when disabled)."""
    r = entry.machine.r_snubber
    return 0.0 if r is None else (entry.machine.rating_mva / base_mva) / r


# field -> key in the file; unlisted fields keep their own name
_BUS_KEYS = {"v_set": "v_set_pu", "b_shunt": "b_shunt_pu_sys"}
_BRANCH_KEYS = {"from_bus": "from", "to_bus": "to", "r": "r_pu_sys", "x": "x_pu_sys",
                "b": "b_pu_sys"}
_LOAD_KEYS = {"p": "p_pu_sys", "q": "q_pu_sys"}
_SOURCE_KEYS = {"r": "r_pu_sys", "x": "x_pu_sys"}
_SOLVER_KEYS = {"dt": "dt_s", "record_interval": "record_interval_s"}
_PU_DEV = ("rs", "xl", "xd", "xd_prime", "xd_dprime", "xq", "xq_prime", "xq_dprime",
           "rtr", "xtr", "d", "r_snubber", "efd_min", "efd_max", "r", "rc", "xc", "bc",
           "iq_max", "id_max", "rf", "rv", "k", "limit")
_SEC = ("td0_prime", "td0_dprime", "tq0_prime", "tq0_dprime", "h", "ta", "tb", "tc",
        "t1", "t2", "t3", "t4", "t5", "t6", "t7", "tau_cc", "tau_vac", "tau_ff",
        "tau_p", "tau_q", "t_f", "t_w", "t_s1", "t_s2")


def _unit_keys(cls, exclude=()) -> dict[str, str]:
    out = {}
    for f in fields(cls):
        if f.name in exclude:
            continue
        if f.name in _PU_DEV:
            out[f.name] = f.name + "_pu_dev"
        elif f.name in _SEC:
            out[f.name] = f.name + "_s"
    return out


_SG_KEYS = _unit_keys(SgParams)
_AC4A_KEYS = _unit_keys(Ac4aParams)
_GOV_KEYS = _unit_keys(Ieeeg1Params, exclude=("k",))
_GFOR_KEYS = _unit_keys(GforParams)
_POD_KEYS = _unit_keys(PodParams)


def _dump(obj, keys: dict[str, str]) -> dict[str, Any]:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[keys.get(f.name, f.name)] = list(v) if isinstance(v, tuple) else v
    return out


def _load(cls, d: dict, keys: dict[str, str]):
    inv = {v: k for k, v in keys.items()}
    names = {f.name for f in fields(cls)}
    kw = {}
    for k, v in d.items():
        name = inv.get(k, k)
        if name not in names:
            raise ValueError(f"unknown field {k!r} for {cls.__name__}")
        kw[name] = tuple(v) if isinstance(v, list) else v
    return cls(**kw)


__all__ = [
    "BranchData", "BusData", "GforEntry", "LoadData", "SgEntry", "SolverSettings",
    "SourceEntry", "SystemSpec", "snubber_conductance",
]
