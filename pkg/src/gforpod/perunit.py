"""Per-unit network model: admittance matrix, Newton power flow, load conversion.

Conventions
-----------
All quantities are per unit on the system base.  Branch shunt susceptance
``b`` is the total line charging, split half per end (pi model).  An off-nominal
tap ``t`` sits on the ``from`` side: ``i = y (v_from / t - v_to)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class NetworkError(ValueError):
    """Malformed network description."""


class PowerFlowError(RuntimeError):
    """Newton iteration failed to converge."""

    def __init__(self, message: str, mismatch_history: list[float]):
        super().__init__(message)
        self.mismatch_history = mismatch_history


@dataclass(frozen=True)
class BusSpec:
    id: str
    kind: str = "PQ"  # "slack" | "PV" | "PQ"
    nominal_kv: float = 230.0
    v_set: float = 1.0
    v_angle: float = 0.0  # rad; used at the slack bus only
    p_inj: float = 0.0
    q_inj: float = 0.0
    b_shunt: float = 0.0

    def __post_init__(self):
        if self.kind not in ("slack", "PV", "PQ"):
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        if self.v_set <= 0:
            raise NetworkError(f"bus {self.id}: v_set must be positive")


@dataclass(frozen=True)
class BranchSpec:
    from_bus: str
    to_bus: str
    r: float = 0.0
    x: float = 0.1
    b: float = 0.0
    tap: float = 1.0
    id: str = ""

    def __post_init__(self):
        if self.r == 0.0 and self.x == 0.0:
            raise NetworkError(f"branch {self.label}: zero series impedance")
        if self.tap <= 0:
            raise NetworkError(f"branch {self.label}: tap must be positive")

    @property
    def label(self) -> str:
        return self.id or f"{self.from_bus}-{self.to_bus}"

    @property
    def y_series(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass
class PowerFlowSolution:
    bus_ids: list[str]
    vm: np.ndarray
    va: np.ndarray
    p: np.ndarray
    q: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    mismatch_history: list[float] = field(default_factory=list)

    @property
    def v(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    def index(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)

    def voltage(self, bus_id: str) -> complex:
        return complex(self.v[self.index(bus_id)])

    def to_csv(self) -> str:
        lines = ["bus,Vmag,Vang_deg,P_pu,Q_pu"]
        for k, b in enumerate(self.bus_ids):
            lines.append(
                f"{b},{self.vm[k]:.10f},{np.degrees(self.va[k]):.10f},"
                f"{self.p[k]:.10f},{self.q[k]:.10f}"
            )
        return "\n".join(lines) + "\n"


def build_admittance(buses: Sequence[BusSpec], branches: Sequence[BranchSpec]) -> np.ndarray:
    """Complex nodal admittance matrix including branch charging and bus shunts."""
    idx = {b.id: k for k, b in enumerate(buses)}
    n = len(buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in branches:
        for end in (br.from_bus, br.to_bus):
            if end not in idx:
                raise NetworkError(f"branch {br.label} references unknown bus {end!r}")
        f, t = idx[br.from_bus], idx[br.to_bus]
        y = br.y_series
        ysh = 0.5j * br.b
        Y[f, f] += y / br.tap**2 + ysh
        Y[t, t] += y + ysh
        Y[f, t] -= y / br.tap
        Y[t, f] -= y / br.tap
    for k, b in enumerate(buses):
        Y[k, k] += 1j * b.b_shunt
    return Y


def _mismatch(Y, v, p_sched, q_sched):
    s = v * np.conj(Y @ v)
    return p_sched - s.real, q_sched - s.imag


def solve_powerflow(
    buses: Sequence[BusSpec],
    branches: Sequence[BranchSpec],
    tol: float = 1e-8,
    max_iter: int = 50,
) -> PowerFlowSolution:
    """Polar Newton-Raphson from a flat start.

    Slack and PV magnitudes start at their set points; angles start at the
    slack angle.  On convergence the
    returned ``p``/``q`` are the computed net injections at every bus.
    """
    kinds = [b.kind for b in buses]
    if kinds.count("slack") != 1:
        raise NetworkError("exactly one slack bus is required")
    Y = build_admittance(buses, branches)
    n = len(buses)
    vm = np.array([b.v_set if b.kind != "PQ" else 1.0 for b in buses], dtype=float)
    va = np.full(n, sum(b.v_angle for b in buses if b.kind == "slack"), dtype=float)
    p_sched = np.array([b.p_inj for b in buses])
    q_sched = np.array([b.q_inj for b in buses])

    pv_pq = [k for k in range(n) if kinds[k] != "slack"]
    pq = [k for k in range(n) if kinds[k] == "PQ"]
    npv = len(pv_pq)

    history: list[float] = []
    converged = False
    it = 0
    for it in range(max_iter + 1):
        v = vm * np.exp(1j * va)
        dp, dq = _mismatch(Y, v, p_sched, q_sched)
        f = np.concatenate([dp[pv_pq], dq[pq]])
        err = float(np.max(np.abs(f))) if f.size else 0.0
        history.append(err)
        if err <= tol:
            converged = True
            break
        if it == max_iter:
            break
        # Jacobian of S = diag(v) conj(Y v) w.r.t. angle and magnitude
        ibus = Y @ v
        dS_dva = 1j * np.diag(v) @ np.conj(np.diag(ibus) - Y @ np.diag(v))
        dS_dvm = np.diag(v) @ np.conj(Y @ np.diag(v / vm)) + np.diag(v / vm) @ np.diag(np.conj(ibus))
        J = np.block([
            [dS_dva.real[np.ix_(pv_pq, pv_pq)], dS_dvm.real[np.ix_(pv_pq, pq)]],
            [dS_dva.imag[np.ix_(pq, pv_pq)], dS_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, f)
        va[pv_pq] += dx[:npv]
        vm[pq] += dx[npv:]

    v = vm * np.exp(1j * va)
    s = v * np.conj(Y @ v)
    sol = PowerFlowSolution(
        bus_ids=[b.id for b in buses], vm=vm.copy(), va=va.copy(),
        p=s.real.copy(), q=s.imag.copy(), converged=converged,
        iterations=it, max_mismatch=history[-1], mismatch_history=history,
    )
    if not converged:
        raise PowerFlowError(
            f"power flow did not converge in {max_iter} iterations "
            f"(mismatch {history[-1]:.3e})", history)
    return sol


def branch_flow(sol: PowerFlowSolution, br: BranchSpec) -> tuple[complex, complex]:
    """Complex power entering the branch at its from and to ends."""
    vf, vt = sol.voltage(br.from_bus), sol.voltage(br.to_bus)
    y = br.y_series
    i_f = y * (vf / br.tap**2 - vt / br.tap) + 0.5j * br.b * vf
    i_t = y * (vt - vf / br.tap) + 0.5j * br.b * vt
    return vf * np.conj(i_f), vt * np.conj(i_t)


def load_to_impedance(v: complex | float, p: float, q: float) -> complex | None:
    """Series impedance drawing ``p + jq`` at voltage ``v``; ``None`` if unloaded."""
    if abs(v) <= 0:
        raise NetworkError("load bus voltage must be positive")
    if p == 0.0 and q == 0.0:
        return None
    return abs(v) ** 2 / complex(p, -q)


def to_system_base(value_pu_dev: float, s_dev: float, s_sys: float,
                   kind: str = "impedance") -> float:
    """Convert a device-base quantity to the system base (same voltage base)."""
    ratio = s_sys / s_dev
    if kind == "impedance":
        return value_pu_dev * ratio
    if kind in ("admittance", "power", "current"):
        return value_pu_dev / ratio
    raise ValueError(kind)


def to_device_base(value_pu_sys: float, s_dev: float, s_sys: float,
                   kind: str = "impedance") -> float:
    return to_system_base(value_pu_sys, s_sys, s_dev, kind)


F_NOMINAL_HZ = 50.0
OMEGA_BASE = 2.0 * np.pi * F_NOMINAL_HZ
