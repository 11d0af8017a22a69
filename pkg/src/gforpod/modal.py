"""Linearization, eigen-analysis, participation factors and mode tracking."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ._numdiff import central_jacobian


class LinearizationError(RuntimeError):
    pass


@dataclass
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: list[str]
    input_names: list[str] = field(default_factory=list)
    output_names: list[str] = field(default_factory=list)
    x0: np.ndarray | None = None
    y0: np.ndarray | None = None

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if len(self.state_labels) != n:
            raise ValueError("state labels do not match A")

    @classmethod
    def from_matrix(cls, A: np.ndarray, labels: Sequence[str] | None = None) -> "LinearModel":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        labels = list(labels) if labels is not None else [f"x{k}" for k in range(n)]
        return cls(A, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0)), labels)

    def step_response(self, input_name: str, amplitude: float, t: np.ndarray) -> np.ndarray:
        """Output deviations for a step of ``amplitude`` on one input at t = 0.

        Exact zero-order-hold discretization on the uniform grid ``t``.
        """
        j = self.input_names.index(input_name)
        n = self.A.shape[0]
        h = float(t[1] - t[0])
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = self.A * h
        M[:n, n] = self.B[:, j] * h
        E = scipy.linalg.expm(M)
        Ad, bd = E[:n, :n], E[:n, n] * amplitude
        x = np.zeros(n)
        y = np.empty((len(t), self.C.shape[0]))
        du = self.D[:, j] * amplitude
        for k in range(len(t)):
            y[k] = self.C @ x + du
            x = Ad @ x + bd
        return y


def _default_inputs(model) -> list[str]:
    names = []
    for name, (kind, _) in model.device_rows.items():
        chans = ("v_ref", "p_ref") if kind == "sg" else ("p_ref", "q_ref")
        names += [f"{name}.{c}" for c in chans]
    buses = []
    for ld in model.spec.loads:
        if ld.bus not in buses:
            buses.append(ld.bus)
    names += [f"load.{b}.scale" for b in buses]
    return names


def _input_setter(model, name: str):
    head, _, chan = name.rpartition(".")
    if head.startswith("load."):
        bus = head[len("load."):]
        return lambda m, u: m.set_load_scale(bus, 1.0 + u)
    base = model.get_reference(head, chan)
    return lambda m, u: m.set_reference(head, chan, base + u)


def linearize(model, rel: float = 1e-6, floor: float = 1e-9,
              inputs: Sequence[str] | None = None, du: float = 1e-6) -> LinearModel:
    """Central-difference linearization around the stored equilibrium.

    Input columns are references (``<device>.<channel>``) and load scaling
    (``load.<bus>.scale``, perturbation of the factor around 1).
    """
    x0 = model.x0
    res = model.residual()
    if res > 1e-8:
        raise LinearizationError(f"equilibrium residual {res:.3e} above 1e-8")
    A = central_jacobian(model.f, x0, rel, floor)
    C = central_jacobian(model.outputs, x0, rel, floor)
    names = list(inputs) if inputs is not None else _default_inputs(model)
    B = np.zeros((model.n, len(names)))
    D = np.zeros((len(model.output_names), len(names)))
    for j, name in enumerate(names):
        m = model.copy()
        setter = _input_setter(m, name)
        setter(m, du)
        fp, yp = m.f(x0), m.outputs(x0)
        setter(m, -du)
        fm, ym = m.f(x0), m.outputs(x0)
        B[:, j] = (fp - fm) / (2 * du)
        D[:, j] = (yp - ym) / (2 * du)
    return LinearModel(A, B, C, D, list(model.labels), names, list(model.output_names),
                       x0.copy(), model.outputs(x0))


# ----------------------------------------------------------------------
def damping_ratio(lam: complex) -> float:
    mag = abs(lam)
    return 0.0 if mag == 0.0 else -lam.real / mag


def frequency_hz(lam: complex) -> float:
    return abs(lam.imag) / (2.0 * math.pi)


@dataclass
class Mode:
    eigenvalue: complex
    participation: np.ndarray
    right: np.ndarray
    left: np.ndarray
    index: int = -1  # column in the full eigen-decomposition
    flagged: bool = False  # left/right pair failed the biorthogonality check

    @property
    def sigma(self) -> float:
        return self.eigenvalue.real

    @property
    def omega(self) -> float:
        return self.eigenvalue.imag

    @property
    def frequency_hz(self) -> float:
        return frequency_hz(self.eigenvalue)

    @property
    def damping(self) -> float:
        return damping_ratio(self.eigenvalue)

    def top_participations(self, labels: Sequence[str], k: int = 5) -> list[tuple[str, float]]:
        order = np.argsort(-self.participation, kind="stable")[:k]
        return [(labels[i], float(self.participation[i])) for i in order]

    def participation_of(self, labels: Sequence[str], suffix: str) -> float:
        return float(sum(p for lab, p in zip(labels, self.participation) if lab.endswith(suffix)))


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray  # rows scaled so that left @ right = I
    biorthogonality_error: float


def eigen_decomposition(A: np.ndarray) -> EigenResult:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise LinearizationError("state matrix has non-finite entries")
    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    except scipy.linalg.LinAlgError as exc:
        raise LinearizationError(f"eigen-solver failed: {exc}") from exc
    vr = vr / np.linalg.norm(vr, axis=0)
    psi = vl.conj().T
    scale = np.einsum("ij,ji->i", psi, vr)
    psi = psi / scale[:, None]
    err = float(np.max(np.abs(psi @ vr - np.eye(len(w))))) if len(w) else 0.0
    return EigenResult(w, vr, psi, err)


def participation_factors(linear_model: LinearModel | np.ndarray, mode: Mode | int) -> np.ndarray:
    """Normalized |left * right| products for one mode (sums to 1)."""
    A = linear_model.A if isinstance(linear_model, LinearModel) else np.asarray(linear_model)
    if isinstance(mode, Mode):
        if mode.left is not None and mode.right is not None:
            return mode.participation
        mode = mode.index
    ed = eigen_decomposition(A)
    return _participation(ed, mode)


def _participation(ed: EigenResult, i: int) -> np.ndarray:
    p = np.abs(ed.left[i] * ed.right[:, i])
    s = p.sum()
    return p / s if s > 0 else p


def eigen_analysis(linear_model: LinearModel | np.ndarray, biorth_tol: float = 1e-8) -> list[Mode]:
    """All modes, conjugate pairs once (non-negative imaginary part).

    Sorted by frequency, then real part.  Modes whose left/right vectors miss
    biorthonormality by more than ``biorth_tol`` are flagged.
    """
    A = linear_model.A if isinstance(linear_model, LinearModel) else np.asarray(linear_model)
    ed = eigen_decomposition(A)
    modes = []
    for i, lam in enumerate(ed.eigenvalues):
        if lam.imag < 0:
            continue
        row = ed.left[i] @ ed.right
        row[i] -= 1.0
        flagged = bool(np.max(np.abs(row)) > biorth_tol)
        modes.append(Mode(complex(lam), _participation(ed, i), ed.right[:, i].copy(),
                          ed.left[i].copy(), i, flagged))
    modes.sort(key=lambda m: (round(m.frequency_hz, 12), m.sigma))
    return modes


def select_mode(modes: Sequence[Mode], labels: Sequence[str], f_lo: float = 0.2,
                f_hi: float = 2.0, min_speed_participation: float = 0.2,
                speed_suffix: str = ".omega") -> Mode:
    """Lowest-damping mode in [f_lo, f_hi] Hz whose machine-speed participation
    (summed over states ending in ``speed_suffix``) reaches the threshold."""
    cands = [m for m in modes if f_lo <= m.frequency_hz <= f_hi
             and m.participation_of(labels, speed_suffix) >= min_speed_participation]
    if not cands:
        raise LookupError(f"no mode in [{f_lo}, {f_hi}] Hz with speed participation "
                          f">= {min_speed_participation}")
    return min(cands, key=lambda m: (m.damping, m.frequency_hz))


def mac(a: np.ndarray, b: np.ndarray) -> float:
    """Modal assurance criterion between two complex shape vectors."""
    num = abs(np.vdot(a, b)) ** 2
    den = np.vdot(a, a).real * np.vdot(b, b).real
    return float(num / den) if den > 0 else 0.0


def _restricted(mode: Mode, labels: Sequence[str], common: Sequence[str]) -> np.ndarray:
    idx = {lab: k for k, lab in enumerate(labels)}
    return np.array([mode.right[idx[c]] for c in common])


def match_mode(ref: Mode, ref_labels: Sequence[str], modes: Sequence[Mode],
               labels: Sequence[str], min_mac: float = 0.3) -> Mode:
    """Mode of ``modes`` best aligned with ``ref`` over the states both share.

    Ranked by modal assurance; eigenvalue distance breaks near-ties.
    """
    common = [lab for lab in ref_labels if lab in set(labels)]
    a = _restricted(ref, ref_labels, common)
    scored = []
    for m in modes:
        b = _restricted(m, labels, common)
        scored.append((round(mac(a, b), 3), -abs(m.eigenvalue - ref.eigenvalue), m))
    scored.sort(key=lambda s: (s[0], s[1]), reverse=True)
    best_mac, _, best = scored[0]
    if best_mac < min_mac:
        raise LookupError(f"target mode not traceable (best alignment {best_mac:.2f})")
    return best


# ----------------------------------------------------------------------
@dataclass
class Trajectory:
    id: int
    points: list[tuple[int, Mode]] = field(default_factory=list)  # (sweep index, mode)


@dataclass
class TrackResult:
    trajectories: list[Trajectory]
    assignment: list[dict[int, int]]  # per sweep point: mode index -> trajectory id

    def trajectory_of(self, point: int, mode: Mode) -> int:
        return self.assignment[point][mode.index]


def track_modes(points: Sequence[tuple[Sequence[Mode], Sequence[str]]],
                proximity_weight: float = 0.2, max_cost: float = 0.9) -> TrackResult:
    """Match modes across adjacent sweep points.

    Cost of pairing is ``1 - MAC`` (shapes over shared states) plus a
    relative eigenvalue-distance term.  Pairs costlier than ``max_cost`` are
    left unmatched and the later mode starts a new trajectory.
    """
    if len(points) < 1:
        raise ValueError("need at least one sweep point")
    trajs: list[Trajectory] = []
    assignment: list[dict[int, int]] = []
    first_modes, _ = points[0]
    amap = {}
    for m in first_modes:
        trajs.append(Trajectory(len(trajs), [(0, m)]))
        amap[m.index] = trajs[-1].id
    assignment.append(amap)
    for k in range(1, len(points)):
        prev_modes, prev_labels = points[k - 1]
        cur_modes, cur_labels = points[k]
        common = [lab for lab in prev_labels if lab in set(cur_labels)]
        P = np.array([_restricted(m, prev_labels, common) for m in prev_modes])
        Q = np.array([_restricted(m, cur_labels, common) for m in cur_modes])
        cost = np.empty((len(prev_modes), len(cur_modes)))
        lp = np.array([m.eigenvalue for m in prev_modes])
        lq = np.array([m.eigenvalue for m in cur_modes])
        Pn = P / np.maximum(np.linalg.norm(P, axis=1, keepdims=True), 1e-300)
        Qn = Q / np.maximum(np.linalg.norm(Q, axis=1, keepdims=True), 1e-300)
        macs = np.abs(Pn.conj() @ Qn.T) ** 2
        dist = np.abs(lp[:, None] - lq[None, :]) / (1.0 + np.abs(lp)[:, None])
        cost = (1.0 - macs) + proximity_weight * np.minimum(dist, 5.0)
        rows, cols = linear_sum_assignment(cost)
        amap = {}
        prev_map = assignment[-1]
        for r, c in zip(rows, cols):
            if cost[r, c] <= max_cost:
                tid = prev_map[prev_modes[r].index]
                trajs[tid].points.append((k, cur_modes[c]))
                amap[cur_modes[c].index] = tid
        for m in cur_modes:
            if m.index not in amap:
                trajs.append(Trajectory(len(trajs), [(k, m)]))
                amap[m.index] = trajs[-1].id
        assignment.append(amap)
    return TrackResult(trajs, assignment)


# ----------------------------------------------------------------------
def modes_csv(modes: Sequence[Mode], labels: Sequence[str], top: int = 5) -> str:
    buf = io.StringIO()
    head = ["mode_id", "re_1_s", "im_rad_s", "f_hz", "damping_pct"]
    head += [f"participation_{k + 1}" for k in range(top)]
    buf.write(",".join(head) + "\n")
    for k, m in enumerate(modes):
        parts = [f"{lab}:{p:.6f}" for lab, p in m.top_participations(labels, top)]
        parts += [""] * (top - len(parts))
        buf.write(f"{k + 1},{format_number(m.sigma)},{format_number(m.omega)},{format_number(m.frequency_hz)},"
                  f"{format_number(100.0 * m.damping)}," + ",".join(parts) + "\n")
    return buf.getvalue()


def format_number(v: float) -> str:
    s = f"{v:.9g}"
    return "0" if s in ("-0", "0") else s
