"""Eigenvalue-sensitivity design of a converter POD channel.

Two probes of the linearized system give the sensitivity of the target
eigenvalue to the POD gain: first with the lead/lag stages bypassed (its
phase fixes the compensation), then with the designed stages installed (its
magnitude sizes the gain that moves the eigenvalue to the requested damping).
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

from .assembly import assemble
from .modal import Mode, eigen_analysis, linearize, match_mode, select_mode
from .pod import PodParams
from .system import SystemSpec


class DesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class DesignSpec:
    channel: str = "P"
    converter: str | None = None  # defaults to the first converter in the system
    f_lo: float = 0.2
    f_hi: float = 2.0
    min_speed_participation: float = 0.2
    zeta_target: float | None = None  # absolute target; overrides dzeta
    dzeta: float = 0.10
    dk: float = 1.0
    k_min: float = 200.0
    k_max: float = 400.0
    n_s: int = 2
    t_f: float = 0.1
    t_w: float = 5.0
    limit: float = 0.2
    agreement: float = 0.05  # relative agreement of successive sensitivity probes
    max_halvings: int = 8

    def __post_init__(self):
        if self.channel not in ("P", "Q"):
            raise ValueError("channel must be 'P' or 'Q'")
        if self.dk <= 0:
            raise ValueError("probe gain must be positive")
        if self.k_min > self.k_max:
            raise ValueError("k_min exceeds k_max")
        if self.zeta_target is not None and not 0 < self.zeta_target < 1:
            raise ValueError("target damping must lie in (0, 1)")


@dataclass
class DesignReport:
    channel: str
    converter: str
    lambda_0: complex
    lambda_nc: complex
    sensitivity_nc: complex
    probe_gain: float
    phase_nc_deg: float
    branch: str
    a: float
    omega_target: float
    t_s1: float
    t_s2: float
    lambda_comp_probe: complex
    sensitivity_comp: complex
    phase_comp_deg: float
    zeta_0: float
    zeta_d: float
    lambda_d: complex
    k_unclamped: float
    k: float
    clamped: str  # "", "minimum" or "maximum"
    lambda_achieved: complex
    zeta_achieved: float
    probe_history: list[tuple[float, complex]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {}
        for k, v in d.items():
            if isinstance(v, complex):
                out[k] = {"re": v.real, "im": v.imag}
            elif k == "probe_history":
                out[k] = [{"dk": g, "re": s.real, "im": s.imag} for g, s in v]
            else:
                out[k] = v
        out["sensitivity_nc_abs"] = abs(self.sensitivity_nc)
        out["sensitivity_comp_abs"] = abs(self.sensitivity_comp)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# -- formula-level steps ----------------------------------------------------
def compensation_ratio(phi_nc: float, n_s: int) -> tuple[float, str]:
    """Lead/lag ratio ``a = T_S2 / T_S1`` turning the sensitivity toward 180 deg.

    Non-negative phase takes the lead branch (a <= 1), negative phase the lag
    branch (a >= 1). Both ends of the range need no compensation (a = 1).
    """
    if not -math.pi <= phi_nc <= math.pi:
        raise ValueError("phase must lie in [-pi, pi]")
    if n_s < 1:
        raise ValueError("need at least one stage")
    if phi_nc >= 0:
        phi = (math.pi - phi_nc) / n_s
        if phi >= math.pi / 2:
            raise DesignError("lead branch degenerates (per-stage phase of 90 deg or more, "
                              "a <= 0); increase the number of stages")
        a = (1 - math.sin(phi)) / (1 + math.sin(phi))
        if a <= 0:  # sin(phi) rounded to 1
            raise DesignError("lead branch degenerates (a rounds to 0); "
                              "increase the number of stages")
        return a, "lead"
    phi = (math.pi + phi_nc) / n_s
    if phi >= math.pi / 2:
        raise DesignError("lag branch degenerates (per-stage phase of 90 deg, a -> inf); "
                          "increase the number of stages")
    if math.sin(phi) >= 1.0:
        raise DesignError("lag branch degenerates (a rounds to inf); "
                          "increase the number of stages")
    return (1 + math.sin(phi)) / (1 - math.sin(phi)), "lag"


def leadlag_times(a: float, omega: float) -> tuple[float, float]:
    """Stage time constants centred on ``omega`` rad/s."""
    if a <= 0 or omega <= 0:
        raise ValueError("ratio and frequency must be positive")
    t1 = 1.0 / (omega * math.sqrt(a))
    return t1, a * t1


def target_eigenvalue(lambda_0: complex, zeta_d: float) -> complex:
    w0 = abs(lambda_0.imag)
    if w0 <= 0:
        raise ValueError("target mode must be oscillatory")
    return complex(-zeta_d * w0, w0)


def compute_gain(lambda_0: complex, lambda_d: complex, sensitivity: complex,
                 k_min: float, k_max: float) -> tuple[float, float, str]:
    """(unclamped gain, clamped gain, clamp side) for moving ``lambda_0`` to ``lambda_d``."""
    mag = abs(sensitivity)
    if mag < 1e-12:
        raise DesignError("sensitivity magnitude below 1e-12: mode not controllable from this channel")
    k = abs(lambda_d - lambda_0) / mag
    if k < k_min:
        return k, k_min, "minimum"
    if k > k_max:
        return k, k_max, "maximum"
    return k, k, ""


# -- system-level steps -----------------------------------------------------
def _converter(spec: SystemSpec, name: str | None) -> str:
    if not spec.gfor:
        raise DesignError("system has no grid-forming converter")
    if name is None:
        return spec.gfor[0].name
    if name not in {g.name for g in spec.gfor}:
        raise DesignError(f"no converter {name!r}")
    return name


def with_pod(spec: SystemSpec, converter: str, channel: str, pod: PodParams | None) -> SystemSpec:
    return spec.with_gfor(converter, **{"pod_p" if channel == "P" else "pod_q": pod})


def system_modes(spec: SystemSpec, backend: str | None = None):
    model = assemble(spec, backend=backend)
    lin = linearize(model, inputs=[])
    return eigen_analysis(lin), lin.state_labels


def finite_difference_sensitivity(modes_at: Callable[[float], tuple[list[Mode], list[str]]],
                                  target: Mode, labels: list[str],
                                  dk: float) -> tuple[complex, complex]:
    """(dlambda/dK estimate, perturbed eigenvalue) from the modes at gain ``dk``.

    ``modes_at(k)`` returns the modes and state labels of the closed loop at
    gain ``k``; the target is re-identified by eigenvector alignment.
    """
    modes, lab = modes_at(dk)
    try:
        m = match_mode(target, labels, modes, lab)
    except LookupError as exc:
        raise DesignError(f"target mode lost after POD insertion: {exc}") from exc
    return (m.eigenvalue - target.eigenvalue) / dk, m.eigenvalue


def probe_sensitivity(spec: SystemSpec, converter: str, channel: str, pod: PodParams,
                      target: Mode, labels: list[str], dk: float) -> tuple[complex, complex]:
    """Move of the target eigenvalue per unit gain when ``pod`` (at gain ``dk``) is installed."""
    return finite_difference_sensitivity(
        lambda k: system_modes(with_pod(spec, converter, channel, pod.with_gain(k))),
        target, labels, dk)


def estimate_sensitivity_nc(spec: SystemSpec, channel: str, target: Mode, labels: list[str],
                            dk: float = 1.0, converter: str | None = None,
                            base_pod: PodParams | None = None) -> complex:
    """Single finite-difference probe with the lead/lag stages bypassed."""
    converter = _converter(spec, converter)
    pod = base_pod or PodParams()
    pod = PodParams(dk, pod.t_f, pod.t_w, 0.0, 0.0, pod.n_s, pod.limit)
    return probe_sensitivity(spec, converter, channel, pod, target, labels, dk)[0]


def converged_sensitivity(spec: SystemSpec, converter: str, channel: str, pod: PodParams,
                          target: Mode, labels: list[str], dk: float, agreement: float,
                          max_halvings: int) -> tuple[complex, complex, float, list]:
    """Halve the probe gain until two successive estimates agree."""
    history = []
    s_prev, _ = probe_sensitivity(spec, converter, channel, pod, target, labels, dk)
    history.append((dk, s_prev))
    for _ in range(max_halvings):
        dk_next = dk / 2
        s, lam = probe_sensitivity(spec, converter, channel, pod, target, labels, dk_next)
        history.append((dk_next, s))
        if abs(s - s_prev) <= agreement * abs(s):
            return s, lam, dk_next, history
        dk, s_prev = dk_next, s
    raise DesignError(f"sensitivity probes did not agree within {agreement:.0%} "
                      f"after {max_halvings} halvings")


def track_over_gain(spec: SystemSpec, converter: str, channel: str, pod: PodParams,
                    target: Mode, labels: list[str], n_steps: int = 24) -> Mode:
    """Follow the target mode as the POD gain grows geometrically to ``pod.k``."""
    if pod.k <= 0:
        return target
    gains = [pod.k * 10.0 ** (-3.0 * (1.0 - j / n_steps)) for j in range(n_steps + 1)]
    ref, ref_labels = target, labels
    for g in gains:
        modes, lab = system_modes(with_pod(spec, converter, channel, pod.with_gain(g)))
        try:
            ref = match_mode(ref, ref_labels, modes, lab)
        except LookupError as exc:
            raise DesignError(f"target mode lost at gain {g:.4g}: {exc}") from exc
        ref_labels = lab
    return ref


def design_pod(spec: SystemSpec, ds: DesignSpec) -> tuple[PodParams, DesignReport]:
    converter = _converter(spec, ds.converter)
    base = with_pod(spec, converter, ds.channel, None)
    modes, labels = system_modes(base)
    target = select_mode(modes, labels, ds.f_lo, ds.f_hi, ds.min_speed_participation)
    lam0 = target.eigenvalue

    nc = PodParams(ds.dk, ds.t_f, ds.t_w, 0.0, 0.0, ds.n_s, ds.limit)
    s_nc, lam_nc, dk_used, history = converged_sensitivity(
        base, converter, ds.channel, nc, target, labels, ds.dk, ds.agreement, ds.max_halvings)
    phi_nc = cmath.phase(s_nc)
    a, branch = compensation_ratio(phi_nc, ds.n_s)
    w0 = abs(lam0.imag)
    t1, t2 = leadlag_times(a, w0)

    comp = PodParams(dk_used, ds.t_f, ds.t_w, t1, t2, ds.n_s, ds.limit)
    s_c, lam_c = probe_sensitivity(base, converter, ds.channel, comp, target, labels, dk_used)

    zeta0 = target.damping
    zeta_d = ds.zeta_target if ds.zeta_target is not None else zeta0 + ds.dzeta
    lam_d = target_eigenvalue(lam0, zeta_d)
    k_raw, k, clamped = compute_gain(lam0, lam_d, s_c, ds.k_min, ds.k_max)

    pod = comp.with_gain(k)
    achieved = track_over_gain(base, converter, ds.channel, pod, target, labels)
    report = DesignReport(
        channel=ds.channel, converter=converter, lambda_0=lam0, lambda_nc=lam_nc,
        sensitivity_nc=s_nc, probe_gain=dk_used, phase_nc_deg=math.degrees(phi_nc),
        branch=branch, a=a, omega_target=w0, t_s1=t1, t_s2=t2, lambda_comp_probe=lam_c,
        sensitivity_comp=s_c, phase_comp_deg=math.degrees(cmath.phase(s_c)),
        zeta_0=zeta0, zeta_d=zeta_d, lambda_d=lam_d, k_unclamped=k_raw, k=k,
        clamped=clamped, lambda_achieved=achieved.eigenvalue,
        zeta_achieved=achieved.damping, probe_history=history,
    )
    return pod, report
