from __future__ import annotations

import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gforpod.design import (
    DesignError, DesignSpec, compensation_ratio, compute_gain, design_pod,
    finite_difference_sensitivity, leadlag_times, system_modes, target_eigenvalue,
    track_over_gain, with_pod,
)
from gforpod.modal import eigen_analysis, select_mode
from gforpod.pod import PodParams
from gforpod.scenarios import remove_converter


# -- compensation ratio ---------------------------------------------------------------
def test_half_turn_needs_no_compensation():
    a, _ = compensation_ratio(math.pi, 2)
    assert a == pytest.approx(1.0, abs=1e-15)


def test_quarter_turn_lag_with_two_stages():
    a, branch = compensation_ratio(-math.pi / 2, 2)
    s = math.sqrt(2) / 2
    assert branch == "lag"
    assert a == pytest.approx((1 + s) / (1 - s), rel=1e-12)
    assert a == pytest.approx(5.828, abs=1e-3)


def test_zero_phase_is_a_degenerate_lead():
    with pytest.raises(DesignError, match="stages"):
        compensation_ratio(0.0, 2)


def test_lag_branch_degenerates_at_ninety_degrees_per_stage():
    with pytest.raises(DesignError, match="stages"):
        compensation_ratio(-0.5, 1)


@pytest.mark.parametrize("phi", [2.036437462548627e-11, -2e-11])
def test_near_zero_phase_is_degenerate_rather_than_a_zero_ratio(phi):
    with pytest.raises(DesignError, match="degenerates"):
        compensation_ratio(phi, 2)


@given(phi=st.floats(-math.pi, math.pi), n_s=st.integers(1, 4))
def test_branch_follows_the_sign_of_the_phase(phi, n_s):
    try:
        a, branch = compensation_ratio(phi, n_s)
    except DesignError:
        return
    assert a > 0
    assert a <= 1 if phi >= 0 else a >= 1
    if abs(phi) == math.pi:
        assert a == 1
    assert branch == ("lead" if phi >= 0 else "lag")
    # each stage supplies the phase the branch asked for
    per_stage = math.asin((1 - a) / (1 + a))
    wanted = (math.pi - phi) / n_s if phi >= 0 else -(math.pi + phi) / n_s
    assert per_stage == pytest.approx(wanted, abs=1e-9)


def test_phase_outside_the_half_turn_is_rejected():
    with pytest.raises(ValueError):
        compensation_ratio(4.0, 2)


# -- stage time constants ------------------------------------------------------------
# the reference pairs carry two decimals, so compare at 5 ms
@pytest.mark.parametrize("a,omega,t1,t2,tol", [(1.0, 2.0, 0.5, 0.5, 1e-15),
                                               (1.85, 3.676, 0.202, 0.373, 5e-3),
                                               (1.115, 3.642, 0.260, 0.290, 5e-3)])
def test_leadlag_times_examples(a, omega, t1, t2, tol):
    got = leadlag_times(a, omega)
    assert got == pytest.approx((t1, t2), abs=tol)


@given(a=st.floats(0.01, 100.0), omega=st.floats(0.1, 100.0))
def test_stages_are_centred_on_the_target_frequency(a, omega):
    t1, t2 = leadlag_times(a, omega)
    assert t1 * t2 * omega ** 2 == pytest.approx(1.0, abs=1e-12)
    assert t2 / t1 == pytest.approx(a, rel=1e-12)


# -- target and gain -------------------------------------------------------------------
def test_target_eigenvalue_keeps_the_frequency():
    assert target_eigenvalue(complex(0.06, 3.62), 0.10) == pytest.approx(complex(-0.362, 3.62))
    assert target_eigenvalue(complex(0.06, 3.62), 0.0) == complex(0.0, 3.62)
    with pytest.raises(ValueError):
        target_eigenvalue(complex(-1.0, 0.0), 0.1)


def test_same_damping_leaves_only_the_real_axis_gap():
    lam0 = complex(-0.4, 3.0)
    zeta0 = -lam0.real / abs(lam0)
    lam_d = target_eigenvalue(lam0, zeta0)
    assert lam_d.imag == lam0.imag
    assert abs(lam_d - lam0) == pytest.approx(abs(lam_d.real - lam0.real), abs=1e-15)


def test_gain_from_distance_and_sensitivity():
    lam0 = complex(-0.1, 3.0)
    assert compute_gain(lam0, lam0 - 0.5, 0.0025j, 0.0, 1e9)[1] == pytest.approx(200.0)
    k_raw, k, side = compute_gain(lam0, lam0 - 0.3, 0.0025, 200.0, 400.0)
    assert (k_raw, k, side) == (pytest.approx(120.0), 200.0, "minimum")
    assert compute_gain(lam0, lam0 - 5.0, 0.0025, 200.0, 400.0)[1:] == (400.0, "maximum")
    assert compute_gain(lam0, lam0, 0.0025, 200.0, 400.0) == (0.0, 200.0, "minimum")


def test_uncontrollable_mode_is_reported():
    with pytest.raises(DesignError, match="controllable"):
        compute_gain(complex(-0.1, 3.0), complex(-0.4, 3.0), 1e-13, 200.0, 400.0)


@pytest.mark.parametrize("kw", [dict(channel="X"), dict(dk=0.0), dict(k_min=500.0),
                                dict(zeta_target=1.2)])
def test_invalid_design_specs_are_rejected(kw):
    with pytest.raises(ValueError):
        DesignSpec(**kw)


# -- finite-difference sensitivity on synthetic systems -------------------------------
A_OSC = np.array([[0.0, 1.0], [-4.0, -0.4]])
B_COL = np.array([0.0, 1.0])
C_ROW = np.array([1.0, 0.0])


def _closed_loop(A, b, c):
    def modes_at(k):
        return eigen_analysis(A + k * np.outer(b, c)), [f"s{j}" for j in range(len(b))]
    return modes_at


def test_rank_one_feedback_matches_the_analytic_derivative():
    # det(sI - A - K b c) = s^2 + 0.4 s + 4 - K, so dlambda/dK = -j / (2 sqrt(3.96 - K))
    exact = -1j / (2 * math.sqrt(3.96))
    modes_at = _closed_loop(A_OSC, B_COL, C_ROW)
    target = eigen_analysis(A_OSC)[0]
    labels = ["s0", "s1"]
    errors = []
    for dk in (0.02, 0.01, 0.005):
        s, lam = finite_difference_sensitivity(modes_at, target, labels, dk)
        assert lam == pytest.approx(complex(-0.2, math.sqrt(3.96 - dk)), abs=1e-12)
        errors.append(abs(s - exact))
    assert errors[0] < 0.01 * abs(exact)
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.05)
    assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.05)


def test_feedback_into_a_disconnected_block_does_not_move_the_mode():
    A = np.zeros((4, 4))
    A[:2, :2] = A_OSC
    A[2:, 2:] = [[-3.0, 1.0], [0.0, -5.0]]
    b, c = np.array([0.0, 0.0, 1.0, 0.0]), np.array([0.0, 0.0, 0.0, 1.0])
    target = next(m for m in eigen_analysis(A) if m.omega > 0)
    s, _ = finite_difference_sensitivity(_closed_loop(A, b, c), target,
                                         [f"s{j}" for j in range(4)], 1.0)
    assert abs(s) < 1e-10


# -- the two-area design point --------------------------------------------------------
def test_halved_probe_agrees_within_five_percent(designed):
    _, reports = designed
    for rep in reports.values():
        (_, s0), (_, s1) = rep.probe_history[:2]
        assert abs(s1 - s0) < 0.05 * abs(s1)


def test_active_power_channel_is_lag_compensated_and_clamped(designed):
    _, reports = designed
    rep = reports["P"]
    assert rep.branch == "lag" and rep.a > 1 and rep.t_s2 > rep.t_s1
    assert rep.k == 200.0 and rep.clamped == "minimum"


@pytest.mark.xfail(strict=True, reason="Q-channel raw phase lands above zero at H = 4 s; "
                                       "the lead branch (a < 1) is taken")
def test_reactive_channel_is_a_milder_lag_than_the_active_one(designed):
    _, reports = designed
    assert reports["Q"].a > 1
    assert abs(reports["Q"].a - 1) < abs(reports["P"].a - 1)


def test_compensated_phase_and_centre_frequency(designed):
    _, reports = designed
    for rep in reports.values():
        assert abs(math.remainder(rep.phase_comp_deg - 180.0, 360.0)) <= 20.0
        assert rep.t_s1 * rep.t_s2 * rep.omega_target ** 2 == pytest.approx(1.0, abs=1e-12)


def test_design_never_reduces_damping(designed):
    _, reports = designed
    for rep in reports.values():
        assert rep.zeta_achieved >= rep.zeta_0


def _target(spec, channel):
    base = with_pod(spec, "GFOR2", channel, None)
    modes, labels = system_modes(base)
    return base, select_mode(modes, labels, 0.2, 2.0, 0.2), labels


def _move_angle_deg(two_area, rep, k):
    base, target, labels = _target(two_area, rep.channel)
    pod = PodParams(k, 0.1, 5.0, rep.t_s1, rep.t_s2, 2)
    moved = track_over_gain(base, "GFOR2", rep.channel, pod, target, labels).eigenvalue
    return math.degrees(cmath.phase((moved - target.eigenvalue) / (k * rep.sensitivity_comp)))


def test_first_order_prediction_holds_at_the_unclamped_gain(two_area, designed):
    _, reports = designed
    for rep in reports.values():
        assert abs(_move_angle_deg(two_area, rep, rep.k_unclamped)) <= 30.0


@pytest.mark.xfail(strict=True, reason="the 200 floor is 2-9x the unclamped gain, well "
                                       "outside the first-order regime of the sensitivity")
@pytest.mark.parametrize("channel", ["P", "Q"])
def test_first_order_prediction_holds_at_the_designed_gain(two_area, designed, channel):
    rep = designed[1][channel]
    assert abs(_move_angle_deg(two_area, rep, rep.k)) <= 30.0


def _damping_along_gain(two_area, rep, k_end):
    base, target, labels = _target(two_area, rep.channel)
    zetas = [target.damping]
    for k in np.linspace(0.0, k_end, 5)[1:]:
        pod = PodParams(k, 0.1, 5.0, rep.t_s1, rep.t_s2, 2)
        zetas.append(track_over_gain(base, "GFOR2", rep.channel, pod, target, labels).damping)
    return zetas


def test_damping_grows_monotonically_up_to_the_unclamped_gain(two_area, designed):
    _, reports = designed
    for rep in reports.values():
        assert np.all(np.diff(_damping_along_gain(two_area, rep, rep.k_unclamped)) >= 0)


@pytest.mark.xfail(strict=True, reason="damping peaks below the 200 floor and then falls")
@pytest.mark.parametrize("channel", ["P", "Q"])
def test_damping_grows_monotonically_up_to_the_designed_gain(two_area, designed, channel):
    rep = designed[1][channel]
    assert np.all(np.diff(_damping_along_gain(two_area, rep, rep.k)) >= 0)


def test_report_is_finite_and_serializable(designed):
    _, reports = designed
    for rep in reports.values():
        d = json.loads(rep.to_json())
        flat = []
        for v in d.values():
            if isinstance(v, dict):
                flat += list(v.values())
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                flat.append(v)
        assert all(math.isfinite(x) for x in flat)
        assert rep.a > 0
        for key in ("lambda_0", "lambda_nc", "sensitivity_nc_abs", "phase_nc_deg", "a", "t_s1",
                    "t_s2", "k_unclamped", "k", "lambda_achieved"):
            assert key in d


def test_system_without_converter_cannot_be_designed(two_area):
    with pytest.raises(DesignError, match="converter"):
        design_pod(remove_converter(two_area, "GFOR2"), DesignSpec())
