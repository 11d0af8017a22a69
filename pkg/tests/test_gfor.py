from __future__ import annotations

import cmath
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import eigenvalue_gap, spectral_radius, state_matrix
from gforpod import _layout as L
from gforpod.assembly import Event, assemble, simulate
from gforpod.devices.gfor import (
    GforInitError, GforParams, droop_frequency, gfor_derivatives, gfor_init_from_powerflow,
    gfor_outputs,
)
from gforpod.perunit import OMEGA_BASE
from gforpod.pod import PodParams

PARAMS = GforParams()
IDX = {name: k for k, name in enumerate(L.GF_STATES)}


# -- gains ---------------------------------------------------------------------
def test_control_gains_follow_their_tuning_rules():
    g = PARAMS.gains()
    c_filter = 0.15 / OMEGA_BASE
    omega_n = 4.0 / (0.05 * 0.707)
    assert g["kp_cc"] == pytest.approx((0.15 / OMEGA_BASE) / 1e-3, rel=1e-12)
    assert g["ki_cc"] == pytest.approx(0.005 / 1e-3, rel=1e-12)
    assert g["kp_vac"] == pytest.approx(100 * 2 * 0.707 * omega_n * c_filter, rel=1e-12)
    assert g["ki_vac"] == pytest.approx(omega_n ** 2 * c_filter, rel=1e-12)
    # frozen values at the default data
    assert (g["kp_cc"], g["ki_cc"], g["kp_vac"], g["ki_vac"]) == pytest.approx(
        (0.4775, 5.0, 7.639, 6.113), abs=5e-4)
    assert PARAMS.r_cap() == pytest.approx(1 / 4.5)


def test_textbook_voltage_gain_drops_the_scale_factor():
    scaled = PARAMS.gains()["kp_vac"]
    textbook = PARAMS.with_(kpv_rule="textbook").gains()["kp_vac"]
    assert textbook == pytest.approx(scaled / 100.0, rel=1e-12)


@pytest.mark.parametrize("kw", [dict(rf=0.0), dict(rv=1.0), dict(iq_max=0.9), dict(xc=0.0),
                                dict(kpv_rule="other")])
def test_invalid_parameters_are_rejected(kw):
    with pytest.raises(ValueError):
        GforParams(**kw)


# -- initialization --------------------------------------------------------------
def _residual(op, v):
    dx, cur = gfor_derivatives(op.state, v, op.params_row, op.index_row)
    return float(np.max(np.abs(dx))), v * cur.conjugate()


def test_initialization_is_a_fixed_point_delivering_the_requested_power():
    v, s = cmath.rect(1.01, -0.2), complex(0.9, -0.15)
    op = gfor_init_from_powerflow(v, s, PARAMS)
    res, s_out = _residual(op, v)
    assert res < 1e-8 and abs(s_out - s) < 1e-8
    assert gfor_outputs(op.state, v, op.params_row, op.index_row)["freq_pu"] == 1.0


def test_unloaded_converter_only_charges_its_capacitor():
    op = gfor_init_from_powerflow(1.0 + 0j, 0j, PARAMS)
    n = op.named()
    i_s, u_c = complex(n["is_q"], n["is_d"]), complex(n["uc_q"], n["uc_d"])
    assert abs(complex(n["ig_q"], n["ig_d"])) < 1e-15
    assert abs(i_s - 1j * PARAMS.bc * u_c) < 1e-15
    assert abs(n["theta"]) < 1e-15


@settings(max_examples=40, deadline=None)
@given(vm=st.floats(0.9, 1.1), va=st.floats(-math.pi, math.pi),
       p=st.floats(-1.0, 1.0), q=st.floats(-0.5, 0.5))
def test_random_operating_points_initialize_to_equilibrium(vm, va, p, q):
    v = cmath.rect(vm, va)
    try:
        op = gfor_init_from_powerflow(v, complex(p, q), PARAMS)
    except GforInitError:
        return
    res, s_out = _residual(op, v)
    assert res < 1e-8 and abs(s_out - complex(p, q)) < 1e-8


def test_overload_names_the_binding_current_limit():
    with pytest.raises(GforInitError, match="iq_max"):
        gfor_init_from_powerflow(1.0 + 0j, complex(1.5, 0.0), PARAMS)


def test_pod_states_start_at_zero_and_add_no_offset():
    pod = PodParams(200.0, 0.1, 5.0, 0.2, 0.37)
    plain = gfor_init_from_powerflow(1.0 + 0j, complex(0.6, 0.1), PARAMS)
    with_pod = gfor_init_from_powerflow(1.0 + 0j, complex(0.6, 0.1), PARAMS, pod, pod)
    assert np.all(with_pod.state[L.GF_NX:] == 0.0)
    assert np.array_equal(with_pod.state[:L.GF_NX], plain.state)
    res, _ = _residual(with_pod, 1.0 + 0j)
    assert res < 1e-8


# -- droops and POD injection ---------------------------------------------------
def test_active_power_droop_static_frequency():
    assert droop_frequency(PARAMS, 0.6, 0.6 + 0.05) - 1.0 == pytest.approx(-0.0025, abs=1e-15)
    op = gfor_init_from_powerflow(1.0 + 0j, complex(0.6, 0.0), PARAMS)
    x = op.state.copy()
    x[IDX["p_filt"]] += 0.05
    out = gfor_outputs(x, 1.0 + 0j, op.params_row, op.index_row)
    assert out["freq_pu"] - 1.0 == pytest.approx(-0.0025, abs=1e-12)


def _pod_injection_response(channel: str) -> tuple[float, float]:
    """(change of theta rate, change of q-axis voltage-error rate) for a POD output of +0.01."""
    ident = PodParams(1.0, 0.1, 5.0, 0.0, 0.0, 2)  # output = lowpass state
    pods = (ident, None) if channel == "P" else (None, ident)
    op = gfor_init_from_powerflow(1.0 + 0j, complex(0.6, 0.1), PARAMS, *pods)
    x = op.state.copy()
    x[L.GF_NX + 1] = 0.01
    out = gfor_outputs(x, 1.0 + 0j, op.params_row, op.index_row)
    assert out[f"pod_{channel.lower()}_out_pu"] == pytest.approx(0.01, abs=1e-15)
    d0, _ = gfor_derivatives(op.state, 1.0 + 0j, op.params_row, op.index_row)
    d1, _ = gfor_derivatives(x, 1.0 + 0j, op.params_row, op.index_row)
    return d1[IDX["theta"]] - d0[IDX["theta"]], d1[IDX["vc_int_q"]] - d0[IDX["vc_int_q"]]


def test_pod_p_enters_the_frequency_droop_with_negative_sign():
    d_theta, d_verr = _pod_injection_response("P")
    assert d_theta == pytest.approx(OMEGA_BASE * PARAMS.rf * PARAMS.pod_sign_p * 0.01, rel=1e-9)
    assert PARAMS.pod_sign_p == -1.0
    assert d_verr == pytest.approx(0.0, abs=1e-15)


def test_pod_q_adds_to_the_voltage_reference():
    d_theta, d_verr = _pod_injection_response("Q")
    assert d_verr == pytest.approx(PARAMS.rv * 0.01, rel=1e-9)
    assert PARAMS.pod_sign_q == 1.0
    assert d_theta == pytest.approx(0.0, abs=1e-15)


# -- current loop ----------------------------------------------------------------
def test_isolated_current_loop_is_first_order_with_tau_cc():
    """Close only the current controller against a stiff source and step its reference."""
    v = 1.0 + 0j
    op = gfor_init_from_powerflow(v, complex(0.5, 0.1), PARAMS)
    row = op.params_row.copy()
    row[L.GF_RCAP] = 0.0  # capacitor damping resistor would couple the filter back in
    loop = [IDX["is_q"], IDX["is_d"], IDX["cc_int_q"], IDX["cc_int_d"]]

    def rhs(z, frozen):
        x = frozen.copy()
        x[loop] = z
        return gfor_derivatives(x, v, row, op.index_row)[0][loop]

    def settle(frozen):
        z = frozen[loop].copy()
        for _ in range(3):  # the frozen-loop dynamics are linear
            jac = np.empty((4, 4))
            for j in range(4):
                e = np.zeros(4)
                e[j] = 1e-6
                jac[:, j] = (rhs(z + e, frozen) - rhs(z - e, frozen)) / 2e-6
            z = z - np.linalg.solve(jac, rhs(z, frozen))
        return z

    base = op.state.copy()
    base[loop] = settle(base)
    stepped = base.copy()
    stepped[IDX["vc_int_q"]] += 0.01 / PARAMS.gains()["ki_vac"]  # +0.01 on iq_ref
    rot = cmath.exp(-1j * base[IDX["theta"]])
    h, z = 1e-6, base[loop].copy()
    iq = [(complex(z[0], z[1]) * rot).real]
    for _ in range(10_000):
        k1 = rhs(z, stepped)
        k2 = rhs(z + h / 2 * k1, stepped)
        k3 = rhs(z + h / 2 * k2, stepped)
        k4 = rhs(z + h * k3, stepped)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        iq.append((complex(z[0], z[1]) * rot).real)
    rise = np.array(iq) - iq[0]
    t = np.arange(len(rise)) * h
    assert rise[-1] == pytest.approx(0.01, rel=1e-3)
    tau = np.interp(0.632 * rise[-1], rise, t)
    assert tau == pytest.approx(PARAMS.tau_cc, rel=0.10)


# -- in the two-area system --------------------------------------------------------
@pytest.mark.slow
def test_current_references_stay_within_limits_under_a_large_step(designed):
    matrix, _ = designed
    model = assemble(matrix.variant("POD-PQ"))
    ts = simulate(model, [Event(0.1, "load", bus="2", factor=1.3)], t_end=3.0)
    assert np.max(np.abs(ts["GFOR2.iq_ref_pu"])) <= PARAMS.iq_max
    assert np.max(np.abs(ts["GFOR2.id_ref_pu"])) <= PARAMS.id_max


def test_slack_angle_rotates_theta_and_leaves_eigenvalues(two_area):
    turned = replace(two_area, buses=tuple(replace(b, angle_deg=30.0) if b.kind == "slack"
                                           else b for b in two_area.buses))
    m0, m1 = assemble(two_area), assemble(turned)
    k = m0.state_index("GFOR2.theta")
    assert m1.x0[k] - m0.x0[k] == pytest.approx(math.radians(30.0), abs=1e-10)
    a0, a1 = state_matrix(two_area), state_matrix(turned)
    assert eigenvalue_gap(a0, a1) <= 1e-9 * spectral_radius(a0)


def test_converter_adds_damping_to_the_electromechanical_mode(scenario_results):
    assert scenario_results["SG+GFOR"].selected.damping > scenario_results["Base"].selected.damping
