from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gforpod.pod import PodParams, frequency_response, pod_derivatives, state_names, state_space

DESIGNED_P = PodParams(k=200.0, t_f=0.1, t_w=5.0, t_s1=0.20, t_s2=0.37, n_s=2)


def realized_linearization(params: PodParams, h: float = 1e-6):
    """(A, B, C) of the realized block by central differences (exact: the block is linear)."""
    n = params.n_states
    x0 = np.zeros(n)
    A, C = np.empty((n, n)), np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        (dp, yp), (dm, ym) = pod_derivatives(x0 + e, 0.0, params), pod_derivatives(x0 - e, 0.0, params)
        A[:, j] = (dp - dm) / (2 * h)
        C[j] = (yp - ym) / (2 * h)
    (dp, _), (dm, _) = pod_derivatives(x0, h, params), pod_derivatives(x0, -h, params)
    return A, (dp - dm) / (2 * h), C


def transfer(A, B, C, omega):
    return C @ np.linalg.solve(1j * omega * np.eye(len(B)) - A, B)


def test_realized_block_matches_transfer_function_at_random_frequencies():
    A, B, C = realized_linearization(DESIGNED_P)
    for omega in np.random.default_rng(3).uniform(0.05, 50.0, 20):
        g = frequency_response(DESIGNED_P, omega)
        assert abs(transfer(A, B, C, omega) - g) <= 1e-9 * max(1.0, abs(g))


def test_symbolic_state_space_equals_realized_block():
    for params in (DESIGNED_P, PodParams(3.0, 0.05, 10.0, 0.4, 0.1, 3), PodParams(n_s=1)):
        A, B, C = realized_linearization(params.with_gain(1e-3))
        As, Bs, Cs = state_space(params.with_gain(1e-3))
        assert np.allclose(A, As, atol=1e-9) and np.allclose(B, Bs, atol=1e-9)
        assert np.allclose(C, Cs, atol=1e-12)


def test_designed_pod_p_phase_is_the_sum_of_block_phases():
    omega = 2 * math.pi * 0.585
    p = DESIGNED_P
    expected = (math.pi / 2 - math.atan(omega * p.t_w) - math.atan(omega * p.t_f)
                + p.n_s * (math.atan(omega * p.t_s1) - math.atan(omega * p.t_s2)))
    got = np.angle(frequency_response(p, omega))
    assert abs(math.remainder(got - expected, 2 * math.pi)) < 1e-9


@pytest.mark.parametrize("a", [0.2, 0.5, 0.85, 1.15, 1.85, 5.0])
def test_stage_phase_peaks_at_the_centre_frequency(a):
    t1 = 0.3
    t2 = a * t1
    omega_c = 1 / math.sqrt(t1 * t2)
    stage = lambda w: np.angle((1 + 1j * w * t1) / (1 + 1j * w * t2))  # noqa: E731
    peak = math.asin((1 - a) / (1 + a))
    assert stage(omega_c) == pytest.approx(peak, abs=1e-12)
    for w in (0.7 * omega_c, 1.4 * omega_c):
        assert abs(stage(w)) < abs(peak)
    one = PodParams(1.0, 0.1, 5.0, t1, t2, 1)
    bare = PodParams(1.0, 0.1, 5.0, 0.0, 0.0, 1)
    ratio = frequency_response(one, omega_c) / frequency_response(bare, omega_c)
    assert np.angle(ratio) == pytest.approx(peak, abs=1e-12)


def test_gain_vanishes_at_both_ends_of_the_spectrum():
    assert abs(frequency_response(DESIGNED_P, 1e-9)) < 1e-5
    assert abs(frequency_response(DESIGNED_P, 1e9)) < 1e-5


@given(t=st.floats(0.01, 5.0), omega=st.floats(0.01, 100.0))
def test_equal_time_constants_add_no_phase(t, omega):
    flat = PodParams(1.0, 0.1, 5.0, t, t, 2)
    bare = PodParams(1.0, 0.1, 5.0, 0.0, 0.0, 2)
    assert frequency_response(flat, omega) == pytest.approx(frequency_response(bare, omega),
                                                            rel=1e-12, abs=1e-15)


def test_zero_input_rest_is_an_equilibrium_with_zero_output():
    dx, y = pod_derivatives(np.zeros(DESIGNED_P.n_states), 0.0, DESIGNED_P)
    assert np.all(dx == 0.0) and y == 0.0


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_output_is_clamped_at_the_limit(sign):
    x = np.zeros(DESIGNED_P.n_states)
    x[1:] = sign * 0.1  # K * y = 20 pu before the clamp
    _, y = pod_derivatives(x, 0.0, DESIGNED_P)
    assert y == sign * DESIGNED_P.limit


@pytest.mark.parametrize("kw", [dict(t_f=0.0), dict(t_w=-1.0), dict(n_s=0), dict(limit=0.0),
                                dict(t_s1=0.2, t_s2=0.0), dict(t_s1=-0.2, t_s2=0.3)])
def test_invalid_parameters_are_rejected(kw):
    with pytest.raises(ValueError):
        PodParams(**kw)


def test_state_count_and_names_follow_the_stage_count():
    p = PodParams(n_s=3)
    assert p.n_states == 5
    assert state_names(p) == ("washout", "lowpass", "leadlag1", "leadlag2", "leadlag3")
    assert not PodParams().compensated and DESIGNED_P.compensated
    assert PodParams.from_dict(DESIGNED_P.to_dict()) == DESIGNED_P
