import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from merge_advisor import idm
from merge_advisor.idm import IdmParams
from merge_advisor.sim import simulate_platoon

from .oracles import bisect_equilibrium_gap, idm_reference

P = IdmParams()


def test_desired_gap_examples():
    assert idm.desired_gap(0.0, 0.0, P) == P.s_min
    assert idm.desired_gap(10.0, 0.0, P) == pytest.approx(17.0, abs=1e-12)
    assert idm.desired_gap(10.0, 2.0, P) == pytest.approx(22.773502691896258, abs=1e-12)


def test_desired_gap_clamped_at_zero():
    assert idm.desired_gap(20.0, -30.0, P) == 0.0


def test_acceleration_examples():
    assert idm.acceleration(0.0, 1e6, 0.0, P) == pytest.approx(P.a_m, rel=1e-6)
    a = idm.acceleration(P.v_max, 1e6, 0.0, P)
    assert -1e-6 < a <= 0.0
    s_eq = idm.equilibrium_gap(20.0, P)
    assert abs(idm.acceleration(20.0, s_eq, 0.0, P)) < 1e-9


def test_acceleration_matches_reference_and_clamps():
    assert idm.acceleration(20.0, 30.0, -5.0, P) == pytest.approx(idm_reference(20.0, 30.0, -5.0, P))
    assert idm.acceleration(30.0, 0.5, 10.0, P) == -P.b_hard
    with pytest.raises(ValueError):
        idm.acceleration(10.0, 0.0, 0.0, P)
    with pytest.raises(ValueError):
        idm.acceleration(10.0, -1.0, 0.0, P)


def test_free_acceleration_examples():
    assert idm.free_acceleration(0.0, P) == P.a_m
    assert idm.free_acceleration(P.v_max, P) == 0.0
    assert idm.free_acceleration(P.v_max / 2, P) == pytest.approx(0.9375 * P.a_m, rel=1e-12)


def test_equilibrium_gap_examples():
    assert idm.equilibrium_gap(0.0, P) == P.s_min
    near = [idm.equilibrium_gap(f * P.v_max, P) for f in (0.99, 0.9999, 0.999999)]
    assert near[0] < near[1] < near[2] and near[2] > 1e4
    with pytest.raises(ValueError):
        idm.equilibrium_gap(P.v_max, P)
    assert idm.equilibrium_gap(20.0, P) == pytest.approx(bisect_equilibrium_gap(20.0, P), abs=1e-6)


@pytest.mark.parametrize("kwargs", [{"a_m": 0}, {"b_n": -1}, {"v_max": 0}, {"s_min": 0},
                                    {"t_s": -0.1}, {"delta": 0}, {"b_hard": 0}])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        IdmParams(**kwargs)


params = st.builds(
    IdmParams,
    a_m=st.floats(0.3, 4.0), b_n=st.floats(0.5, 5.0), v_max=st.floats(5.0, 45.0),
    s_min=st.floats(0.5, 5.0), t_s=st.floats(0.0, 2.5), delta=st.floats(1.0, 6.0),
    b_hard=st.just(1e9),
)


@given(params, st.floats(0.0, 1.0), st.floats(0.5, 300.0), st.floats(0.01, 50.0))
def test_acceleration_strictly_increasing_in_gap(p, vfrac, s, ds):
    v = vfrac * p.v_max
    assert idm.acceleration(v, s + ds, 0.0, p) > idm.acceleration(v, s, 0.0, p)


@given(params, st.floats(0.0, 0.99), st.floats(0.001, 0.5), st.floats(0.5, 300.0))
def test_acceleration_strictly_decreasing_in_speed(p, vfrac, dfrac, s):
    v1 = vfrac * p.v_max
    v2 = v1 + dfrac * p.v_max
    a1, a2 = idm.acceleration(v1, s, 0.0, p), idm.acceleration(v2, s, 0.0, p)
    assume(abs(a1 - a2) > 1e-12 * max(1.0, abs(a1)))
    assert a2 < a1


def test_equilibrium_is_stationary_for_random_parameters():
    rng = np.random.default_rng(20240901)
    worst = 0.0
    for _ in range(1000):
        p = IdmParams(a_m=rng.uniform(0.3, 4.0), b_n=rng.uniform(0.5, 5.0),
                      v_max=rng.uniform(5.0, 45.0), s_min=rng.uniform(0.5, 5.0),
                      t_s=rng.uniform(0.0, 2.5), delta=rng.uniform(1.0, 6.0))
        v = rng.uniform(0.0, 0.95) * p.v_max
        worst = max(worst, abs(idm.acceleration(v, idm.equilibrium_gap(v, p), 0.0, p)))
    assert worst < 1e-9


@pytest.mark.parametrize("flow", [100.0, 1000.0, 2000.0])
def test_equilibrium_speed_inverts_flow(flow):
    p = IdmParams(t_s=1.0)
    v = idm.equilibrium_speed(flow, p, 5.0)
    assert idm.equilibrium_flow(v, p, 5.0) == pytest.approx(flow, rel=1e-6)


def test_equilibrium_speed_saturates_at_capacity():
    v_cap = idm.equilibrium_speed(1e9, P, 5.0)
    grid = np.linspace(0.01, 0.999, 4000) * P.v_max
    q_max = max(idm.equilibrium_flow(v, P, 5.0) for v in grid)
    assert idm.equilibrium_flow(v_cap, P, 5.0) == pytest.approx(q_max, rel=1e-4)
    assert idm.equilibrium_speed(0.0, P, 5.0) == P.v_max


@pytest.mark.parametrize("v", [10.0, 20.0, 25.0])
def test_platoon_converges_to_equilibrium(v):
    _, _, speeds, gaps = simulate_platoon(v, 300.0, P)
    target = bisect_equilibrium_gap(v, P)
    assert abs(gaps[-1] - target) / target < 0.01
    assert speeds[-1] == pytest.approx(v, rel=1e-3)
    assert math.isfinite(gaps[-1])
