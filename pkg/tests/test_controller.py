"""Current references, super-twisting control law, PWM, and the PI baseline."""

import math

import numpy as np
import pytest

from stpfc.controller import (
    PIState,
    ReferenceConstraintError,
    ReferenceFilter,
    ReferenceSet,
    SlidingVars,
    pi_control,
    pwm_modulate,
    reference_bound,
    reference_currents,
    sliding_variables,
    st_control,
)
from stpfc.plant import ConverterParams, DqControl
from stpfc.simulator import integrate_step
from stpfc.sta import STGains, STState

from conftest import IQ_REF_40, IQ_REF_50, U0_MAX_50

P = ConverterParams(
    r=0.02, l_ind=2e-3, c_cap=1e-4, r_load=50.0, r_nominal=50.0,
    e_mag=150.0, omega=150.0 * math.pi,
)

GAINS = STGains(lam=2e3, alpha=1e5, f_bound=5e4)


def test_reference_spot_values():
    i_d, i_q = reference_currents(650.0, 50.0, P)
    assert i_d == 0.0
    assert i_q == pytest.approx(IQ_REF_50, rel=1e-12)
    assert i_q == pytest.approx(37.74, abs=0.01)
    _, i_q = reference_currents(650.0, 40.0, P)
    assert i_q == pytest.approx(IQ_REF_40, rel=1e-12)
    assert i_q == pytest.approx(47.24, abs=0.01)


def test_reference_bound_spot_value():
    b = reference_bound(50.0, P)
    assert b == pytest.approx(U0_MAX_50, rel=1e-12)
    assert b == pytest.approx(150.0 * math.sqrt(937.5), rel=1e-12)
    assert b >= 650.0


def test_reference_out_of_range_raises():
    with pytest.raises(ReferenceConstraintError):
        reference_currents(5000.0, 50.0, P)
    with pytest.raises(ReferenceConstraintError):
        reference_currents(650.0, -1.0, P)


def test_reference_admissibility_and_power_balance():
    # wherever the formula succeeds, the root is the low-energy branch and
    # the delivered power matches the dc draw almost exactly
    rng = np.random.default_rng(21)
    hits = 0
    for _ in range(300):
        u0_ref = float(rng.uniform(100.0, 6000.0))
        r_load = float(rng.uniform(5.0, 200.0))
        try:
            _, i_q = reference_currents(u0_ref, r_load, P)
        except ReferenceConstraintError:
            assert u0_ref > reference_bound(r_load, P)
            continue
        hits += 1
        assert i_q <= P.e_mag / (2.0 * P.r) + 1e-9
        fed = 1.5 * i_q * (P.e_mag - P.r * i_q)
        drawn = u0_ref * u0_ref / r_load
        assert abs(fed - drawn) <= 1e-6 * drawn
    assert hits > 50


def test_sliding_variables_are_plain_differences():
    refs = ReferenceSet(0.0, 40.0, 650.0)
    s = sliding_variables(refs, 2.0, 40.0)
    assert s.s_d == -2.0
    assert s.s_q == 0.0


def _refs(i_q):
    return ReferenceSet(0.0, i_q, 650.0, iq_ref_dot=0.0)


def test_st_control_spot_value_on_the_surface():
    u, _, _, sat, held = st_control(
        SlidingVars(0.0, 0.0), STState(0.0), STState(0.0), GAINS, GAINS,
        _refs(IQ_REF_50), P, 650.0, 0.0,
    )
    assert u.u_d == pytest.approx(0.10945942569890346, rel=1e-12)
    assert u.u_q == pytest.approx(0.45921566038273076, rel=1e-12)
    assert math.hypot(u.u_d, u.u_q) == pytest.approx(0.472, abs=5e-4)
    assert math.hypot(u.u_d, u.u_q) < math.sqrt(2.0)
    assert not sat and not held


def test_st_control_on_surface_matches_the_steady_solution():
    # on the surface with silent injections the law collapses to the
    # feed-forward steady control for any parameter set
    rng = np.random.default_rng(17)
    for _ in range(100):
        p = ConverterParams(
            r=float(rng.uniform(0.005, 0.2)),
            l_ind=float(rng.uniform(5e-4, 2e-2)),
            c_cap=float(rng.uniform(2e-5, 1e-3)),
            r_load=float(rng.uniform(10.0, 200.0)),
            r_nominal=50.0,
            e_mag=float(rng.uniform(50.0, 400.0)),
            omega=float(rng.uniform(50.0, 1500.0)),
        )
        u0 = float(rng.uniform(p.e_mag * 1.2, p.e_mag * 6.0))
        try:
            _, iq = reference_currents(u0, p.r_load, p)
        except ReferenceConstraintError:
            continue
        u, _, _, sat, _ = st_control(
            SlidingVars(0.0, 0.0), STState(0.0), STState(0.0), GAINS, GAINS,
            ReferenceSet(0.0, iq, u0), p, u0, 0.0,
        )
        if sat:
            continue
        assert u.u_d == pytest.approx(2.0 * p.l_ind * p.omega * iq / u0, rel=1e-12)
        assert u.u_q == pytest.approx(2.0 * (p.e_mag - p.r * iq) / u0, rel=1e-12)


def test_st_control_degenerate_source_commands_nothing():
    p = ConverterParams(
        r=0.02, l_ind=2e-3, c_cap=1e-4, r_load=50.0, r_nominal=50.0,
        e_mag=1e-12, omega=150.0 * math.pi,
    )
    u, _, _, _, _ = st_control(
        SlidingVars(0.0, 0.0), STState(0.0), STState(0.0), GAINS, GAINS,
        ReferenceSet(0.0, 0.0, 650.0), p, 650.0, 0.0,
    )
    assert abs(u.u_d) < 1e-12
    assert abs(u.u_q) < 1e-12


def test_st_control_clamps_and_flags():
    u, _, _, sat, held = st_control(
        SlidingVars(1e4, -1e4), STState(0.0), STState(0.0), GAINS, GAINS,
        _refs(IQ_REF_50), P, 650.0, 1e-5,
    )
    assert sat and not held
    assert abs(u.u_d) <= 1.0 and abs(u.u_q) <= 1.0


def test_st_control_below_floor_holds_previous_output():
    prev = DqControl(0.3, -0.2)
    st_d = STState(1.0)
    u, nd, nq, sat, held = st_control(
        SlidingVars(1.0, 1.0), st_d, STState(2.0), GAINS, GAINS,
        _refs(IQ_REF_50), P, 0.5, 1e-5, u_prev=prev, u0_floor=1.0,
    )
    assert held and not sat
    assert u is prev
    assert nd.z == 1.0  # injection integrals untouched while holding
    assert nq.z == 2.0


def test_pwm_rails_and_duty():
    n = 100
    phases = (np.arange(n) + 0.5) / n
    # angle zero maps the d component straight onto phase a
    full_on = [pwm_modulate(DqControl(1.0, 0.0), 0.0, float(ph))[0] for ph in phases]
    assert all(s == 1.0 for s in full_on)
    for m in np.linspace(-1.0, 1.0, 41):
        legs = [pwm_modulate(DqControl(float(m), 0.0), 0.0, float(ph))[0] for ph in phases]
        assert set(legs) <= {-1.0, 1.0}
        # period average lands within one substep quantum of the command
        assert abs(float(np.mean(legs)) - m) <= 2.0 / n + 1e-12


def test_pwm_half_commands():
    n = 100
    phases = (np.arange(n) + 0.5) / n
    mid = np.mean([pwm_modulate(DqControl(0.0, 0.0), 0.0, float(p))[0] for p in phases])
    assert abs(mid) <= 2.0 / n + 1e-12
    half = np.mean([pwm_modulate(DqControl(0.5, 0.0), 0.0, float(p))[0] for p in phases])
    assert abs(half - 0.5) <= 2.0 / n + 1e-12


def _pi_state(**kw):
    base = dict(kp_v=0.2, ki_v=100.0, kp_i=500.0, ki_i=5e3, iq_limit=150.0)
    base.update(kw)
    return PIState(**base)


def test_pi_zero_error_passes_feed_forward_only():
    pi = _pi_state()
    refs = ReferenceSet(0.0, 0.0, 650.0)
    u, nxt, sat = pi_control(pi, 650.0, 0.0, 0.0, refs, P, 1e-5)
    assert u.u_d == pytest.approx(0.0, abs=1e-15)
    assert u.u_q == pytest.approx(2.0 * P.e_mag / 650.0, rel=1e-12)
    assert not sat
    assert (nxt.int_v, nxt.int_d, nxt.int_q) == (0.0, 0.0, 0.0)


def test_pi_inner_loop_bandwidth():
    # release the d current from -1 A and time the 63% recovery; the
    # pole-zero tuned loop must match its design bandwidth within 10%
    pi = _pi_state(kp_v=0.0, ki_v=0.0)
    refs = ReferenceSet(0.0, 0.0, 650.0)
    dt = 1e-6
    i_d = -1.0
    t63 = None
    for k in range(8000):
        u, pi, sat = pi_control(pi, 650.0, i_d, 0.0, refs, P, dt)
        assert not sat

        def rhs(y, ud=u.u_d):
            return np.array([-(P.r / P.l_ind) * y[0] - 650.0 / (2.0 * P.l_ind) * ud])

        i_d = float(integrate_step(np.array([i_d]), rhs, dt)[0])
        if t63 is None and i_d >= -(1.0 - 0.632):
            t63 = (k + 1) * dt
    assert t63 is not None
    assert abs(t63 * pi.kp_i - 1.0) <= 0.10


def test_pi_saturation_freezes_current_integrators():
    pi = _pi_state()
    # a huge voltage error clips the q command at the current ceiling and
    # the resulting modulation demand clips at the rail
    u, nxt, sat = pi_control(pi, 10.0, 0.0, 0.0, ReferenceSet(0.0, 0.0, 650.0), P, 1e-2)
    assert sat
    assert max(abs(u.u_d), abs(u.u_q)) == 1.0
    assert nxt.int_d == pi.int_d and nxt.int_q == pi.int_q
    # the voltage integrator froze too because the command hit iq_limit
    assert nxt.int_v == pi.int_v


def test_reference_filter_smooths_the_derivative():
    f = ReferenceFilter(tau=1e-3)
    assert f.update(10.0, 1e-4) == 0.0  # no history yet
    d = f.update(10.0 + 1e-3, 1e-4)
    assert 0.0 < d < (1e-3 / 1e-4)  # filtered below the raw slope
    for _ in range(200):
        d = f.update(10.0 + 1e-3, 1e-4)
    assert abs(d) < 1e-6  # settled value decays once the input stops moving
