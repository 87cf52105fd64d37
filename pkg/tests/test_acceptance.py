"""End-to-end acceptance checks for the reference scenario.

Each test evaluates one numbered claim about the closed-loop system and
prints a single pass/fail line (run pytest with -s to see them all). The
scenario: 650 V reference, 50 ohm load stepped to 40 ohm at 1.0 s, grid
frequency stepped from 75 Hz to 150 Hz at 1.5 s, averaged bridge model.
"""

import math

import numpy as np
import pytest

from conftest import IQ_REF_40, IQ_REF_50, U0_MAX_50
from stpfc.controller import pwm_modulate, reference_bound, reference_currents
from stpfc.metrics import SignalWindow, phase_power_factor, rms
from stpfc.observer import LoadObserverState, load_observer_step
from stpfc.plant import DqControl, park_transform
from stpfc.sta import STGains, STState

U0_REF = 650.0
BAND = 0.01 * U0_REF


def _criterion(num: int, ok: bool, detail: str):
    print(f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def _segments(cfg):
    w1 = cfg.params.omega
    w2 = cfg.events[1].value
    return ((0.0, 1.0, w1, 50.0), (1.0, 1.5, w1, 40.0), (1.5, 2.0, w2, 40.0))


def _segment_tail(trace, lo, hi, omega):
    tail0 = max(lo, hi - 5.0 * (2.0 * math.pi / omega))
    return (trace.t >= tail0) & (trace.t <= hi)


def _period_rows(trace, lo, hi):
    rows = trace.pf_periods
    return rows[(rows[:, 0] > lo) & (rows[:, 0] <= hi)]


def test_criterion_01_unity_power_factor(st_trace):
    worst = 1.0
    for lo, hi, omega, _ in _segments(st_trace.config):
        tail0 = max(lo, hi - 5.0 * (2.0 * math.pi / omega))
        rows = _period_rows(st_trace, tail0, hi)
        worst = min(worst, float(np.mean(rows[:, 4])))
    _criterion(1, worst >= 0.97, f"steady PF_total >= 0.97 in all segments (worst {worst:.5f})")


def test_criterion_02_voltage_regulation(st_trace):
    t, u0 = st_trace.t, st_trace.u0
    worst = 0.0
    for lo, hi, omega, _ in _segments(st_trace.config):
        mean = float(np.mean(u0[_segment_tail(st_trace, lo, hi, omega)]))
        worst = max(worst, abs(mean - U0_REF))
    tw = t[(t >= 1.0) & (t <= 1.5)]
    uw = u0[(t >= 1.0) & (t <= 1.5)]
    out = np.nonzero(np.abs(uw - U0_REF) > BAND)[0]
    if out.size == 0:
        rec = 0.0
    elif out[-1] + 1 >= tw.size:
        rec = float(tw[-1] - 1.0)
    else:
        rec = float(tw[out[-1] + 1] - 1.0)
    ok = worst <= BAND and rec <= 0.2
    _criterion(
        2,
        ok,
        f"segment means within {BAND:.1f} V (worst dev {worst:.3f} V), "
        f"band recovery {rec:.3f} s <= 0.2 s after the load step",
    )


def test_criterion_03_reference_formulas(table1_params):
    id50, iq50 = reference_currents(U0_REF, 50.0, table1_params)
    _, iq40 = reference_currents(U0_REF, 40.0, table1_params)
    bound = reference_bound(50.0, table1_params)
    ok = (
        iq50 == pytest.approx(IQ_REF_50, rel=1e-12)
        and iq40 == pytest.approx(IQ_REF_40, rel=1e-12)
        and abs(iq50 - 37.74) < 0.01
        and abs(iq40 - 47.24) < 0.01
        and abs(bound - 4592.8) < 0.1
        and bound >= U0_REF
        and id50 == 0.0
    )
    _criterion(
        3,
        ok,
        f"i_q* = {iq50:.4f} / {iq40:.4f} A (37.74 / 47.24 expected), "
        f"feasibility bound {bound:.1f} V >= 650 V",
    )


def test_criterion_04_power_balance(st_trace):
    p = st_trace.config.params
    worst = 0.0
    for lo, hi, omega, r_load in _segments(st_trace.config):
        w = _segment_tail(st_trace, lo, hi, omega)
        fed = 1.5 * (
            st_trace.iq[w] * p.e_mag
            - p.r * (st_trace.id[w] ** 2 + st_trace.iq[w] ** 2)
        )
        drawn = st_trace.u0[w] ** 2 / r_load
        worst = max(worst, abs(float(np.mean(fed - drawn))) / float(np.mean(drawn)))
    _criterion(4, worst <= 0.01, f"power-balance residual {worst * 100.0:.3f}% <= 1%")


def _sliding_window(trace):
    """Index window from the e3 reach instant down to the error-norm floor."""
    e3 = np.abs(trace.u0 - trace.u0_hat)
    held = np.logical_and.accumulate((e3 < 1e-3 * U0_REF)[::-1])[::-1]
    assert held[-1], "e3 never settles below the sliding band"
    start = int(np.argmax(held))
    norm = np.hypot(trace.id - trace.id_hat, trace.iq - trace.iq_hat)
    floor = max(1e-4 * norm[start], 0.1)
    below = np.nonzero(norm[start:] < floor)[0]
    stop = start + int(below[0]) if below.size else len(norm)
    return start, stop, norm


def test_criterion_05_observer_reach_and_decay(observer_trace):
    t = observer_trace.t
    start, stop, norm = _sliding_window(observer_trace)
    t_reach = float(t[start])
    rate = -np.polyfit(t[start:stop], np.log(norm[start:stop]), 1)[0]
    ok = t_reach <= 0.05 and rate >= 10.0
    _criterion(
        5,
        ok,
        f"|e3| < 0.65 V from t = {t_reach:.4f} s onward, "
        f"current-error decay {rate:.1f} 1/s >= 10 1/s",
    )


def test_criterion_06_lyapunov_decrease(observer_trace):
    p = observer_trace.config.params
    t = observer_trace.t
    start, stop, _ = _sliding_window(observer_trace)
    e1 = (observer_trace.id - observer_trace.id_hat)[start:stop]
    e2 = (observer_trace.iq - observer_trace.iq_hat)[start:stop]
    ee = e1 * e1 + e2 * e2
    v = (p.l_ind / (2.0 * p.r)) * ee
    dv = np.gradient(v, t[start:stop])
    frac = float(np.mean(dv > -0.95 * ee))
    _criterion(
        6,
        frac <= 0.01,
        f"dV/dt <= -0.95 (e1^2 + e2^2) violated at {frac * 100.0:.2f}% of samples (<= 1%)",
    )


def test_criterion_07_load_estimation(st_trace, table1_params):
    late = st_trace.t >= 1.1
    err = float(np.max(np.abs(st_trace.rl_hat[late] - 40.0))) / 40.0
    lo = LoadObserverState(
        u0_hat=650.0,
        st=STState(z=-32500.0),
        gains=STGains(5e3, 5e6, 2e6),
        r_hat=50.0,
    )
    lo = load_observer_step(lo, 650.0, 0.0, 0.0, DqControl(0.0, 0.0), table1_params, 1e-6)
    spot = abs(lo.r_hat - 40.0)
    ok = err <= 0.02 and spot < 1e-9
    _criterion(
        7,
        ok,
        f"load estimate within {err * 100.0:.4f}% of 40 ohm from 0.1 s after the step; "
        f"closed-form inversion off by {spot:.1e} ohm",
    )


def test_criterion_08_zero_dynamics_time_constant(ideal_trace):
    p = ideal_trace.config.params
    w = ideal_trace.t <= 0.01
    z_dev = np.abs(ideal_trace.u0[w] ** 2 - U0_REF**2)
    slope = np.polyfit(ideal_trace.t[w], np.log(z_dev), 1)[0]
    tau = -1.0 / slope
    expect = p.r_load * p.c_cap / 2.0
    ok = abs(tau - expect) <= 0.05 * expect
    _criterion(
        8,
        ok,
        f"squared-voltage relaxation tau {tau * 1e3:.3f} ms within 5% of {expect * 1e3:.1f} ms",
    )


def test_criterion_09_projection_norms():
    worst = 0.0
    for va in (-1.0, 1.0):
        for vb in (-1.0, 1.0):
            for vc in (-1.0, 1.0):
                for k in range(360):
                    th = math.radians(k)
                    worst = max(
                        worst,
                        float(np.linalg.norm(park_transform(th, (va, vb, vc)))),
                    )
    basis = np.column_stack(
        [park_transform(0.3, (1, 0, 0)), park_transform(0.3, (0, 1, 0)),
         park_transform(0.3, (0, 0, 1))]
    )
    sigma = float(np.linalg.svd(basis, compute_uv=False)[0])
    ok = worst <= math.sqrt(2.0) + 1e-12 and abs(sigma - math.sqrt(2.0 / 3.0)) <= 1e-12
    _criterion(
        9,
        ok,
        f"max projected switch-vector norm {worst:.12f} <= sqrt(2), "
        f"operator norm {sigma:.12f} = sqrt(2/3)",
    )


def test_criterion_10_st_beats_pi_after_the_load_step(st_trace, pi_trace):
    def post_step(trace):
        w = (trace.t > 1.0) & (trace.t <= 1.5)
        over = float(np.max(trace.u0[w])) - U0_REF
        pf_min = float(np.min(_period_rows(trace, 1.0, 1.5)[:, 4]))
        return over, pf_min

    st_over, st_pf = post_step(st_trace)
    pi_over, pi_pf = post_step(pi_trace)
    ok = pi_over > st_over and pi_pf < st_pf
    _criterion(
        10,
        ok,
        f"post-step overshoot PI {pi_over:.2f} V > ST {st_over:.2f} V; "
        f"min PF_total PI {pi_pf:.5f} < ST {st_pf:.5f}",
    )


def test_criterion_11_mode_consistency(mode_pair):
    means = []
    for trace in mode_pair:
        tail = trace.t >= 0.2
        means.append(float(np.mean(trace.u0[tail])))
    gap = abs(means[1] - means[0]) / means[0]

    n = 100
    worst = 0.0
    for m in np.linspace(-1.0, 1.0, 41):
        u = DqControl(m, 0.0)  # at omega_t = 0 the leg-a reference equals u_d
        legs = [
            pwm_modulate(u, 0.0, (k + 0.5) / n)[0] for k in range(n)
        ]
        duty = float(np.mean(legs))
        worst = max(worst, abs(duty - m))
    ok = gap <= 0.02 and worst <= 2.0 / n + 1e-12
    _criterion(
        11,
        ok,
        f"averaged vs switched steady U0 {means[0]:.2f} / {means[1]:.2f} V "
        f"({gap * 100.0:.3f}% <= 2%); duty error {worst:.4f} <= one substep (2/{n})",
    )


def test_criterion_12_metric_oracles():
    f0 = 75.0
    w0 = 2.0 * math.pi * f0
    t = np.arange(801) / (400.0 * f0)
    tone = np.sin(w0 * t)
    win = lambda x: SignalWindow(t, x, f0)

    r = rms(win(5.0 * tone))
    rms_ok = abs(r - 5.0 / math.sqrt(2.0)) <= 1e-3 * r

    mixed = phase_power_factor(win(tone + np.sin(3.0 * w0 * t)), win(tone))
    dist_ok = abs(mixed.distortion - 1.0 / math.sqrt(2.0)) <= 1e-3 * mixed.distortion

    shifted = phase_power_factor(win(np.sin(w0 * t - math.pi / 3.0)), win(tone))
    disp_ok = abs(shifted.displacement - 0.5) <= 1e-3 * 0.5

    ok = rms_ok and dist_ok and disp_ok
    _criterion(
        12,
        ok,
        f"rms {r:.6f} = 5/sqrt(2), distortion {mixed.distortion:.6f} = 1/sqrt(2), "
        f"displacement {shifted.displacement:.6f} = cos 60deg, all within 0.1%",
    )
