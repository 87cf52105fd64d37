"""Current references, super-twisting current control, PWM, PI baseline.

The reference law fixes i_d* = 0 (unity power factor) and picks the smaller
root of the steady power balance

    (3/2) * (E * i_q - r * i_q**2) = u0_ref**2 / r_load

which exists only while u0_ref <= E * sqrt(3 * r_load / (8 * r)). The ST
controller drives the estimated tracking errors s = ref - estimate through
one super-twisting loop per axis and divides by the measured dc voltage, so
a floor guards the startup region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .plant import ConverterParams, DqControl, inverse_park
from .sta import STGains, STState, sta_step

__all__ = [
    "ReferenceConstraintError",
    "ReferenceSet",
    "SlidingVars",
    "PIState",
    "ReferenceFilter",
    "reference_bound",
    "reference_currents",
    "sliding_variables",
    "st_control",
    "pwm_modulate",
    "pi_control",
]


class ReferenceConstraintError(ValueError):
    """Requested dc voltage is not reachable with the given load."""

    def __init__(self, message: str, time_s: float | None = None):
        super().__init__(message)
        self.time_s = time_s


@dataclass(frozen=True)
class ReferenceSet:
    """Current references plus the filtered slope of the q reference."""

    i_d_ref: float
    i_q_ref: float
    u0_ref: float
    iq_ref_dot: float = 0.0


@dataclass(frozen=True)
class SlidingVars:
    s_d: float
    s_q: float


def reference_bound(r_load: float, p: ConverterParams) -> float:
    """Largest admissible dc reference for a given load resistance."""
    return p.e_mag * math.sqrt(3.0 * r_load / (8.0 * p.r))


def reference_currents(u0_ref: float, r_load: float, p: ConverterParams):
    """(i_d_ref, i_q_ref) for a dc target, raising when out of range."""
    if not (r_load > 0.0 and math.isfinite(r_load)):
        raise ReferenceConstraintError(f"load estimate must be positive, got {r_load!r}")
    disc = (p.e_mag / p.r) ** 2 - 8.0 * u0_ref * u0_ref / (3.0 * r_load * p.r)
    if disc < 0.0:
        raise ReferenceConstraintError(
            f"u0_ref={u0_ref:g} V exceeds the reachable bound "
            f"{reference_bound(r_load, p):.6g} V at r_load={r_load:g} ohm"
        )
    return 0.0, p.e_mag / (2.0 * p.r) - 0.5 * math.sqrt(disc)


def sliding_variables(refs: ReferenceSet, i_d_hat: float, i_q_hat: float) -> SlidingVars:
    return SlidingVars(refs.i_d_ref - i_d_hat, refs.i_q_ref - i_q_hat)


def st_control(
    s: SlidingVars,
    st_d: STState,
    st_q: STState,
    gains_d: STGains,
    gains_q: STGains,
    refs: ReferenceSet,
    p: ConverterParams,
    u0_meas: float,
    dt: float,
    u_prev: DqControl | None = None,
    u0_floor: float = 1.0,
):
    """One step of the observer-based super-twisting current controller.

    Returns (u, st_d, st_q, saturated, held). Below the voltage floor the
    previous output is held and the injection integrals stay untouched;
    outputs are clamped to [-1, 1] with the clamp flagged.
    """
    if u0_meas < u0_floor:
        held = u_prev if u_prev is not None else DqControl(0.0, 0.0)
        return held, st_d, st_q, False, True
    st_d, mu_d = sta_step(st_d, s.s_d, gains_d, dt)
    st_q, mu_q = sta_step(st_q, s.s_q, gains_q, dt)
    r_over_l = p.r / p.l_ind
    f_d = -p.omega * refs.i_q_ref
    f_q = refs.iq_ref_dot + r_over_l * refs.i_q_ref - p.e_mag / p.l_ind
    scale = 2.0 * p.l_ind / u0_meas
    u_d = scale * (r_over_l * s.s_d - p.omega * s.s_q - mu_d - f_d)
    u_q = scale * (p.omega * s.s_d + r_over_l * s.s_q - mu_q - f_q)
    saturated = abs(u_d) > 1.0 or abs(u_q) > 1.0
    if saturated:
        u_d = min(1.0, max(-1.0, u_d))
        u_q = min(1.0, max(-1.0, u_q))
    return DqControl(u_d, u_q), st_d, st_q, saturated, False


def pwm_modulate(u: DqControl, omega_t: float, carrier_phase: float):
    """Leg switch states from a dq command against a triangular carrier.

    Phase references come from the inverse transform, clamped to [-1, 1];
    the carrier is the symmetric triangle over [-1, 1] parametrized by
    carrier_phase in [0, 1). A leg is +1 while its reference sits on or
    above the carrier, so the period-average duty of each leg follows
    (1 + m) / 2.
    """
    tri = 4.0 * abs(carrier_phase - 0.5) - 1.0
    m = inverse_park(omega_t, (u.u_d, u.u_q))
    return tuple(1.0 if min(1.0, max(-1.0, mk)) >= tri else -1.0 for mk in m)


@dataclass(frozen=True)
class PIState:
    """Cascade PI baseline: outer voltage loop feeding inner dq current loops.

    The inner loops use decoupling feed-forward (omega cross terms and the
    source term) and are designed for pole-zero cancellation, so ki_i should
    sit at kp_i * r / L for a first-order closed loop of bandwidth kp_i.
    """

    kp_v: float
    ki_v: float
    kp_i: float
    ki_i: float
    iq_limit: float
    int_v: float = 0.0
    int_d: float = 0.0
    int_q: float = 0.0


def pi_control(
    pi: PIState,
    u0_meas: float,
    i_d_hat: float,
    i_q_hat: float,
    refs: ReferenceSet,
    p: ConverterParams,
    dt: float,
    u0_floor: float = 1.0,
):
    """One step of the PI baseline. Returns (u, PIState, saturated).

    Anti-windup freezes an integrator whenever the stage it feeds saturates:
    the voltage integrator when the i_q command clips at iq_limit, both
    current integrators when either modulation output clips at 1.
    """
    err_v = refs.u0_ref - u0_meas
    int_v = pi.int_v + pi.ki_v * err_v * dt
    iq_cmd = pi.kp_v * err_v + int_v
    if abs(iq_cmd) > pi.iq_limit:
        iq_cmd = math.copysign(pi.iq_limit, iq_cmd)
        int_v = pi.int_v
    eps_d = 0.0 - i_d_hat
    eps_q = iq_cmd - i_q_hat
    int_d = pi.int_d + pi.ki_i * eps_d * dt
    int_q = pi.int_q + pi.ki_i * eps_q * dt
    v_d = p.omega * i_q_hat - (pi.kp_i * eps_d + int_d)
    v_q = p.e_mag / p.l_ind - p.omega * i_d_hat - (pi.kp_i * eps_q + int_q)
    scale = 2.0 * p.l_ind / max(u0_meas, u0_floor)
    u_d = scale * v_d
    u_q = scale * v_q
    saturated = abs(u_d) > 1.0 or abs(u_q) > 1.0
    if saturated:
        # freeze the current integrators against windup
        int_d = pi.int_d
        int_q = pi.int_q
        u_d = min(1.0, max(-1.0, u_d))
        u_q = min(1.0, max(-1.0, u_q))
    return (
        DqControl(u_d, u_q),
        replace(pi, int_v=int_v, int_d=int_d, int_q=int_q),
        saturated,
    )


class ReferenceFilter:
    """First-order filtered numerical derivative of the q-axis reference."""

    def __init__(self, tau: float = 1e-3):
        self.tau = tau
        self._prev: float | None = None
        self.deriv = 0.0

    def update(self, value: float, dt: float) -> float:
        if self._prev is None or dt <= 0.0:
            raw = 0.0
        else:
            raw = (value - self._prev) / dt
        self._prev = value
        if self.tau > 0.0:
            self.deriv += (dt / self.tau) * (raw - self.deriv)
        else:
            self.deriv = raw
        return self.deriv
