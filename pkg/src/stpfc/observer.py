"""Super-twisting observers for the rotating-frame converter model.

Two observers share the dc-link voltage measurement:

* a current observer that copies the average model, is driven by the measured
  U0, and injects mu(e3) into its voltage equation; its current corrections
  k1, k2 switch to kappa*u_d, kappa*u_q only while |e3| is inside a small
  threshold (sliding), else stay 0;
* a load observer that runs the voltage equation with a fixed nominal load
  prior and recovers the actual load resistance from its equivalent
  injection.

`error_dynamics` is the exact difference between the plant and current
observer right-hand sides and is pinned against them in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .plant import ConverterParams, DqControl
from .sta import STGains, STState, sta_step

__all__ = [
    "ObserverState",
    "LoadObserverState",
    "correction_gains",
    "observer_derivatives",
    "observer_step",
    "error_dynamics",
    "lyapunov_v",
    "load_observer_derivative",
    "load_observer_step",
]


@dataclass(frozen=True)
class ObserverState:
    """Current-observer estimates plus its injection state and gain policy."""

    i_d_hat: float
    i_q_hat: float
    u0_hat: float
    st: STState
    gains: STGains
    kappa: float = 1.0
    e3_threshold: float = 1e-3


def correction_gains(e3: float, u: DqControl, kappa: float, threshold: float):
    """Current-correction gains: active only inside the sliding band."""
    if abs(e3) <= threshold:
        return kappa * u.u_d, kappa * u.u_q
    return 0.0, 0.0


def observer_derivatives(
    i_d_hat: float,
    i_q_hat: float,
    u0_meas: float,
    u: DqControl,
    p: ConverterParams,
    mu: float,
    k1: float,
    k2: float,
):
    """Right-hand side of the current observer.

    The measured U0 (not the estimate) multiplies the control terms and the
    load term, so at zero error the derivatives equal the plant's exactly.
    """
    r_over_l = p.r / p.l_ind
    half_u0_over_l = u0_meas / (2.0 * p.l_ind)
    d_id = -r_over_l * i_d_hat + p.omega * i_q_hat - half_u0_over_l * u.u_d + k1 * mu
    d_iq = (
        -r_over_l * i_q_hat
        + p.e_mag / p.l_ind
        - p.omega * i_d_hat
        - half_u0_over_l * u.u_q
        + k2 * mu
    )
    d_u0 = (
        -u0_meas / (p.r_load * p.c_cap)
        + 3.0 * (i_d_hat * u.u_d + i_q_hat * u.u_q) / (4.0 * p.c_cap)
        + mu
    )
    return d_id, d_iq, d_u0


def observer_step(
    obs: ObserverState, u0_meas: float, u: DqControl, p: ConverterParams, dt: float
) -> ObserverState:
    """Advance the observer one step: Euler on the injection integral,
    classical RK4 on the estimates with inputs held."""
    e3 = u0_meas - obs.u0_hat
    st, mu = sta_step(obs.st, e3, obs.gains, dt)
    k1, k2 = correction_gains(e3, u, obs.kappa, obs.e3_threshold)

    def f(est):
        return observer_derivatives(est[0], est[1], u0_meas, u, p, mu, k1, k2)

    y = (obs.i_d_hat, obs.i_q_hat, obs.u0_hat)
    k1_ = f(y)
    k2_ = f((y[0] + 0.5 * dt * k1_[0], y[1] + 0.5 * dt * k1_[1], y[2] + 0.5 * dt * k1_[2]))
    k3_ = f((y[0] + 0.5 * dt * k2_[0], y[1] + 0.5 * dt * k2_[1], y[2] + 0.5 * dt * k2_[2]))
    k4_ = f((y[0] + dt * k3_[0], y[1] + dt * k3_[1], y[2] + dt * k3_[2]))
    c = dt / 6.0
    return replace(
        obs,
        i_d_hat=y[0] + c * (k1_[0] + 2.0 * k2_[0] + 2.0 * k3_[0] + k4_[0]),
        i_q_hat=y[1] + c * (k1_[1] + 2.0 * k2_[1] + 2.0 * k3_[1] + k4_[1]),
        u0_hat=y[2] + c * (k1_[2] + 2.0 * k2_[2] + 2.0 * k3_[2] + k4_[2]),
        st=st,
    )


def error_dynamics(
    e1: float,
    e2: float,
    e3: float,
    u: DqControl,
    p: ConverterParams,
    k1: float,
    k2: float,
    mu: float,
):
    """Estimation-error right-hand side (plant minus observer)."""
    r_over_l = p.r / p.l_ind
    de1 = -r_over_l * e1 + p.omega * e2 - k1 * mu
    de2 = -p.omega * e1 - r_over_l * e2 - k2 * mu
    de3 = 3.0 * (u.u_d * e1 + u.u_q * e2) / (4.0 * p.c_cap) - mu
    return de1, de2, de3


def lyapunov_v(e1: float, e2: float, p: ConverterParams):
    """Quadratic certificate for the current errors and its decrement bound.

    Returns (v, bound) with v = L/(2r) * (e1^2 + e2^2); along sliding
    trajectories dv/dt <= bound = -(e1^2 + e2^2).
    """
    ee = e1 * e1 + e2 * e2
    return p.l_ind / (2.0 * p.r) * ee, -ee


@dataclass(frozen=True)
class LoadObserverState:
    """Load-observer voltage estimate, injection state, and derived estimate.

    `r_hat` holds the last valid estimate; `held` flags a step where the
    denominator guard tripped and the previous value was kept.
    """

    u0_hat: float
    st: STState
    gains: STGains
    r_hat: float
    smoothing_tau: float = 0.0
    mu_filt: float = 0.0
    eps_den: float = 0.5
    held: bool = False


def load_observer_derivative(
    u0_hat: float,
    u0_meas: float,
    i_d_hat: float,
    i_q_hat: float,
    u: DqControl,
    p: ConverterParams,
    mu: float,
) -> float:
    """Voltage-copy right-hand side with the nominal load prior."""
    return (
        -u0_meas / (p.r_nominal * p.c_cap)
        + 3.0 * (i_d_hat * u.u_d + i_q_hat * u.u_q) / (4.0 * p.c_cap)
        + mu
    )


def load_observer_step(
    lo: LoadObserverState,
    u0_meas: float,
    i_d_hat: float,
    i_q_hat: float,
    u: DqControl,
    p: ConverterParams,
    dt: float,
) -> LoadObserverState:
    """Advance the load observer one step and refresh the resistance estimate.

    The estimate inverts the voltage balance around the equivalent injection:
    r_hat = r_nominal * U0 / (U0 - r_nominal * C * mu). When the optional
    smoothing time constant is set, a first-order filtered mu feeds the
    inversion (the raw mu still drives the voltage copy). A denominator
    below eps_den keeps the previous estimate and flags the step: near zero
    the quotient blows up, and at or below zero it would turn negative,
    which no resistance is.
    """
    err = u0_meas - lo.u0_hat
    st, mu = sta_step(lo.st, err, lo.gains, dt)
    if lo.smoothing_tau > 0.0:
        mu_filt = lo.mu_filt + (dt / lo.smoothing_tau) * (mu - lo.mu_filt)
    else:
        mu_filt = mu
    den = u0_meas - p.r_nominal * p.c_cap * mu_filt
    if den < lo.eps_den:
        r_hat, held = lo.r_hat, True
    else:
        r_hat, held = p.r_nominal * u0_meas / den, False
    # inputs held constant across the step, so the voltage copy is exact
    u0_hat = lo.u0_hat + dt * load_observer_derivative(
        lo.u0_hat, u0_meas, i_d_hat, i_q_hat, u, p, mu
    )
    return replace(
        lo, u0_hat=u0_hat, st=st, r_hat=r_hat, mu_filt=mu_filt, held=held
    )
