"""Three-phase full-bridge boost rectifier models and frame transforms.

Two granularities of the same converter share one parameter set:

* a phase-frame model driven by the three leg commands (+1/-1 switches, or
  their duty-cycle averages in [-1, 1]), used for switched simulation;
* a rotating-frame average model in (i_d, i_q, U0), used for control design
  and fast averaged simulation.

The amplitude-invariant transform here maps a balanced sin set of amplitude E
to (0, E). Its time derivative couples the frames with a d-axis reflection
relative to the rotating-frame model below; the simulator composes the two
accordingly (see tests for the exact identity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConverterParams",
    "PhaseState",
    "DqState",
    "DqControl",
    "source_voltages",
    "park_transform",
    "inverse_park",
    "plant_derivatives_abc",
    "plant_derivatives_dq",
    "observability_matrix",
    "observability_rank",
]

_THIRD = 2.0 * math.pi / 3.0


@dataclass(frozen=True)
class ConverterParams:
    """Electrical parameters. All strictly positive."""

    r: float  # series resistance per phase, ohm
    l_ind: float  # boost inductance per phase, H
    c_cap: float  # dc-link capacitance, F
    r_load: float  # actual load resistance, ohm
    r_nominal: float  # load prior used by the load observer, ohm
    e_mag: float  # source phase amplitude, V
    omega: float  # source angular frequency, rad/s

    def __post_init__(self):
        for name in ("r", "l_ind", "c_cap", "r_load", "r_nominal", "e_mag", "omega"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"ConverterParams.{name} must be finite and > 0, got {v!r}")


@dataclass(slots=True)
class PhaseState:
    """Phase-frame state: three line currents, dc voltage, source phase."""

    i_a: float
    i_b: float
    i_c: float
    u0: float
    theta: float = 0.0


@dataclass(slots=True)
class DqState:
    i_d: float
    i_q: float
    u0: float


@dataclass(slots=True)
class DqControl:
    u_d: float
    u_q: float


def source_voltages(e_mag: float, theta: float) -> np.ndarray:
    """Balanced three-phase sin set of amplitude e_mag at phase theta."""
    return np.array(
        [
            e_mag * math.sin(theta),
            e_mag * math.sin(theta - _THIRD),
            e_mag * math.sin(theta + _THIRD),
        ]
    )


def park_transform(omega_t: float, abc) -> np.ndarray:
    """Amplitude-invariant abc -> dq projection at angle omega_t."""
    a, b, c = abc
    ca, cb, cc = (
        math.cos(omega_t),
        math.cos(omega_t - _THIRD),
        math.cos(omega_t + _THIRD),
    )
    sa, sb, sc = (
        math.sin(omega_t),
        math.sin(omega_t - _THIRD),
        math.sin(omega_t + _THIRD),
    )
    return np.array(
        [
            (2.0 / 3.0) * (ca * a + cb * b + cc * c),
            (2.0 / 3.0) * (sa * a + sb * b + sc * c),
        ]
    )


def inverse_park(omega_t: float, dq) -> np.ndarray:
    """dq -> abc, the right inverse of `park_transform` (3/2 times its transpose)."""
    d, q = dq
    return np.array(
        [
            math.cos(omega_t) * d + math.sin(omega_t) * q,
            math.cos(omega_t - _THIRD) * d + math.sin(omega_t - _THIRD) * q,
            math.cos(omega_t + _THIRD) * d + math.sin(omega_t + _THIRD) * q,
        ]
    )


def plant_derivatives_abc(state: PhaseState, u, p: ConverterParams) -> PhaseState:
    """Phase-frame right-hand side.

    u is the leg command triple: hard switches in {-1, +1} or duty averages
    in [-1, 1]. The bridge couples phases through the zero-sum combination
    (2*u_k - u_j - u_l), so a common-mode component of u has no effect and
    the line currents keep a zero sum if started that way.
    """
    ua, ub, uc = float(u[0]), float(u[1]), float(u[2])
    ia, ib, ic = state.i_a, state.i_b, state.i_c
    r_over_l = p.r / p.l_ind
    sw = state.u0 / (6.0 * p.l_ind)
    e = p.e_mag
    th = state.theta
    di_a = -r_over_l * ia - sw * (2.0 * ua - ub - uc) + e * math.sin(th) / p.l_ind
    di_b = -r_over_l * ib - sw * (2.0 * ub - ua - uc) + e * math.sin(th - _THIRD) / p.l_ind
    di_c = -r_over_l * ic - sw * (2.0 * uc - ua - ub) + e * math.sin(th + _THIRD) / p.l_ind
    du0 = -state.u0 / (p.r_load * p.c_cap) + (ia * ua + ib * ub + ic * uc) / (2.0 * p.c_cap)
    return PhaseState(di_a, di_b, di_c, du0, p.omega)


def plant_derivatives_dq(state: DqState, u: DqControl, p: ConverterParams) -> DqState:
    """Rotating-frame average model right-hand side."""
    r_over_l = p.r / p.l_ind
    half_u0_over_l = state.u0 / (2.0 * p.l_ind)
    di_d = -r_over_l * state.i_d + p.omega * state.i_q - half_u0_over_l * u.u_d
    di_q = (
        -r_over_l * state.i_q
        + p.e_mag / p.l_ind
        - p.omega * state.i_d
        - half_u0_over_l * u.u_q
    )
    du0 = -state.u0 / (p.r_load * p.c_cap) + 3.0 * (
        state.i_d * u.u_d + state.i_q * u.u_q
    ) / (4.0 * p.c_cap)
    return DqState(di_d, di_q, du0)


def observability_matrix(u_d: float, u_q: float, p: ConverterParams) -> np.ndarray:
    """Instantaneous observability matrix of the dq model seen from U0.

    Singular when u_d = u_q = 0 (no current information reaches the dc link).
    """
    c4 = 3.0 / (4.0 * p.c_cap)
    rc_inv = 1.0 / (p.r_load * p.c_cap)
    rho = c4 * (p.r / p.l_ind + rc_inv)
    om = p.omega
    return np.array(
        [
            [0.0, 0.0, 1.0],
            [c4 * u_d, c4 * u_q, -rc_inv],
            [
                -rho * u_d - c4 * om * u_q,
                c4 * om * u_d - rho * u_q,
                -3.0 * (u_d * u_d + u_q * u_q) / (8.0 * p.l_ind * p.c_cap) + rc_inv * rc_inv,
            ],
        ]
    )


def observability_rank(m: np.ndarray) -> int:
    """Numerical rank with threshold 1e-9 relative to the largest singular value."""
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > 1e-9 * s[0]))
