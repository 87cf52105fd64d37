"""Scalar super-twisting injection with an explicit-Euler integral state.

For an error e the injection is

    mu = lam * sqrt(|e|) * sign(e) + z,      z' = alpha * sign(e)

with sign(0) = 0 so a settled error stops driving the integral. The pair
(lam, alpha) is valid against a disturbance-derivative bound F when
alpha > F and lam**2 > alpha; `validate_gains` checks exactly that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["STGains", "STState", "sta_step", "validate_gains"]


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class STGains:
    """Square-root gain, integral gain, and the bound they must dominate."""

    lam: float
    alpha: float
    f_bound: float = 0.0


@dataclass(frozen=True)
class STState:
    """Integral state of one super-twisting loop."""

    z: float = 0.0


def validate_gains(gains: STGains) -> bool:
    """True iff alpha > f_bound and lam**2 > alpha."""
    return gains.alpha > gains.f_bound and gains.lam * gains.lam > gains.alpha


def sta_step(state: STState, e: float, gains: STGains, dt: float):
    """Advance the integral state one step and evaluate the injection.

    Parameters
    ----------
    state : STState
        Integral state before the step.
    e : float
        Current sliding error.
    gains : STGains
        Gain pair; not revalidated here.
    dt : float
        Step length in seconds. dt = 0 evaluates mu without advancing z.

    Returns
    -------
    (STState, float)
        Updated state and the injection mu (computed with the updated z).
    """
    if not (math.isfinite(e) and math.isfinite(dt)) or dt < 0.0:
        raise ValueError(f"sta_step needs finite e and dt >= 0, got e={e!r} dt={dt!r}")
    s = _sign(e)
    z = state.z + gains.alpha * s * dt
    mu = gains.lam * math.sqrt(abs(e)) * s + z
    return STState(z), mu
