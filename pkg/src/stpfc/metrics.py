"""Power-quality metrics over integer-period windows.

A window carries samples of one signal plus the fundamental frequency its
length is synchronized to. Power factor per phase splits into a distortion
factor (fundamental rms over total rms, from a single-bin Fourier
projection) and a displacement factor (cosine of the current-to-voltage
fundamental phase shift); the product keeps the sign of the displacement
term, so reverse power reads negative. THD is derived from the distortion
factor as sqrt(1/pf_h**2 - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UndefinedPowerFactor",
    "SignalWindow",
    "PhasePowerFactor",
    "PowerFactorReport",
    "rms",
    "fundamental_component",
    "phase_power_factor",
    "total_power_factor",
    "thd_from_distortion",
]

_RMS_FLOOR = 1e-12

# renamed in numpy 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class UndefinedPowerFactor(ValueError):
    """Power factor of an (essentially) zero-rms current window."""

    def __init__(self, message: str, time_s: float | None = None):
        super().__init__(message)
        self.time_s = time_s


@dataclass(frozen=True)
class SignalWindow:
    """Samples of one signal over an integer number of fundamental periods."""

    t: np.ndarray
    x: np.ndarray
    fundamental_freq: float

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        if t.ndim != 1 or t.shape != x.shape or t.size < 8:
            raise ValueError("window needs matching 1-d t/x with at least 8 samples")
        if not (self.fundamental_freq > 0.0 and math.isfinite(self.fundamental_freq)):
            raise ValueError(f"fundamental_freq must be positive, got {self.fundamental_freq!r}")
        span = t[-1] - t[0]
        if span <= 0.0:
            raise ValueError("window time must be increasing")
        period = 1.0 / self.fundamental_freq
        cycles = span / period
        step = span / (t.size - 1)
        if round(cycles) < 1 or abs(cycles - round(cycles)) * period > step * (1 + 1e-9):
            raise ValueError(
                f"window spans {cycles:.6g} periods; need an integer count >= 1 "
                "within one sample"
            )

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


def rms(window: SignalWindow) -> float:
    """Trapezoidal root-mean-square over the window."""
    return math.sqrt(_trapezoid(window.x * window.x, window.t) / window.duration)


def fundamental_component(window: SignalWindow):
    """Single-bin Fourier projection at the fundamental.

    Returns (amplitude, phase) such that x(t) is approximated by
    amplitude * sin(2*pi*f*(t - t0) + phase) with t0 the window start.
    """
    w = 2.0 * math.pi * window.fundamental_freq
    ph = w * (window.t - window.t[0])
    scale = 2.0 / window.duration
    a = scale * _trapezoid(window.x * np.sin(ph), window.t)
    b = scale * _trapezoid(window.x * np.cos(ph), window.t)
    return math.hypot(a, b), math.atan2(b, a)


@dataclass(frozen=True)
class PhasePowerFactor:
    """One phase: signed pf and its distortion/displacement split."""

    pf: float
    distortion: float
    displacement: float
    thd: float


@dataclass(frozen=True)
class PowerFactorReport:
    """Per-phase results and their product for the three-phase set."""

    phase_a: PhasePowerFactor
    phase_b: PhasePowerFactor
    phase_c: PhasePowerFactor
    pf_total: float


def thd_from_distortion(distortion: float) -> float:
    """Total harmonic distortion implied by a distortion factor in (0, 1]."""
    if distortion <= 0.0:
        return math.inf
    return math.sqrt(max(0.0, 1.0 / (distortion * distortion) - 1.0))


def phase_power_factor(
    current: SignalWindow, voltage: SignalWindow
) -> PhasePowerFactor:
    """Power factor of one phase from synchronized current/voltage windows."""
    rms_i = rms(current)
    scale = max(1.0, float(np.max(np.abs(current.x))) if current.x.size else 1.0)
    if rms_i <= _RMS_FLOOR * scale:
        raise UndefinedPowerFactor("zero-rms current window has no power factor")
    amp_i, ph_i = fundamental_component(current)
    _, ph_v = fundamental_component(voltage)
    w = 2.0 * math.pi * current.fundamental_freq
    fund = amp_i * np.sin(w * (current.t - current.t[0]) + ph_i)
    rms_fund = math.sqrt(_trapezoid(fund * fund, current.t) / current.duration)
    distortion = min(1.0, rms_fund / rms_i)
    displacement = math.cos(ph_i - ph_v)
    return PhasePowerFactor(
        pf=distortion * displacement,
        distortion=distortion,
        displacement=displacement,
        thd=thd_from_distortion(distortion),
    )


def total_power_factor(pf_a: float, pf_b: float, pf_c: float) -> float:
    """Product of the three per-phase power factors."""
    return pf_a * pf_b * pf_c
