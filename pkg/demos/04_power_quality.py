"""Windowed power-quality numbers on three constructed current shapes.

The voltage is always a clean 75 Hz tone. Currents: a matching clean tone,
the same tone with an equal third harmonic (distortion factor 1/sqrt(2)),
and a clean tone lagging 60 degrees (displacement factor 0.5).
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stpfc.metrics import SignalWindow, phase_power_factor

F0 = 75.0
W0 = 2.0 * math.pi * F0
t = np.arange(801) / (400.0 * F0)
voltage = np.sin(W0 * t)

cases = (
    ("in phase, clean", np.sin(W0 * t)),
    ("equal 3rd harmonic", np.sin(W0 * t) + np.sin(3.0 * W0 * t)),
    ("lagging 60 deg", np.sin(W0 * t - math.pi / 3.0)),
)

fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), constrained_layout=True)
for ax, (title, current) in zip(axes, cases):
    r = phase_power_factor(
        SignalWindow(t, current, F0), SignalWindow(t, voltage, F0)
    )
    ax.plot(t * 1e3, voltage, "k--", lw=0.8, label="voltage (scaled)")
    ax.plot(t * 1e3, current, lw=0.9, label="current")
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("t, ms")
    ax.text(
        0.02,
        0.02,
        f"pf = {r.pf:.3f}\ndistortion = {r.distortion:.3f}\n"
        f"displacement = {r.displacement:.3f}\nthd = {r.thd:.3f}",
        transform=ax.transAxes,
        fontsize=8,
        va="bottom",
        bbox=dict(boxstyle="round", fc="w", alpha=0.8),
    )
axes[0].legend(fontsize=8, loc="upper right")
axes[0].set_ylabel("normalized amplitude")

out = Path(__file__).with_suffix(".png")
fig.savefig(out, dpi=130)
print(f"wrote {out}")
