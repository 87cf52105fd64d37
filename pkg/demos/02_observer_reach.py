"""Estimator reach from a cold start against a plant already at its operating
point: voltage error inside the sliding band, current-error norm decaying
faster than the open-loop r/L rate once the gate engages."""

import dataclasses
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stpfc.cli import parse_config
from stpfc.simulator import run_scenario

ROOT = Path(__file__).resolve().parent.parent
IQ_REF_50 = 37.74551878062448

base = parse_config((ROOT / "configs" / "table1.toml").read_text())
cfg = dataclasses.replace(
    base,
    t_end=0.25,
    dt=1e-6,
    decimate=25,
    events=(),
    i_q_initial=IQ_REF_50,
    u0_initial=650.0,
    observer=dataclasses.replace(base.observer, kappa=0.05, e3_threshold=0.05),
)
tr = run_scenario(cfg)

e3 = tr.u0 - tr.u0_hat
norm = np.hypot(tr.id - tr.id_hat, tr.iq - tr.iq_hat)

# fit the decay over the stretch where the norm is still informative
stop = int(np.argmax(norm < 0.1))
rate = -np.polyfit(tr.t[:stop], np.log(norm[:stop]), 1)[0]
open_loop = cfg.params.r / cfg.params.l_ind

fig, axes = plt.subplots(1, 2, figsize=(11, 4), constrained_layout=True)

ax = axes[0]
ax.plot(tr.t, e3, lw=0.9)
ax.axhline(0.65, color="k", ls="--", lw=0.8)
ax.axhline(-0.65, color="k", ls="--", lw=0.8)
ax.set_title("voltage estimation error and the 0.65 V band")
ax.set_xlabel("t, s")
ax.set_ylabel("V")

ax = axes[1]
ax.semilogy(tr.t, np.maximum(norm, 1e-12), lw=0.9, label="measured")
ax.semilogy(
    tr.t[:stop],
    norm[0] * np.exp(-rate * tr.t[:stop]),
    "k--",
    lw=1.0,
    label=f"fit: {rate:.1f} 1/s",
)
ax.semilogy(
    tr.t[:stop],
    norm[0] * np.exp(-open_loop * tr.t[:stop]),
    "r:",
    lw=1.0,
    label=f"open loop r/L = {open_loop:.0f} 1/s",
)
ax.set_title("current estimation error norm")
ax.set_xlabel("t, s")
ax.set_ylabel("A")
ax.legend(fontsize=8)

out = Path(__file__).with_suffix(".png")
fig.savefig(out, dpi=130)
print(f"wrote {out}; max |e3| = {np.abs(e3).max():.3f} V, decay {rate:.1f} 1/s")
