"""Observer-based super-twisting controller against the cascade PI baseline
through the 50 -> 40 ohm load step."""

import dataclasses
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stpfc.cli import parse_config
from stpfc.simulator import run_scenario

ROOT = Path(__file__).resolve().parent.parent

base = parse_config((ROOT / "configs" / "table1.toml").read_text())
base = dataclasses.replace(base, t_end=1.5, events=base.events[:1])
st = run_scenario(base)
pi = run_scenario(dataclasses.replace(base, controller="pi_baseline"))

fig, axes = plt.subplots(2, 2, figsize=(11, 7), constrained_layout=True)

ax = axes[0][0]
ax.plot(st.t, st.u0, lw=0.8, label="super-twisting")
ax.plot(pi.t, pi.u0, lw=0.8, label="PI cascade")
ax.axhline(650.0, color="k", ls="--", lw=0.8)
ax.set_title("dc-link voltage, full run")
ax.set_ylabel("V")
ax.legend(fontsize=8)

w_st = (st.t >= 0.95) & (st.t <= 1.4)
w_pi = (pi.t >= 0.95) & (pi.t <= 1.4)

ax = axes[0][1]
ax.plot(st.t[w_st], st.u0[w_st], lw=0.9, label="super-twisting")
ax.plot(pi.t[w_pi], pi.u0[w_pi], lw=0.9, label="PI cascade")
ax.axhspan(650.0 * 0.99, 650.0 * 1.01, color="k", alpha=0.08)
ax.set_title("load-step detail")
ax.set_ylabel("V")
ax.legend(fontsize=8)

ax = axes[1][0]
ax.plot(st.t[w_st], st.iq[w_st], lw=0.9, label="super-twisting")
ax.plot(pi.t[w_pi], pi.iq[w_pi], lw=0.9, label="PI cascade")
ax.plot(st.t[w_st], st.iq_ref[w_st], "k--", lw=0.8, label="reference")
ax.set_title("q-axis current through the step")
ax.set_xlabel("t, s")
ax.set_ylabel("A")
ax.legend(fontsize=8)

ax = axes[1][1]
for tr, name in ((st, "super-twisting"), (pi, "PI cascade")):
    rows = tr.pf_periods
    w = (rows[:, 0] > 0.95) & (rows[:, 0] <= 1.4)
    ax.plot(rows[w, 0], rows[w, 4], ".-", ms=3, lw=0.6, label=name)
ax.axhline(0.97, color="k", ls="--", lw=0.8)
ax.set_title("total power factor per period")
ax.set_xlabel("t, s")
ax.legend(fontsize=8)

def post_step(tr):
    w = (tr.t > 1.0) & (tr.t <= 1.5)
    rows = tr.pf_periods
    pw = (rows[:, 0] > 1.0) & (rows[:, 0] <= 1.5)
    return float(np.max(tr.u0[w])) - 650.0, float(np.min(rows[pw, 4]))

st_over, st_pf = post_step(st)
pi_over, pi_pf = post_step(pi)
out = Path(__file__).with_suffix(".png")
fig.savefig(out, dpi=130)
print(f"wrote {out}")
print(f"post-step overshoot: ST {st_over:.2f} V, PI {pi_over:.2f} V")
print(f"post-step minimum PF: ST {st_pf:.5f}, PI {pi_pf:.5f}")
