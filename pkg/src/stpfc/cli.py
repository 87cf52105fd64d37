"""Batch front door: parse configs, run scenarios or sweeps, write artifacts.

A run produces three files in the output directory: ``trace.csv`` with the
decimated samples, ``summary.txt`` with line-oriented ``key = value`` pairs,
and ``plots.py``, a standalone matplotlib script that renders the standard
six-panel figure from the CSV. Sweeps add one subdirectory per combination
plus a combined ``sweep.csv``.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 has no stdlib TOML reader
    import tomli as tomllib

from .controller import ReferenceConstraintError
from .metrics import UndefinedPowerFactor
from .plant import ConverterParams
from .simulator import (
    Event,
    LoadObserverConfig,
    ObserverConfig,
    PIConfig,
    ScenarioConfig,
    SimulationDivergence,
    StControlConfig,
    Trace,
    run_scenario,
    write_trace_csv,
)
from .sta import STGains

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CONSTRAINT = 4
EXIT_CHECK = 5
EXIT_NOT_FOUND = 6
EXIT_NO_PF = 7

# flag spellings -> ScenarioConfig.controller literals
CONTROLLER_ALIASES = {
    "st": "st_observer_based",
    "pi": "pi_baseline",
    "ideal": "ideal_current_loop",
}


class ConfigError(ValueError):
    """Config document rejected; message names the key and line when known."""


def _line_of(text: str, key: str) -> int | None:
    # best effort: first line whose assignment or table header mentions the key
    leaf = key.rsplit(".", 1)[-1]
    pat = re.compile(r"^\s*(\[+[^\]]*" + re.escape(leaf) + r"|" + re.escape(leaf) + r"\s*=)")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _fail(text: str, key: str, why: str):
    line = _line_of(text, key)
    at = f" (line {line})" if line is not None else ""
    raise ConfigError(f"config key '{key}': {why}{at}")


_GAINS = {"lam": float, "alpha": float, "f_bound": float}
_SCHEMA = {
    "params": {
        "r": float, "l_ind": float, "c_cap": float, "r_load": float,
        "r_nominal": float, "e_mag": float, "omega": float,
    },
    "run": {
        "u0_ref": float, "u0_initial": float, "i_d_initial": float,
        "i_q_initial": float, "t_end": float, "dt": float, "mode": str,
        "controller": str, "carrier_freq": float, "decimate": int,
        "noise_std": float, "seed": int, "meas_filter_tau": float,
    },
    "events": {"time_s": float, "key": str, "value": float},
    "observer": {
        "gains": _GAINS, "kappa": float, "e3_threshold": float,
        "i_d_init": float, "i_q_init": float, "u0_init": float,
    },
    "load_observer": {"gains": _GAINS, "smoothing_tau": float, "eps_den": float},
    "control": {
        "gains_d": _GAINS, "gains_q": _GAINS,
        "u0_floor": float, "ref_filter_tau": float,
    },
    "pi": {"kp_v": float, "ki_v": float, "kp_i": float, "ki_i": float, "iq_limit": float},
}


def _coerce(value, want, dotted: str, text: str):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(text, dotted, f"expected a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(text, dotted, f"expected an integer, got {value!r}")
        return value
    if not isinstance(value, str):
        _fail(text, dotted, f"expected a string, got {value!r}")
    return value


def _leaves(schema: dict, out: set) -> set:
    for key, want in schema.items():
        out.add(key)
        if isinstance(want, dict):
            _leaves(want, out)
    return out


_LEAF_KEYS = _leaves(_SCHEMA, set())


def _take(table: dict, schema: dict, prefix: str, text: str) -> dict:
    if not isinstance(table, dict):
        _fail(text, prefix, "expected a table")
    out = {}
    for key, value in table.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            _fail(text, dotted, "unknown key")
        want = schema[key]
        if isinstance(want, dict):
            out[key] = _take(value, want, dotted, text)
        else:
            out[key] = _coerce(value, want, dotted, text)
    return out


def _gains(table: dict, defaults: STGains) -> STGains:
    return STGains(
        lam=table.get("lam", defaults.lam),
        alpha=table.get("alpha", defaults.alpha),
        f_bound=table.get("f_bound", defaults.f_bound),
    )


def _vet(data: dict, text: str) -> dict:
    out = {}
    for section, value in data.items():
        if section == "events":
            if not isinstance(value, list):
                _fail(text, "events", "expected an array of tables")
            out["events"] = [
                _take(ev, _SCHEMA["events"], f"events[{i}]", text)
                for i, ev in enumerate(value)
            ]
        elif section in _SCHEMA:
            out[section] = _take(value, _SCHEMA[section], section, text)
        else:
            _fail(text, section, "unknown key")
    return out


def config_dict(text: str) -> dict:
    """TOML text -> plain nested dict, all keys and value types vetted."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return _vet(data, text)


def build_config(data: dict, text: str = "") -> ScenarioConfig:
    """Vetted dict -> validated ScenarioConfig; missing keys take defaults."""
    pd = dict(r=0.02, l_ind=2e-3, c_cap=1e-4, r_load=50.0, r_nominal=50.0,
              e_mag=150.0, omega=150.0 * math.pi)
    pd.update(data.get("params", {}))
    run = data.get("run", {})
    obs = data.get("observer", {})
    lob = data.get("load_observer", {})
    ctl = data.get("control", {})
    pit = data.get("pi", {})
    try:
        params = ConverterParams(**pd)
        odef = ObserverConfig()
        observer = ObserverConfig(
            gains=_gains(obs.get("gains", {}), odef.gains),
            kappa=obs.get("kappa", odef.kappa),
            e3_threshold=obs.get("e3_threshold", odef.e3_threshold),
            i_d_init=obs.get("i_d_init", 0.0),
            i_q_init=obs.get("i_q_init", 0.0),
            u0_init=obs.get("u0_init"),  # absent key means "start from measured"
        )
        ldef = LoadObserverConfig()
        load_observer = LoadObserverConfig(
            gains=_gains(lob.get("gains", {}), ldef.gains),
            smoothing_tau=lob.get("smoothing_tau", ldef.smoothing_tau),
            eps_den=lob.get("eps_den", ldef.eps_den),
        )
        cdef = StControlConfig()
        control = StControlConfig(
            gains_d=_gains(ctl.get("gains_d", {}), cdef.gains_d),
            gains_q=_gains(ctl.get("gains_q", {}), cdef.gains_q),
            u0_floor=ctl.get("u0_floor", cdef.u0_floor),
            ref_filter_tau=ctl.get("ref_filter_tau", cdef.ref_filter_tau),
        )
        pdef = PIConfig()
        pi = PIConfig(
            kp_v=pit.get("kp_v", pdef.kp_v),
            ki_v=pit.get("ki_v", pdef.ki_v),
            kp_i=pit.get("kp_i", pdef.kp_i),
            ki_i=pit.get("ki_i", pdef.ki_i),
            iq_limit=pit.get("iq_limit", pdef.iq_limit),
        )
        events = tuple(
            Event(ev["time_s"], ev["key"], ev["value"])
            for ev in data.get("events", [])
        )
        sdef = ScenarioConfig(params=params, u0_ref=650.0)
        cfg = ScenarioConfig(
            params=params,
            u0_ref=run.get("u0_ref", 650.0),
            u0_initial=run.get("u0_initial", sdef.u0_initial),
            i_d_initial=run.get("i_d_initial", 0.0),
            i_q_initial=run.get("i_q_initial", 0.0),
            t_end=run.get("t_end", sdef.t_end),
            dt=run.get("dt", sdef.dt),
            mode=run.get("mode", sdef.mode),
            controller=run.get("controller", sdef.controller),
            carrier_freq=run.get("carrier_freq", sdef.carrier_freq),
            events=events,
            observer=observer,
            load_observer=load_observer,
            control=control,
            pi=pi,
            decimate=run.get("decimate", sdef.decimate),
            noise_std=run.get("noise_std", 0.0),
            seed=run.get("seed", 0),
            meas_filter_tau=run.get("meas_filter_tau", sdef.meas_filter_tau),
        )
        cfg.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        # attach a line number when the message names a key from the document
        msg = str(exc)
        at = ""
        for token in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", msg):
            if token in _LEAF_KEYS:
                line = _line_of(text, token)
                if line is not None:
                    at = f" (line {line})"
                    break
        raise ConfigError(f"config invalid: {msg}{at}") from exc
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    """Parse a TOML scenario document. Unspecified fields take the defaults
    documented in docs/config.md; an empty document is the Table-1 averaged
    ST scenario with no events."""
    return build_config(config_dict(text), text)


@dataclass
class RunSummary:
    """Aggregates one run; every numeric field is finite."""

    scenario_id: str
    u0_steady_mean_v: float
    u0_steady_ripple_v: float  # peak to peak over the tail window
    overshoot_pct: float
    settling_time_s: float
    pf_total_steady_avg: float
    pf_total_min_after_transients: float
    rl_tracking_error_pct: float
    t_reach_e3_s: float
    saturation_count: int
    den_hold_count: int
    runtime_s: float


def _final(cfg: ScenarioConfig, key: str, base: float) -> float:
    for ev in cfg.events:
        if ev.key == key:
            base = ev.value
    return base


def summarize(trace: Trace, cfg: ScenarioConfig, scenario_id: str = "run") -> RunSummary:
    """Reduce a trace to the standard report quantities.

    The steady window is the last five fundamental periods; settling time is
    the last departure from the +/-1% band around the reference (t_end when
    still outside at the end); T_reach is the first time |u0 - u0_hat| drops
    below 1e-3 * u0_ref for good. Runs shorter than one fundamental period
    carry no power factor and are rejected.
    """
    t = trace.t
    u0 = trace.u0
    periods = trace.pf_periods
    if len(periods) == 0:
        raise ValueError("run shorter than one fundamental period; nothing to summarize")
    omega_end = _final(cfg, "omega", cfg.params.omega)
    t_tail = t[-1] - 5.0 * (2.0 * math.pi / omega_end)
    tail = t >= t_tail
    mean = float(np.mean(u0[tail]))
    ripple = float(np.max(u0[tail]) - np.min(u0[tail]))

    overshoot = max(0.0, (float(np.max(u0)) - cfg.u0_ref) / cfg.u0_ref * 100.0)
    band = 0.01 * cfg.u0_ref
    outside = np.nonzero(np.abs(u0 - cfg.u0_ref) > band)[0]
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] == len(t) - 1:
        settle = float(t[-1])
    else:
        settle = float(t[outside[-1] + 1])

    pf_avg = float(np.mean(periods[-5:, 4]))
    late = periods[periods[:, 0] >= 0.2]
    pf_min = float(np.min((late if len(late) else periods)[:, 4]))

    r_true = _final(cfg, "r_load", cfg.params.r_load)
    rl_err = abs(float(trace.rl_hat[-1]) - r_true) / r_true * 100.0

    below = np.abs(u0 - trace.u0_hat) < 1e-3 * cfg.u0_ref
    held = np.logical_and.accumulate(below[::-1])[::-1]  # true where below to the end
    t_reach = float(t[np.argmax(held)]) if held[-1] else float(t[-1])

    return RunSummary(
        scenario_id=scenario_id,
        u0_steady_mean_v=mean,
        u0_steady_ripple_v=ripple,
        overshoot_pct=overshoot,
        settling_time_s=settle,
        pf_total_steady_avg=pf_avg,
        pf_total_min_after_transients=pf_min,
        rl_tracking_error_pct=rl_err,
        t_reach_e3_s=t_reach,
        saturation_count=trace.saturation_count,
        den_hold_count=trace.hold_count,
        runtime_s=trace.runtime_s,
    )


def _segments(cfg: ScenarioConfig):
    """(t_start, t_end, omega, r_load) for each between-events stretch."""
    omega = cfg.params.omega
    r_load = cfg.params.r_load
    bounds = [0.0] + [ev.time_s for ev in cfg.events] + [cfg.t_end]
    out = []
    idx = 0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        while idx < len(cfg.events) and cfg.events[idx].time_s <= lo:
            ev = cfg.events[idx]
            if ev.key == "omega":
                omega = ev.value
            else:
                r_load = ev.value
            idx += 1
        if hi > lo:
            out.append((lo, hi, omega, r_load))
    return out


def run_checks(trace: Trace, cfg: ScenarioConfig):
    """Acceptance-style gates on one run: (name, ok, detail) per check.

    Per steady segment tail (last 5 fundamental periods): PF_total >= 0.97,
    mean U0 within 1% of the reference, power-balance residual within 1% of
    the delivered power. Per event: back inside the 1% band within 0.2 s;
    per load event additionally R_hat within 2% from 0.1 s after the step.
    """
    t = trace.t
    u0 = trace.u0
    results = []
    band = 0.01 * cfg.u0_ref
    e = cfg.params.e_mag
    r = cfg.params.r
    for n, (lo, hi, omega, r_load) in enumerate(_segments(cfg), start=1):
        tail0 = hi - 5.0 * (2.0 * math.pi / omega)
        w = (t >= max(lo, tail0)) & (t <= hi)
        if not np.any(w):
            continue
        rows = trace.pf_periods
        rows = rows[(rows[:, 0] > max(lo, tail0)) & (rows[:, 0] <= hi)]
        if len(rows):
            pf = float(np.mean(rows[:, 4]))
            results.append((f"pf_seg{n}", pf >= 0.97, f"steady PF_total {pf:.5f} >= 0.97"))
        mean = float(np.mean(u0[w]))
        results.append((
            f"u0_seg{n}",
            abs(mean - cfg.u0_ref) <= band,
            f"steady mean {mean:.2f} V within 1% of {cfg.u0_ref:g} V",
        ))
        fed = 1.5 * (trace.iq[w] * e - r * (trace.id[w] ** 2 + trace.iq[w] ** 2))
        drawn = u0[w] ** 2 / r_load
        resid = abs(float(np.mean(fed - drawn)))
        lim = 0.01 * float(np.mean(drawn))
        results.append((
            f"balance_seg{n}",
            resid <= lim,
            f"power residual {resid:.1f} W within {lim:.1f} W",
        ))
    for n, ev in enumerate(cfg.events, start=1):
        nxt = min(
            [e2.time_s for e2 in cfg.events if e2.time_s > ev.time_s] + [cfg.t_end]
        )
        w = (t >= ev.time_s) & (t <= nxt)
        seg_t = t[w]
        out = np.nonzero(np.abs(u0[w] - cfg.u0_ref) > band)[0]
        if out.size == 0:
            rec = 0.0
        elif out[-1] == seg_t.size - 1:
            rec = float(nxt - ev.time_s)
        else:
            rec = float(seg_t[out[-1] + 1] - ev.time_s)
        results.append((
            f"recovery_ev{n}",
            rec <= 0.2,
            f"back in the 1% band {rec:.3f} s after t={ev.time_s:g} s",
        ))
        if ev.key == "r_load":
            w2 = (t >= ev.time_s + 0.1) & (t <= nxt)
            if np.any(w2):
                err = float(np.max(np.abs(trace.rl_hat[w2] - ev.value))) / ev.value
                results.append((
                    f"rl_track_ev{n}",
                    err <= 0.02,
                    f"load estimate within {err * 100.0:.2f}% of {ev.value:g} ohm",
                ))
    return results


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_summary(path, summary: RunSummary, cfg: ScenarioConfig, checks=None):
    lines = [
        f"scenario_id = {summary.scenario_id}",
        f"controller = {cfg.controller}",
        f"mode = {cfg.mode}",
        f"dt_s = {_fmt(cfg.dt)}",
        f"t_end_s = {_fmt(cfg.t_end)}",
        f"u0_ref_v = {_fmt(cfg.u0_ref)}",
    ]
    for name in (
        "u0_steady_mean_v", "u0_steady_ripple_v", "overshoot_pct",
        "settling_time_s", "pf_total_steady_avg", "pf_total_min_after_transients",
        "rl_tracking_error_pct", "t_reach_e3_s", "saturation_count",
        "den_hold_count", "runtime_s",
    ):
        lines.append(f"{name} = {_fmt(getattr(summary, name))}")
    if checks is not None:
        for name, ok, _ in checks:
            lines.append(f"check_{name} = {'pass' if ok else 'fail'}")
        lines.append(f"checks = {'pass' if all(ok for _, ok, _ in checks) else 'fail'}")
    Path(path).write_text("\n".join(lines) + "\n")


_PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Render the six standard panels from trace.csv (same directory)."""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

U0_REF = {u0_ref!r}
R_NOMINAL = {r_nominal!r}

here = Path(__file__).resolve().parent
path = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "trace.csv"
with open(path, newline="") as fh:
    reader = csv.reader(fh)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader])
col = {{name: data[:, i] for i, name in enumerate(header)}}
t = col["t"]

fig, axes = plt.subplots(3, 2, figsize=(11, 10), constrained_layout=True)

ax = axes[0][0]
ax.plot(t, col["u0"], lw=0.8)
ax.axhline(U0_REF, color="k", ls="--", lw=0.8)
ax.set_title("dc-link voltage")
ax.set_ylabel("V")

ax = axes[0][1]
ax.plot(t, col["id"], lw=0.8, label="i_d")
ax.plot(t, col["iq"], lw=0.8, label="i_q")
ax.plot(t, col["iq_ref"], "k--", lw=0.8, label="i_q ref")
ax.set_title("dq currents")
ax.set_ylabel("A")
ax.legend(loc="lower right", fontsize=8)

ax = axes[1][0]
w = t >= t[-1] - 0.04
ax.plot(t[w], col["ia"][w], lw=0.8, label="i_a")
ax.plot(t[w], col["ib"][w], lw=0.8, label="i_b")
ax.plot(t[w], col["ic"][w], lw=0.8, label="i_c")
ax.set_title("phase currents (final 40 ms)")
ax.set_ylabel("A")
ax.legend(loc="lower right", fontsize=8)

ax = axes[1][1]
ax.plot(t, col["id"] - col["id_hat"], lw=0.8, label="e1")
ax.plot(t, col["iq"] - col["iq_hat"], lw=0.8, label="e2")
ax.plot(t, col["u0"] - col["u0_hat"], lw=0.8, label="e3")
ax.set_title("estimation errors")
ax.legend(loc="upper right", fontsize=8)

ax = axes[2][0]
ax.plot(t, col["rl_hat"], lw=0.8)
ax.axhline(R_NOMINAL, color="k", ls="--", lw=0.8)
ax.set_title("load resistance estimate")
ax.set_ylabel("ohm")
ax.set_xlabel("t, s")

ax = axes[2][1]
ok = np.isfinite(col["pf_total"])
ax.plot(t[ok], col["pf_total"][ok], lw=0.8)
ax.axhline(0.97, color="k", ls="--", lw=0.8)
ax.set_title("total power factor per period")
ax.set_ylim(0.8, 1.01)
ax.set_xlabel("t, s")

out = here / "plots.png"
fig.savefig(out, dpi=130)
print(f"wrote {{out}}")
'''


def plot_script(cfg: ScenarioConfig) -> str:
    return _PLOT_SCRIPT.format(u0_ref=cfg.u0_ref, r_nominal=cfg.params.r_nominal)


def _apply_overrides(data: dict, args) -> dict:
    run = data.setdefault("run", {})
    if args.controller is not None:
        run["controller"] = CONTROLLER_ALIASES[args.controller]
    if args.mode is not None:
        run["mode"] = args.mode
    if args.dt is not None:
        run["dt"] = args.dt
    if args.decimate is not None:
        run["decimate"] = args.decimate
    return data


def _scenario_id(path: Path, cfg: ScenarioConfig) -> str:
    short = {v: k for k, v in CONTROLLER_ALIASES.items()}[cfg.controller]
    return f"{path.stem}_{short}_{cfg.mode}"


def _execute(cfg: ScenarioConfig, out: Path, scenario_id: str, check: bool):
    """Run one scenario and write its artifact set. Returns (exit, summary)."""
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_scenario(cfg)
    except SimulationDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED, None
    except ReferenceConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT, None
    except UndefinedPowerFactor as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PF, None
    write_trace_csv(out / "trace.csv", trace)
    summary = summarize(trace, cfg, scenario_id)
    checks = run_checks(trace, cfg) if check else None
    write_summary(out / "summary.txt", summary, cfg, checks)
    (out / "plots.py").write_text(plot_script(cfg))
    code = EXIT_OK
    if checks is not None:
        for name, ok, detail in checks:
            print(f"check {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        if not all(ok for _, ok, _ in checks):
            code = EXIT_CHECK
    return code, summary


def cmd_run(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return EXIT_NOT_FOUND
    text = path.read_text()
    try:
        data = _apply_overrides(config_dict(text), args)
        cfg = build_config(data, text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    code, summary = _execute(cfg, out, _scenario_id(path, cfg), args.check)
    if summary is not None:
        print(
            f"{summary.scenario_id}: U0 {summary.u0_steady_mean_v:.2f} V "
            f"(ripple {summary.u0_steady_ripple_v:.2f} V), "
            f"PF {summary.pf_total_steady_avg:.4f}, "
            f"runtime {summary.runtime_s:.2f} s -> {out}"
        )
    return code


def _parse_axis(spec: str):
    key, _, rhs = spec.partition("=")
    key = key.strip()
    if not key or not rhs:
        raise ConfigError(f"axis must look like dotted.key=v1,v2 got {spec!r}")
    values = []
    for item in rhs.split(","):
        item = item.strip()
        try:
            values.append(int(item))
        except ValueError:
            try:
                values.append(float(item))
            except ValueError:
                values.append(item)
    return key, values


def _set_dotted(data: dict, dotted: str, value):
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"axis key '{dotted}' does not name a table entry")
    node[parts[-1]] = value


_SWEEP_FIELDS = (
    "u0_steady_mean_v", "u0_steady_ripple_v", "overshoot_pct", "settling_time_s",
    "pf_total_steady_avg", "pf_total_min_after_transients",
    "rl_tracking_error_pct", "t_reach_e3_s", "saturation_count",
    "den_hold_count", "runtime_s",
)


def _sweep_row(job) -> dict:
    idx, text, overrides, out_dir = job
    row = {"run": idx}
    row.update({k: _fmt(v) for k, v in overrides})
    try:
        data = tomllib.loads(text)  # template syntax pre-checked by cmd_sweep
        for key, value in overrides:
            _set_dotted(data, key, value)
        cfg = build_config(_vet(data, text), text)
    except ConfigError as exc:
        row.update(status="config-error", error=str(exc))
        return row
    out = Path(out_dir) / f"run-{idx:03d}"
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_scenario(cfg)
        summary = summarize(trace, cfg, f"run-{idx:03d}")
    except SimulationDivergence as exc:
        row.update(status="diverged", error=str(exc))
        return row
    except ReferenceConstraintError as exc:
        row.update(status="constraint-violation", error=str(exc))
        return row
    except UndefinedPowerFactor as exc:
        row.update(status="undefined-pf", error=str(exc))
        return row
    write_trace_csv(out / "trace.csv", trace)
    write_summary(out / "summary.txt", summary, cfg)
    row.update(status="ok", error="")
    for name in _SWEEP_FIELDS:
        row[name] = _fmt(getattr(summary, name))
    return row


def cmd_sweep(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return EXIT_NOT_FOUND
    text = path.read_text()
    try:
        config_dict(text)  # fail fast on a broken template
        axes = [_parse_axis(spec) for spec in args.axis or []]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    keys = [key for key, _ in axes]
    combos = list(itertools.product(*[values for _, values in axes]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (idx, text, tuple(zip(keys, combo)), str(out))
        for idx, combo in enumerate(combos)
    ]
    workers = args.jobs or min(len(jobs), os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    rows.sort(key=lambda r: r["run"])
    header = ["run", *keys, "status", "error", *_SWEEP_FIELDS]
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, restval="")
        writer.writeheader()
        writer.writerows(rows)
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"sweep: {n_ok}/{len(rows)} runs ok -> {out / 'sweep.csv'}")
    return EXIT_OK if n_ok == len(rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stpfc",
        description="Observer-based super-twisting control of a three-phase "
        "boost rectifier: batch simulation runner.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write artifacts")
    run_p.add_argument("config", help="scenario TOML file")
    run_p.add_argument("--out", default="out", help="artifact directory (default: out)")
    run_p.add_argument("--controller", choices=sorted(CONTROLLER_ALIASES))
    run_p.add_argument("--mode", choices=("averaged", "switched"))
    run_p.add_argument("--dt", type=float, help="integration step, s")
    run_p.add_argument("--decimate", type=int, help="log every Nth step")
    run_p.add_argument(
        "--check",
        action="store_true",
        help="evaluate steady-state gates (PF, regulation, balance, load tracking)",
    )

    sweep_p = sub.add_parser("sweep", help="run a cartesian sweep of config overrides")
    sweep_p.add_argument("config", help="template TOML file")
    sweep_p.add_argument(
        "--axis",
        action="append",
        metavar="KEY=V1,V2,...",
        help="dotted config key with comma-separated values; repeatable",
    )
    sweep_p.add_argument("--out", default="sweep_out")
    sweep_p.add_argument("--jobs", type=int, help="parallel processes (default: auto)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "run":
        return cmd_run(args)
    return cmd_sweep(args)


if __name__ == "__main__":
    sys.exit(main())
