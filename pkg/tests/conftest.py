"""Shared scenario runs, session-scoped so the expensive traces build once."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import pytest

from stpfc.cli import parse_config
from stpfc.simulator import run_scenario

ROOT = Path(__file__).resolve().parent.parent

# q-axis current reference at 650 V for the 50 and 40 ohm loads, and the
# largest admissible dc reference at 50 ohm (150 * sqrt(937.5))
IQ_REF_50 = 37.74551878062448
IQ_REF_40 = 47.242018890963664
U0_MAX_50 = 4592.793267718459


@pytest.fixture(scope="session")
def table1_cfg():
    return parse_config((ROOT / "configs" / "table1.toml").read_text())


@pytest.fixture(scope="session")
def table1_params(table1_cfg):
    return table1_cfg.params


@pytest.fixture(scope="session")
def st_trace(table1_cfg):
    """Full reference scenario, observer-based super-twisting controller."""
    return run_scenario(table1_cfg)


@pytest.fixture(scope="session")
def pi_trace(table1_cfg):
    """Same scenario under the cascade PI baseline."""
    return run_scenario(dataclasses.replace(table1_cfg, controller="pi_baseline"))


@pytest.fixture(scope="session")
def observer_trace(table1_cfg):
    """Estimator reach experiment: plant parked at the 50-ohm operating
    point, estimator currents starting cold, soft gate so the approach to
    the sliding band is visible in the trace."""
    cfg = dataclasses.replace(
        table1_cfg,
        t_end=0.25,
        dt=1e-6,
        decimate=25,
        events=(),
        i_q_initial=IQ_REF_50,
        u0_initial=650.0,
        observer=dataclasses.replace(
            table1_cfg.observer, kappa=0.05, e3_threshold=0.05
        ),
    )
    return run_scenario(cfg)


@pytest.fixture(scope="session")
def mode_pair(table1_cfg):
    """Quarter-second startup in both integration modes, no events."""
    base = dataclasses.replace(table1_cfg, t_end=0.25, events=())
    avg = run_scenario(dataclasses.replace(base, mode="averaged"))
    sw = run_scenario(dataclasses.replace(base, mode="switched", dt=1e-6))
    return avg, sw


@pytest.fixture(scope="session")
def ideal_trace(table1_cfg):
    cfg = dataclasses.replace(
        table1_cfg,
        controller="ideal_current_loop",
        mode="averaged",
        t_end=0.05,
        dt=1e-5,
        decimate=5,
        events=(),
    )
    return run_scenario(cfg)
