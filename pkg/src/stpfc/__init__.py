"""Simulation library for observer-based super-twisting control of a
three-phase AC/DC boost rectifier with power factor correction.

The public surface groups into the algorithm blocks (`sta`, `observer`,
`controller`), the converter models and frame transforms (`plant`), the
scoring operations (`metrics`), and the scenario engine plus batch CLI
(`simulator`, `cli`).
"""

from .controller import (
    PIState,
    ReferenceConstraintError,
    ReferenceFilter,
    ReferenceSet,
    SlidingVars,
    pi_control,
    pwm_modulate,
    reference_bound,
    reference_currents,
    sliding_variables,
    st_control,
)
from .metrics import (
    PhasePowerFactor,
    PowerFactorReport,
    SignalWindow,
    UndefinedPowerFactor,
    fundamental_component,
    phase_power_factor,
    rms,
    thd_from_distortion,
    total_power_factor,
)
from .observer import (
    LoadObserverState,
    ObserverState,
    correction_gains,
    error_dynamics,
    load_observer_step,
    lyapunov_v,
    observer_step,
)
from .plant import (
    ConverterParams,
    DqControl,
    DqState,
    PhaseState,
    inverse_park,
    observability_matrix,
    observability_rank,
    park_transform,
    plant_derivatives_abc,
    plant_derivatives_dq,
    source_voltages,
)
from .simulator import (
    Event,
    LoadObserverConfig,
    ObserverConfig,
    PIConfig,
    ScenarioConfig,
    SimulationDivergence,
    StControlConfig,
    Trace,
    apply_events,
    integrate_step,
    read_trace_csv,
    run_scenario,
    write_trace_csv,
)
from .sta import STGains, STState, sta_step, validate_gains

__version__ = "0.1.0"

__all__ = [
    "ConverterParams",
    "DqControl",
    "DqState",
    "Event",
    "LoadObserverConfig",
    "LoadObserverState",
    "ObserverConfig",
    "ObserverState",
    "PIConfig",
    "PIState",
    "PhasePowerFactor",
    "PhaseState",
    "PowerFactorReport",
    "ReferenceConstraintError",
    "ReferenceFilter",
    "ReferenceSet",
    "STGains",
    "STState",
    "ScenarioConfig",
    "SignalWindow",
    "SimulationDivergence",
    "SlidingVars",
    "StControlConfig",
    "Trace",
    "UndefinedPowerFactor",
    "apply_events",
    "correction_gains",
    "error_dynamics",
    "fundamental_component",
    "integrate_step",
    "inverse_park",
    "load_observer_step",
    "lyapunov_v",
    "observability_matrix",
    "observability_rank",
    "observer_step",
    "park_transform",
    "phase_power_factor",
    "pi_control",
    "plant_derivatives_abc",
    "plant_derivatives_dq",
    "pwm_modulate",
    "read_trace_csv",
    "reference_bound",
    "reference_currents",
    "rms",
    "run_scenario",
    "sliding_variables",
    "source_voltages",
    "st_control",
    "sta_step",
    "thd_from_distortion",
    "total_power_factor",
    "validate_gains",
    "write_trace_csv",
]
