"""Predictor-based networked control with event-triggered transmissions."""

from .bench import PendulumSpec, pendulum, table1
from .design import DesignParams, SweepRow, max_h_bisection, sweep_sigma, synthesize_gain
from .matexp import ZohPair, expm, input_integral, riemann_oracle, zoh_discretize
from .model import (
    Config,
    DelayProfile,
    EventTimeline,
    Gain,
    LtiPlant,
    Scenario,
    TriggerParams,
    derived_bounds,
    load_config,
    validate_assumption,
)
from .predictor import ControlHistory, PredictorState, predict_sampled, predict_state, step_continuous
from .simulator import (
    SimConfig,
    SimResult,
    detect_switch_event,
    generate_timeline,
    run_continuous,
    run_sampled,
    run_unpredicted,
    trigger_decide,
)

__version__ = "0.1.0"
