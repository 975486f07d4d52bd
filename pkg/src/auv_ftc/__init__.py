"""Fault-tolerant trajectory tracking for an overactuated underwater vehicle.

A bank of model-conditional Kalman filters scores thruster-failure
hypotheses; a Bayesian supervisor turns the scores into a posterior that
blends one linear-quadratic tracking law per hypothesis.
"""
from .errors import *  # noqa: F401,F403
from .harness import (
    ConstantReference,
    ControllerSpec,
    FilterSpec,
    HelixReference,
    NoiseSpec,
    Scenario,
    SimLog,
    compute_metrics,
    hard_switch_baseline,
    pair_fault_space,
    reference_trajectory,
    run_scenario,
)
from .scenario_io import (
    RunConfig,
    bundled_scenario_path,
    emit_plot_script,
    log_to_csv,
    parse_scenario,
    parse_scenario_text,
    read_csv_log,
    write_outputs,
)
from .vehicle import BodyState, FaultModel, VehicleParams, fault_coefficients, step_nonlinear

__version__ = "0.1.0"
