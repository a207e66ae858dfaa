"""Experiment runner, BER Monte Carlo, report writers and the command line."""

from .ber import BerCurve, BerSpec, au_ber_experiment, ber_au, ber_pu, pu_ber_experiment
from .experiments import ExperimentSpec, SweepResult, desk_scenario, qos_floor, run_sweep, solve_schemes
from .reports import emit_reports

__all__ = [
    "BerCurve", "BerSpec", "au_ber_experiment", "ber_au", "ber_pu", "pu_ber_experiment",
    "ExperimentSpec", "SweepResult", "desk_scenario", "qos_floor", "run_sweep", "solve_schemes",
    "emit_reports",
]
