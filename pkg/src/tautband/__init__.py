"""Taut strings in tubes around Wiener paths, Markovian pursuit, and bounds
on the taut-string energy constant."""

__version__ = "0.1.0"

from .errors import ConvergenceError, InfeasibleTubeError, InputError, InvariantError, TautbandError
from .paths import SampledPath, TimeGrid, energy, simulate_wiener
from .tautstring import FixedAt, Interval, TautStringResult, Tube, brute_force_oracle, solve, taut_energy
from .pursuit import SpeedLaw, fisher_information, simulate_pursuit
from .bounds import bound_report
from .montecarlo import ExperimentConfig, EnergyStats, run_experiment
from .buffer import PenaltyFunction, TrafficTrace, fifo_losses, optimal_losses, penalty

__all__ = [
    "ConvergenceError", "InfeasibleTubeError", "InputError", "InvariantError", "TautbandError",
    "SampledPath", "TimeGrid", "energy", "simulate_wiener",
    "FixedAt", "Interval", "TautStringResult", "Tube", "brute_force_oracle", "solve", "taut_energy",
    "SpeedLaw", "fisher_information", "simulate_pursuit", "bound_report",
    "ExperimentConfig", "EnergyStats", "run_experiment",
    "PenaltyFunction", "TrafficTrace", "fifo_losses", "optimal_losses", "penalty",
]
