"""Spectroscopic CNOT between a phase qubit and a resonator: spectrum, pulses,
propagation, fidelity and control search."""

from .fidelity import CNOT_TARGET, TargetGate, optimize_z_angles, state_fidelity, trace_fidelity
from .model import PAPER_DEVICE, ConfigError, DeviceParams
from .optimizer import GateContext, OptimizationRecord, SearchSpace, default_space, fidelity_curve, optimize_gate
from .propagator import EvolutionResult, StepTooCoarse, propagate
from .pulses import DomainError, DragPulse, GateSchedule, trapezoid_schedule
from .spectrum import AssignmentAmbiguous, LabeledSpectrum, labeled_spectrum, sensitivities

__version__ = "0.1.0"

__all__ = [
    "CNOT_TARGET", "TargetGate", "optimize_z_angles", "state_fidelity", "trace_fidelity",
    "PAPER_DEVICE", "ConfigError", "DeviceParams", "GateContext", "OptimizationRecord",
    "SearchSpace", "default_space", "fidelity_curve", "optimize_gate", "EvolutionResult",
    "StepTooCoarse", "propagate", "DomainError", "DragPulse", "GateSchedule",
    "trapezoid_schedule", "AssignmentAmbiguous", "LabeledSpectrum", "labeled_spectrum",
    "sensitivities",
]
