"""Robust single-qubit NOT pulses: propagators, perturbative expansions,
pulse objectives and a two-objective CMA-ES optimizer."""

from .errors import (
    BranchAmbiguityError,
    DegeneratePulseError,
    NonFiniteError,
    NotCriticalPointError,
    NotUnitaryError,
    NumericError,
    RobustGateError,
    ValidationError,
)
from .pulse import KNEE_PULSE, ROBUST_PULSE, PulseCoefficients

__version__ = "0.1.0"

__all__ = [
    "BranchAmbiguityError",
    "DegeneratePulseError",
    "KNEE_PULSE",
    "NonFiniteError",
    "NotCriticalPointError",
    "NotUnitaryError",
    "NumericError",
    "PulseCoefficients",
    "ROBUST_PULSE",
    "RobustGateError",
    "ValidationError",
]
