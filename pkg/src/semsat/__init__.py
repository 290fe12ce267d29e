"""Transmit-power minimization for semantic LEO satellite image downlinks."""

from .model import (
    AllocationSolution,
    ChannelTensor,
    FeasibilityReport,
    SystemConfig,
    UserDemand,
    check_feasible,
    required_slots,
    snr,
)
from .quality import QualityDomain, QualityModelCoefficients, default_coefficients, f_q, min_snr_for_quality

__all__ = [
    "AllocationSolution",
    "ChannelTensor",
    "FeasibilityReport",
    "SystemConfig",
    "UserDemand",
    "QualityDomain",
    "QualityModelCoefficients",
    "check_feasible",
    "default_coefficients",
    "f_q",
    "min_snr_for_quality",
    "required_slots",
    "snr",
]

__version__ = "0.1.0"
