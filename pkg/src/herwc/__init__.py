"""Globally optimal hand-eye and robot-world calibration via moment relaxations."""

from .calib import (
    HANDEYE_METHODS,
    METHODS,
    ROBOTWORLD_METHODS,
    CalibrationConfig,
    CalibrationResult,
    CalibrationTask,
    calibrate,
)
from .errors import (
    CombinatorialLimitError,
    DegenerateMotionError,
    HerwcError,
    IncompatibleMotionError,
    InvalidArgumentError,
    NumericalFailureError,
    ParseError,
    RelaxationOrderTooLowError,
)
from .geom import AbsolutePosePair, MotionPair, Pose
from .sdp import SolverConfig

__version__ = "0.1.0"

__all__ = [
    "AbsolutePosePair",
    "CalibrationConfig",
    "CalibrationResult",
    "CalibrationTask",
    "CombinatorialLimitError",
    "DegenerateMotionError",
    "HANDEYE_METHODS",
    "HerwcError",
    "IncompatibleMotionError",
    "InvalidArgumentError",
    "METHODS",
    "MotionPair",
    "NumericalFailureError",
    "ParseError",
    "Pose",
    "ROBOTWORLD_METHODS",
    "RelaxationOrderTooLowError",
    "SolverConfig",
    "calibrate",
]
