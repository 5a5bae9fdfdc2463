"""Volt-var estimation and control for distribution feeders."""

from ._core import (
    ControlPlan,
    ConvergenceError,
    DomainError,
    Estimator,
    Feeder,
    Metrics,
    ParseError,
    Profiles,
    RankDeficientError,
    Solution,
    ValidationError,
    VoltVarError,
    excess_capacity_kvar,
    optimize_json,
    simulate,
    solve,
    tap_to_setpoint,
    train,
)

__all__ = [
    "ControlPlan",
    "ConvergenceError",
    "DomainError",
    "Estimator",
    "Feeder",
    "Metrics",
    "ParseError",
    "Profiles",
    "RankDeficientError",
    "Solution",
    "ValidationError",
    "VoltVarError",
    "excess_capacity_kvar",
    "optimize_json",
    "simulate",
    "solve",
    "tap_to_setpoint",
    "train",
]
