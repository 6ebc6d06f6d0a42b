"""netcourse - Spatial-temporal differential expression on gene networks"""

__version__ = "0.1.0"
__author__ = "netcourse developers"
__description__ = "Hidden spatial-temporal Markov random field for time-course expression"

from .models import (
    CycleRecord,
    ExpressionData,
    FitConfig,
    FitResult,
    GGParams,
    MetricSummary,
    ModelMode,
    MRFParams,
    RunManifest,
    Scenario,
    ScenarioSpec,
    StateMatrix,
    TimepointMetrics,
)

__all__ = [
    "CycleRecord",
    "ExpressionData",
    "FitConfig",
    "FitResult",
    "GGParams",
    "MetricSummary",
    "ModelMode",
    "MRFParams",
    "RunManifest",
    "Scenario",
    "ScenarioSpec",
    "StateMatrix",
    "TimepointMetrics",
]
