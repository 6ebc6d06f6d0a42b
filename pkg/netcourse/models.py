"""
Core data models for netcourse.

This module defines the parameter blocks, data containers and result records
shared by the estimation, simulation and evaluation layers.
"""

from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from netcourse.exceptions import DimensionError


class ModelMode(str, Enum):
    """Model family fitted by the estimation loop."""
    FULL = "full"
    TEMPORAL_ONLY = "temporal_only"  # beta0 = beta1 = 0, HMM-like baseline
    SPATIAL_ONLY = "spatial_only"  # beta2 = 0, per-time hMRF baseline

    @classmethod
    def from_cli(cls, name: str) -> "ModelMode":
        """Accept the CLI aliases hmm/hmrf next to the canonical names."""
        aliases = {"hmm": cls.TEMPORAL_ONLY, "hmrf": cls.SPATIAL_ONLY}
        return aliases.get(name, None) or cls(name)


class Scenario(str, Enum):
    """Dependency structure of a simulated dataset."""
    TEMPORAL = "temporal"
    SPATIAL = "spatial"
    SPATIOTEMPORAL = "spatiotemporal"


class GGParams(BaseModel):
    """Gamma-Gamma observation parameters (observation shape, prior shape, prior rate)."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0, description="Shape of each observation given its rate")
    alpha0: float = Field(..., gt=0, description="Shape of the gamma prior on the rate")
    nu: float = Field(..., gt=0, description="Rate of the gamma prior on the rate")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.alpha0, self.nu], dtype=float)

    @classmethod
    def from_array(cls, values: Any) -> "GGParams":
        alpha, alpha0, nu = (float(v) for v in values)
        return cls(alpha=alpha, alpha0=alpha0, nu=nu)


class MRFParams(BaseModel):
    """Spatial-temporal auto-logistic prior parameters."""
    model_config = ConfigDict(frozen=True)

    gamma0: float = Field(default=0.0, description="Intercept of the initial-time field")
    beta0: float = Field(default=0.0, ge=0, description="Neighbor coupling at the initial time")
    gamma: float = Field(default=0.0, description="Intercept of the transition field")
    beta1: float = Field(default=0.0, ge=0, description="Neighbor coupling at later times")
    beta2: float = Field(default=0.0, ge=0, description="Coupling to the gene's own previous state")
    saturated: bool = Field(default=False, description="A coefficient hit the clamp during fitting")
    per_time: tuple[tuple[float, float], ...] | None = Field(
        default=None,
        description="(intercept, neighbor coupling) of every time point when fitted column by column",
    )

    @field_validator("per_time")
    @classmethod
    def _per_time_couplings(
        cls, value: tuple[tuple[float, float], ...] | None
    ) -> tuple[tuple[float, float], ...] | None:
        if value is not None and any(coupling < 0 for _, coupling in value):
            raise ValueError("per-time neighbor couplings must be nonnegative")
        return value

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma0, self.beta0, self.gamma, self.beta1, self.beta2], dtype=float)

    def flat(self) -> np.ndarray:
        """as_array() followed by the per-time pairs, if any."""
        if self.per_time is None:
            return self.as_array()
        return np.concatenate([self.as_array(), np.asarray(self.per_time, dtype=float).ravel()])

    def time_fields(self, n_times: int) -> tuple[np.ndarray, np.ndarray]:
        """Intercept and neighbor coupling of the field at each time point."""
        if self.per_time is not None:
            if len(self.per_time) != n_times:
                raise DimensionError(f"parameters cover {len(self.per_time)} time points, not {n_times}")
            pairs = np.asarray(self.per_time, dtype=float)
            return pairs[:, 0].copy(), pairs[:, 1].copy()
        intercepts = np.full(n_times, self.gamma)
        couplings = np.full(n_times, self.beta1)
        intercepts[0], couplings[0] = self.gamma0, self.beta0
        return intercepts, couplings

    @classmethod
    def from_array(cls, values: Any, saturated: bool = False) -> "MRFParams":
        gamma0, beta0, gamma, beta1, beta2 = (float(v) for v in values)
        return cls(
            gamma0=gamma0, beta0=beta0, gamma=gamma, beta1=beta1, beta2=beta2, saturated=saturated
        )

    @staticmethod
    def names() -> list[str]:
        return ["gamma0", "beta0", "gamma", "beta1", "beta2"]


class StateMatrix(BaseModel):
    """
    Binary differential-expression states, one row per gene and one column per time point.
    1 marks a differentially expressed cell, 0 an equally expressed one.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: np.ndarray = Field(..., description="p x (T+1) array of 0/1 values")

    @field_validator("states", mode="before")
    @classmethod
    def _coerce_bits(cls, value: Any) -> np.ndarray:
        array = np.asarray(value)
        if array.ndim != 2:
            raise ValueError(f"states must be two-dimensional, got shape {array.shape}")
        if array.size and not np.isin(array, (0, 1)).all():
            raise ValueError("states must contain only 0 and 1")
        return array.astype(np.int8, copy=True)

    @property
    def n_genes(self) -> int:
        return int(self.states.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.states.shape[1])

    def column(self, t: int) -> np.ndarray:
        return self.states[:, t]

    def copy(self) -> "StateMatrix":
        return StateMatrix(states=self.states.copy())

    @classmethod
    def zeros(cls, n_genes: int, n_times: int) -> "StateMatrix":
        return cls(states=np.zeros((n_genes, n_times), dtype=np.int8))

    def check_shape(self, n_genes: int, n_times: int) -> None:
        if self.states.shape != (n_genes, n_times):
            raise DimensionError(
                f"state matrix has shape {self.states.shape}, expected {(n_genes, n_times)}"
            )


class ExpressionData(BaseModel):
    """
    Positive expression values indexed (gene, time, sample).
    The first m samples belong to condition 1, the remaining n to condition 2.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(..., description="p x (T+1) x (m+n) positive reals")
    m: int = Field(..., gt=0, description="Samples in condition 1")
    n: int = Field(..., gt=0, description="Samples in condition 2")
    gene_labels: list[str] = Field(default_factory=list, description="Gene identifier per row")

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if array.ndim != 3:
            raise ValueError(f"values must be three-dimensional, got shape {array.shape}")
        if not np.all(np.isfinite(array)) or np.any(array <= 0):
            raise ValueError("expression values must be finite and strictly positive")
        return array

    @model_validator(mode="after")
    def _check_layout(self) -> "ExpressionData":
        if self.values.shape[2] != self.m + self.n:
            raise ValueError(
                f"sample axis has {self.values.shape[2]} columns, expected m+n={self.m + self.n}"
            )
        if not self.gene_labels:
            self.gene_labels = [f"g{i}" for i in range(self.values.shape[0])]
        if len(self.gene_labels) != self.values.shape[0]:
            raise ValueError("gene_labels length does not match the gene axis")
        return self

    @property
    def n_genes(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.values.shape[1])

    def subset(self, rows: list[int]) -> "ExpressionData":
        return ExpressionData(
            values=self.values[rows],
            m=self.m,
            n=self.n,
            gene_labels=[self.gene_labels[i] for i in rows],
        )


class FitConfig(BaseModel):
    """Knobs of the estimation loop."""
    epsilon: float = Field(default=0.01, gt=0, description="Max relative parameter change at convergence")
    max_cycles: int = Field(default=50, gt=0, description="Upper bound on ICM cycles")
    ttest_alpha: float = Field(default=0.05, gt=0, lt=1, description="Initialization significance level")
    mode: ModelMode = Field(default=ModelMode.FULL, description="Model family")
    seed: int = Field(default=0, description="Seed for the Gamma-Gamma restarts")


class CycleRecord(BaseModel):
    """One row of the fit trace."""
    cycle: int
    phi: MRFParams
    theta: GGParams
    pseudolikelihood: float
    theta_objective: float
    flips: int
    max_relative_change: float | None = None
    min_score_gain: float = 0.0
    objective: float = Field(
        default=0.0, description="Pseudo-posterior of the post-sweep states under this cycle's parameters"
    )


class FitResult(BaseModel):
    """Outcome of the estimation loop."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: StateMatrix
    phi: MRFParams
    theta: GGParams
    trace: list[CycleRecord] = Field(default_factory=list)
    converged: bool = False
    cycles_used: int = 0
    mode: ModelMode = ModelMode.FULL

    def de_counts(self) -> list[int]:
        """Number of DE calls per time point."""
        return [int(v) for v in self.states.states.sum(axis=0)]

    def tde_genes(self) -> list[int]:
        """Genes called DE at one or more time points."""
        return [int(g) for g in np.flatnonzero(self.states.states.any(axis=1))]

    @property
    def min_score_gain(self) -> float:
        return min((record.min_score_gain for record in self.trace), default=0.0)


class ScenarioSpec(BaseModel):
    """Settings of one simulated dataset family."""
    scenario: Scenario = Field(default=Scenario.TEMPORAL)
    time_points: int = Field(default=6, gt=0)
    replicates_per_condition: int = Field(default=3, gt=0)
    theta: GGParams = Field(default_factory=lambda: GGParams(alpha=10.0, alpha0=0.9, nu=0.5))

    # Gene-level Markov chain (temporal scenario)
    p_init_de: float = Field(default=0.1, ge=0, le=1)
    p_de_given_de: float = Field(default=0.7, ge=0, le=1)
    p_de_given_ee: float = Field(default=0.1, ge=0, le=1)

    # Auto-logistic smoothing (spatial scenarios)
    gamma0: float = Field(default=-2.0)
    beta0: float = Field(default=2.0, ge=0)
    gibbs_sweeps: int = Field(default=5, ge=0)
    pathways_initially_de: int | None = Field(
        default=None, ge=0, description="9 for the spatial scenario, 8 for the spatiotemporal one"
    )

    # Pathway-level Markov chain (spatiotemporal scenario)
    p_path_de_given_ee: float = Field(default=0.1, ge=0, le=1)
    p_path_de_given_de: float = Field(default=0.7, ge=0, le=1)

    seed: int = Field(default=0)

    @property
    def resolved_pathways_initially_de(self) -> int:
        if self.pathways_initially_de is not None:
            return self.pathways_initially_de
        return 8 if self.scenario == Scenario.SPATIOTEMPORAL else 9

    def metadata(self) -> dict[str, Any]:
        """Flat record written next to simulated datasets."""
        record: dict[str, Any] = self.model_dump(mode="json", exclude={"theta"})
        record.update({f"theta_{k}": v for k, v in self.theta.model_dump().items()})
        record["pathways_initially_de"] = self.resolved_pathways_initially_de
        record["gibbs_update"] = "sequential"
        return record


class TimepointMetrics(BaseModel):
    """Confusion counts and derived rates at one time point."""
    t: int
    sensitivity: float = Field(..., ge=0, le=1)
    specificity: float = Field(..., ge=0, le=1)
    fdr: float = Field(..., ge=0, le=1)
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)


class MetricSummary(BaseModel):
    """Replicate mean and standard error of the rates at one time point."""
    t: int
    replicates: int
    sensitivity: float
    sensitivity_se: float
    specificity: float
    specificity_se: float
    fdr: float
    fdr_se: float


class RunManifest(BaseModel):
    """Everything needed to reproduce an output directory."""
    command: str
    config: dict[str, Any] = Field(default_factory=dict, description="Resolved knobs, defaults applied")
    input_digests: dict[str, str] = Field(default_factory=dict, description="SHA-256 per input file")
    seed: int | None = None
    version: str
    parameters: dict[str, Any] = Field(default_factory=dict, description="Full-precision fitted values")
