"""
netcourse - Benchmark Harness

This module contains the BenchmarkHarness class, which drives replicate
studies: simulate a dataset per replicate, fit it under each model mode
(and optionally under misspecified networks), and aggregate the recovery
metrics into per-method, per-scenario summaries.
"""

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from netcourse.evaluate import aggregate_replicates, confusion_metrics
from netcourse.inference import fit
from netcourse.models import (
    FitConfig,
    MetricSummary,
    ModelMode,
    ScenarioSpec,
    TimepointMetrics,
)
from netcourse.network import GeneNetwork, PerturbationKind, perturb_network, perturbation_plan
from netcourse.simulate import replicate_rng, simulate


class Perturbation(BaseModel):
    """Misspecified fitting network: kind and level (fraction of |E|)."""
    model_config = ConfigDict(frozen=True)

    kind: PerturbationKind
    level: float = Field(..., ge=0, le=1)

    @property
    def label(self) -> str:
        return f"full@{self.kind.value}_{self.level:g}"

    @classmethod
    def parse(cls, text: str) -> "Perturbation":
        """Parse `kind:level`, e.g. `del_add:0.3`."""
        kind, _, level = text.partition(":")
        return cls(kind=PerturbationKind(kind), level=float(level))


class ReplicateTask(BaseModel):
    """Everything one worker needs; shares nothing mutable with other workers."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    replicate: int
    seed: int
    spec: ScenarioSpec
    network: GeneNetwork
    modes: list[ModelMode]
    perturbations: list[Perturbation] = Field(default_factory=list)
    fit_config: FitConfig


class ReplicateOutcome(BaseModel):
    replicate: int
    scenario: str
    metrics: dict[str, list[TimepointMetrics]]
    min_score_gain: float
    converged: dict[str, bool]


class BenchmarkReport(BaseModel):
    """Per-replicate metrics and their aggregates, keyed by (method, scenario)."""
    outcomes: list[ReplicateOutcome] = Field(default_factory=list)
    summaries: list[tuple[str, str, MetricSummary]] = Field(default_factory=list)

    @property
    def min_score_gain(self) -> float:
        return min((o.min_score_gain for o in self.outcomes), default=0.0)

    def summary(self, method: str, scenario: str) -> list[MetricSummary]:
        return [s for m, sc, s in self.summaries if m == method and sc == scenario]


def _perturbation_seed(seed: int, replicate: int, index: int) -> int:
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(replicate, 1 + index))
    return int(sequence.generate_state(1)[0])


def run_replicate(task: ReplicateTask) -> ReplicateOutcome:
    """Simulate one dataset and fit it under every requested mode and network."""
    rng = replicate_rng(task.seed, task.replicate)
    data, truth = simulate(task.spec, task.network, rng)
    metrics: dict[str, list[TimepointMetrics]] = {}
    converged: dict[str, bool] = {}
    min_gain = 0.0

    for mode in task.modes:
        config = task.fit_config.model_copy(update={"mode": mode})
        result = fit(data, task.network, config)
        metrics[mode.value] = confusion_metrics(result.states, truth)
        converged[mode.value] = result.converged
        min_gain = min(min_gain, result.min_score_gain)

    base_config = task.fit_config.model_copy(update={"mode": ModelMode.FULL})
    for index, perturbation in enumerate(task.perturbations):
        delete_fraction, add_count = perturbation_plan(
            perturbation.kind, perturbation.level, task.network.edge_count
        )
        wrong = perturb_network(
            task.network, delete_fraction, add_count, _perturbation_seed(task.seed, task.replicate, index)
        )
        result = fit(data, wrong, base_config)
        metrics[perturbation.label] = confusion_metrics(result.states, truth)
        converged[perturbation.label] = result.converged
        min_gain = min(min_gain, result.min_score_gain)

    logger.info(f"[harness] Replicate {task.replicate} ({task.spec.scenario.value}) done")
    return ReplicateOutcome(
        replicate=task.replicate,
        scenario=task.spec.scenario.value,
        metrics=metrics,
        min_score_gain=min_gain,
        converged=converged,
    )


class BenchmarkHarness:
    """
    Replicate study driver.

    Replicates fan out over a process pool when jobs > 1; results are always
    collected in replicate order so reports are identical for any job count.
    """

    def __init__(
        self,
        network: GeneNetwork,
        specs: Sequence[ScenarioSpec],
        replicates: int,
        seed: int,
        modes: Sequence[ModelMode] = tuple(ModelMode),
        perturbations: Sequence[Perturbation] = (),
        fit_config: FitConfig | None = None,
        jobs: int = 1,
    ):
        self.network = network
        self.specs = list(specs)
        self.replicates = replicates
        self.seed = seed
        self.modes = list(modes)
        self.perturbations = list(perturbations)
        self.fit_config = fit_config or FitConfig()
        self.jobs = max(1, jobs)
        logger.info(
            f"[harness] Benchmark over {len(self.specs)} scenarios x {replicates} replicates "
            f"({len(self.modes)} modes, {len(self.perturbations)} perturbations, jobs={self.jobs})"
        )

    def tasks(self) -> list[ReplicateTask]:
        return [
            ReplicateTask(
                replicate=replicate,
                seed=self.seed + k,
                spec=spec,
                network=self.network,
                modes=self.modes,
                perturbations=self.perturbations,
                fit_config=self.fit_config,
            )
            for k, spec in enumerate(self.specs)
            for replicate in range(self.replicates)
        ]

    def run(self) -> BenchmarkReport:
        tasks = self.tasks()
        if self.jobs == 1:
            outcomes = [run_replicate(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                outcomes = list(pool.map(run_replicate, tasks))

        report = BenchmarkReport(outcomes=outcomes)
        for spec in self.specs:
            scenario = spec.scenario.value
            runs = [o for o in outcomes if o.scenario == scenario]
            methods = list(runs[0].metrics) if runs else []
            for method in methods:
                for summary in aggregate_replicates([o.metrics[method] for o in runs]):
                    report.summaries.append((method, scenario, summary))
        logger.success(f"[harness] Benchmark complete: {len(outcomes)} replicate runs")
        return report
