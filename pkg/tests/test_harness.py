"""Tests for the replicate benchmark driver."""

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from netcourse.harness import BenchmarkHarness, Perturbation
from netcourse.models import FitConfig, ModelMode, Scenario, ScenarioSpec
from netcourse.network import PerturbationKind, synthetic_pathway_network


@pytest.fixture(scope="module")
def tiny_network():
    return synthetic_pathway_network(n_genes=120, n_edges=300, n_pathways=6, seed=4)


@pytest.mark.unit
class TestPerturbation:
    def test_parse_and_label(self):
        perturbation = Perturbation.parse("del_add:0.3")
        assert perturbation.kind == PerturbationKind.DEL_ADD
        assert perturbation.level == 0.3
        assert perturbation.label == "full@del_add_0.3"

    @pytest.mark.parametrize("text", ["shuffle:0.1", "del:many"])
    def test_parse_rejects_garbage(self, text):
        with pytest.raises(ValueError):
            Perturbation.parse(text)

    def test_level_bounded(self):
        with pytest.raises(PydanticValidationError):
            Perturbation.parse("add:1.5")


@pytest.mark.integration
class TestBenchmarkHarness:
    """Small end-to-end replicate studies."""

    def _harness(self, network, jobs: int = 1) -> BenchmarkHarness:
        return BenchmarkHarness(
            network=network,
            specs=[ScenarioSpec(scenario=Scenario.TEMPORAL)],
            replicates=2,
            seed=7,
            modes=[ModelMode.FULL, ModelMode.TEMPORAL_ONLY],
            perturbations=[Perturbation.parse("del:0.5")],
            fit_config=FitConfig(max_cycles=3),
            jobs=jobs,
        )

    def test_report_layout(self, tiny_network):
        report = self._harness(tiny_network).run()
        assert len(report.outcomes) == 2
        methods = {method for method, _, _ in report.summaries}
        assert methods == {"full", "temporal_only", "full@del_0.5"}
        summary = report.summary("full", "temporal")
        assert [s.t for s in summary] == list(range(6))
        assert all(s.replicates == 2 for s in summary)
        assert report.min_score_gain >= -1e-9

    def test_replicates_use_distinct_streams(self, tiny_network):
        report = self._harness(tiny_network).run()
        first, second = (o.metrics["full"] for o in report.outcomes)
        assert [(m.tp, m.fn) for m in first] != [(m.tp, m.fn) for m in second]

    @pytest.mark.slow
    def test_job_count_does_not_change_results(self, tiny_network):
        serial = self._harness(tiny_network, jobs=1).run()
        parallel = self._harness(tiny_network, jobs=2).run()
        assert serial.summaries == parallel.summaries


@pytest.mark.unit
class TestStudySelection:
    def test_slow_studies_deselected_by_default(self, pytestconfig):
        addopts = pytestconfig.getini("addopts")
        assert addopts[addopts.index("-m") + 1] == "not slow"


def _series(report, method: str, scenario: str, field: str) -> np.ndarray:
    """Replicate means of one rate, indexed by time point."""
    return np.array([getattr(s, field) for s in report.summary(method, scenario)])


@pytest.fixture(scope="module")
def default_network():
    return synthetic_pathway_network(seed=0)


@pytest.mark.slow
class TestTemporalScenarioStudy:
    """20 replicates of gene-level Markov chains on the default-size network."""

    @pytest.fixture(scope="class")
    def report(self, default_network):
        return BenchmarkHarness(
            network=default_network,
            specs=[ScenarioSpec(scenario=Scenario.TEMPORAL)],
            replicates=20,
            seed=1,
            modes=[ModelMode.FULL, ModelMode.TEMPORAL_ONLY, ModelMode.SPATIAL_ONLY],
            jobs=4,
        ).run()

    def test_full_agrees_with_temporal_only(self, report):
        full = _series(report, "full", "temporal", "sensitivity")
        temporal = _series(report, "temporal_only", "temporal", "sensitivity")
        assert np.all(np.abs(full - temporal) <= 0.05)

    def test_temporal_coupling_beats_spatial_only(self, report):
        spatial = _series(report, "spatial_only", "temporal", "sensitivity")[1:]
        for method in ("full", "temporal_only"):
            later = _series(report, method, "temporal", "sensitivity")[1:]
            assert np.all(later - spatial >= 0.03), method

    def test_sensitivity_at_second_transition(self, report):
        assert _series(report, "full", "temporal", "sensitivity")[2] == pytest.approx(0.74, abs=0.08)

    @pytest.mark.parametrize("method", ["full", "temporal_only", "spatial_only"])
    def test_specificity_and_fdr(self, report, method):
        assert np.all(_series(report, method, "temporal", "specificity") >= 0.97)
        assert np.all(_series(report, method, "temporal", "fdr") <= 0.10)


@pytest.mark.slow
class TestSpatiotemporalScenarioStudy:
    """20 replicates of pathway-level chains, also refitted on a 30% DEL+ADD network."""

    @pytest.fixture(scope="class")
    def report(self, default_network):
        return BenchmarkHarness(
            network=default_network,
            specs=[ScenarioSpec(scenario=Scenario.SPATIOTEMPORAL)],
            replicates=20,
            seed=2,
            modes=[ModelMode.FULL, ModelMode.TEMPORAL_ONLY],
            perturbations=[Perturbation.parse("del_add:0.3")],
            jobs=4,
        ).run()

    def test_spatial_coupling_helps_initial_time(self, report):
        full = _series(report, "full", "spatiotemporal", "sensitivity")[0]
        temporal = _series(report, "temporal_only", "spatiotemporal", "sensitivity")[0]
        assert full - temporal >= 0.08

    def test_full_fdr_over_time(self, report):
        assert _series(report, "full", "spatiotemporal", "fdr").mean() <= 0.10

    def test_misspecified_network(self, report):
        full = _series(report, "full", "spatiotemporal", "sensitivity")[0]
        perturbed = _series(report, "full@del_add_0.3", "spatiotemporal", "sensitivity")[0]
        assert full - perturbed <= 0.12
        assert np.all(_series(report, "full@del_add_0.3", "spatiotemporal", "specificity") >= 0.97)
