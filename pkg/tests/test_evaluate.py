"""Tests for recovery metrics and their replicate aggregation."""

import numpy as np
import pytest

from netcourse.evaluate import active_subnetworks, aggregate_replicates, confusion_metrics
from netcourse.exceptions import DimensionError, ValidationError
from netcourse.models import StateMatrix, TimepointMetrics
from netcourse.network import load_edge_list


def _column(bits: list[int]) -> StateMatrix:
    return StateMatrix(states=np.array(bits)[:, None])


def _metric(t: int, sen: float, spe: float = 1.0, fdr: float = 0.0) -> TimepointMetrics:
    return TimepointMetrics(t=t, sensitivity=sen, specificity=spe, fdr=fdr, tp=0, fp=0, tn=0, fn=0)


@pytest.mark.unit
class TestConfusionMetrics:
    """Per-time-point rates."""

    def test_worked_example(self):
        truth = np.zeros(100, dtype=int)
        truth[:10] = 1
        estimate = np.zeros(100, dtype=int)
        estimate[:8] = 1
        estimate[50:52] = 1
        (row,) = confusion_metrics(_column(estimate.tolist()), _column(truth.tolist()))
        assert row.sensitivity == pytest.approx(0.8)
        assert row.specificity == pytest.approx(88 / 90)
        assert row.fdr == pytest.approx(0.2)
        assert (row.tp, row.fp, row.tn, row.fn) == (8, 2, 88, 2)

    def test_perfect_recovery(self, rng):
        truth = StateMatrix(states=rng.integers(0, 2, size=(50, 4)))
        for row in confusion_metrics(truth, truth):
            if truth.column(row.t).any():
                assert row.sensitivity == 1.0
            assert row.specificity == 1.0
            assert row.fdr == 0.0

    def test_all_ee_estimate(self):
        (row,) = confusion_metrics(_column([0, 0, 0, 0]), _column([1, 1, 0, 0]))
        assert row.sensitivity == 0.0
        assert row.specificity == 1.0
        assert row.fdr == 0.0

    def test_no_true_ee(self):
        (row,) = confusion_metrics(_column([1, 0]), _column([1, 1]))
        assert row.specificity == 1.0
        assert row.sensitivity == 0.5

    def test_swapping_arguments_swaps_error_kinds(self, rng):
        a = StateMatrix(states=rng.integers(0, 2, size=(40, 3)))
        b = StateMatrix(states=rng.integers(0, 2, size=(40, 3)))
        for ab, ba in zip(confusion_metrics(a, b), confusion_metrics(b, a), strict=True):
            assert (ab.tp, ab.tn) == (ba.tp, ba.tn)
            assert (ab.fp, ab.fn) == (ba.fn, ba.fp)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            confusion_metrics(StateMatrix.zeros(3, 2), StateMatrix.zeros(3, 3))


@pytest.mark.unit
class TestAggregate:
    """Replicate means and standard errors."""

    def test_mean_and_standard_error(self):
        summary = aggregate_replicates([[_metric(0, 0.6)], [_metric(0, 0.8)]])
        assert summary[0].sensitivity == pytest.approx(0.7)
        assert summary[0].sensitivity_se == pytest.approx(0.1)
        assert summary[0].replicates == 2

    def test_single_replicate_has_zero_error(self):
        summary = aggregate_replicates([[_metric(0, 0.6, 0.9, 0.1), _metric(1, 0.5)]])
        assert len(summary) == 2
        assert summary[0].sensitivity_se == 0.0
        assert summary[0].fdr == pytest.approx(0.1)

    def test_empty_input(self):
        with pytest.raises(ValidationError):
            aggregate_replicates([])

    def test_ragged_replicates(self):
        with pytest.raises(DimensionError):
            aggregate_replicates([[_metric(0, 0.5)], [_metric(0, 0.5), _metric(1, 0.5)]])


@pytest.mark.unit
class TestActiveSubnetworks:
    """Connected DE components at one time point."""

    def test_components_largest_first(self):
        net = load_edge_list("A\tB\nB\tC\nD\tE\nC\tD\n", node_list="A\nB\nC\nD\nE\nF\n")
        order = {label: i for i, label in enumerate(net.node_labels)}
        bits = np.zeros((6, 1), dtype=int)
        for label in ("A", "B", "D", "E", "F"):
            bits[order[label], 0] = 1
        groups = active_subnetworks(StateMatrix(states=bits), net, 0)
        assert [sorted(g) for g in groups] == [["A", "B"], ["D", "E"], ["F"]]

    def test_nothing_de(self, triangle):
        assert active_subnetworks(StateMatrix.zeros(3, 2), triangle, 1) == []

    def test_time_index_checked(self, triangle):
        with pytest.raises(DimensionError):
            active_subnetworks(StateMatrix.zeros(3, 2), triangle, 2)
