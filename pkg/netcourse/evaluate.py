"""Per-time-point recovery metrics of estimated against true state matrices."""

from collections.abc import Sequence

import numpy as np
from loguru import logger
from scipy.sparse.csgraph import connected_components

from netcourse.exceptions import DimensionError, ValidationError
from netcourse.models import MetricSummary, StateMatrix, TimepointMetrics
from netcourse.network import GeneNetwork


def _ratio(numerator: int, denominator: int, empty: float) -> float:
    return numerator / denominator if denominator > 0 else empty


def confusion_metrics(estimated: StateMatrix, truth: StateMatrix) -> list[TimepointMetrics]:
    """
    Sensitivity, specificity and FDR per time point.

    Empty denominators fall back to 0 for sensitivity and FDR and 1 for specificity.
    """
    if estimated.states.shape != truth.states.shape:
        raise DimensionError(
            f"estimated shape {estimated.states.shape} differs from truth {truth.states.shape}"
        )
    est = estimated.states.astype(bool)
    true = truth.states.astype(bool)
    rows = []
    for t in range(true.shape[1]):
        e, y = est[:, t], true[:, t]
        tp = int(np.sum(e & y))
        fp = int(np.sum(e & ~y))
        tn = int(np.sum(~e & ~y))
        fn = int(np.sum(~e & y))
        rows.append(
            TimepointMetrics(
                t=t,
                sensitivity=_ratio(tp, tp + fn, 0.0),
                specificity=_ratio(tn, tn + fp, 1.0),
                fdr=_ratio(fp, tp + fp, 0.0),
                tp=tp,
                fp=fp,
                tn=tn,
                fn=fn,
            )
        )
    return rows


def aggregate_replicates(metrics: Sequence[Sequence[TimepointMetrics]]) -> list[MetricSummary]:
    """Mean and standard error (sample SD / sqrt(R)) of each rate per time point."""
    if not metrics:
        raise ValidationError("no replicates to aggregate")
    lengths = {len(run) for run in metrics}
    if len(lengths) != 1:
        raise DimensionError(f"replicates cover different numbers of time points: {sorted(lengths)}")

    replicates = len(metrics)
    summaries = []
    for t in range(lengths.pop()):
        values = np.array(
            [[run[t].sensitivity, run[t].specificity, run[t].fdr] for run in metrics], dtype=float
        )
        means = values.mean(axis=0)
        if replicates > 1:
            ses = values.std(axis=0, ddof=1) / np.sqrt(replicates)
        else:
            ses = np.zeros(3)
        summaries.append(
            MetricSummary(
                t=metrics[0][t].t,
                replicates=replicates,
                sensitivity=float(means[0]),
                sensitivity_se=float(ses[0]),
                specificity=float(means[1]),
                specificity_se=float(ses[1]),
                fdr=float(means[2]),
                fdr_se=float(ses[2]),
            )
        )
    logger.debug(f"[evaluate] Aggregated {replicates} replicates over {len(summaries)} time points")
    return summaries


def active_subnetworks(states: StateMatrix, net: GeneNetwork, t: int) -> list[list[str]]:
    """
    Connected components of the network restricted to genes DE at time t,
    largest first; isolated DE genes form singleton components.
    """
    states.check_shape(net.node_count, states.n_times)
    if not 0 <= t < states.n_times:
        raise DimensionError(f"time index {t} outside [0, {states.n_times})")
    genes = np.flatnonzero(states.column(t))
    if genes.size == 0:
        return []
    sub = net.adjacency_matrix[genes][:, genes]
    _, labels = connected_components(sub, directed=False)
    groups: dict[int, list[str]] = {}
    for gene, label in zip(genes, labels, strict=True):
        groups.setdefault(int(label), []).append(net.node_labels[gene])
    return sorted(groups.values(), key=lambda group: (-len(group), group[0]))
