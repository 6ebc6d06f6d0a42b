"""
Estimation loop: t-test initialization, alternating parameter refits and
ICM sweeps in which each gene's whole time path is updated by Viterbi.

The per-gene objective ("surrogate score") is the sum of the gene's emission
log densities and the chained log conditionals of its own states, with all
other genes held at their current estimates.
"""

from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy import stats as sstats
from scipy.special import log_expit

from netcourse.config import settings
from netcourse.exceptions import DimensionError, ValidationError
from netcourse.gamma_gamma import CellStats, fit_theta, log_density_from_stats, theta_log_likelihood
from netcourse.mrf_prior import fit_phi, log_pseudolikelihood, spin_sum_matrix
from netcourse.models import (
    CycleRecord,
    ExpressionData,
    FitConfig,
    FitResult,
    GGParams,
    MRFParams,
    StateMatrix,
)
from netcourse.network import GeneNetwork

_RELATIVE_FLOOR = 1e-8


def init_states_ttest(data: ExpressionData, alpha_level: float | None = None) -> StateMatrix:
    """
    Pooled-variance two-sample t-test on log values for every (gene, time) cell.

    A cell is DE when the two-sided p-value is below alpha_level. With zero
    pooled variance the cell is DE exactly when the group means differ.
    """
    alpha_level = settings.ttest_alpha if alpha_level is None else alpha_level
    if not 0.0 < alpha_level < 1.0:
        raise ValidationError(f"alpha_level must be in (0, 1), got {alpha_level}")
    m, n = data.m, data.n
    if m < 2 or n < 2:
        raise ValidationError("the t-test initialization needs at least two samples per condition")

    logs = np.log(data.values)
    first, second = logs[..., :m], logs[..., m:]
    diff = first.mean(axis=-1) - second.mean(axis=-1)
    pooled = (
        first.var(axis=-1, ddof=1) * (m - 1) + second.var(axis=-1, ddof=1) * (n - 1)
    ) / (m + n - 2)

    degenerate = pooled <= 0
    scale = np.sqrt(np.where(degenerate, 1.0, pooled) * (1.0 / m + 1.0 / n))
    t_stat = np.abs(diff) / scale
    p_values = 2.0 * sstats.t.sf(t_stat, df=m + n - 2)
    calls = np.where(degenerate, ~np.isclose(diff, 0.0, rtol=0.0, atol=1e-12), p_values < alpha_level)
    states = StateMatrix(states=calls.astype(np.int8))
    logger.info(f"[inference] t-test initialization called {int(calls.sum())} DE cells")
    return states


# ----------------------------------------------------------------------
# Per-gene Viterbi
# ----------------------------------------------------------------------


def _log_cond_pair(field: np.ndarray) -> np.ndarray:
    """Stack of (log P(x=0), log P(x=1)) along a new last axis."""
    return np.stack([log_expit(-field), log_expit(field)], axis=-1)


def _gene_tables(
    emission: np.ndarray, spin_row: np.ndarray, phi: MRFParams
) -> tuple[np.ndarray, np.ndarray]:
    """
    Initial log weights (2,) and transition log weights (T, 2, 2) indexed
    [t-1, previous state, state] for one gene.
    """
    intercepts, couplings = phi.time_fields(spin_row.size)
    base = intercepts + couplings * spin_row
    initial = _log_cond_pair(base[0]) + emission[0]
    fields = base[1:, None] + phi.beta2 * np.array([-1.0, 1.0])[None, :]
    transition = _log_cond_pair(fields) + emission[1:, None, :]
    return initial, transition


def _path_score(path: np.ndarray, initial: np.ndarray, transition: np.ndarray) -> float:
    score = initial[path[0]]
    for t in range(1, path.size):
        score += transition[t - 1, path[t - 1], path[t]]
    return float(score)


def _viterbi(initial: np.ndarray, transition: np.ndarray) -> tuple[np.ndarray, float]:
    """Max-sum over two states; ties resolve toward state 0."""
    n_steps = transition.shape[0] + 1
    back = np.zeros((n_steps, 2), dtype=np.int8)
    delta = initial.copy()
    for t in range(1, n_steps):
        candidates = delta[:, None] + transition[t - 1]
        back[t] = np.argmax(candidates, axis=0)
        delta = candidates[back[t], (0, 1)]
    path = np.zeros(n_steps, dtype=np.int8)
    path[-1] = int(np.argmax(delta))
    for t in range(n_steps - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def best_path(
    emission: np.ndarray, spin_row: np.ndarray, phi: MRFParams, current: np.ndarray | None = None
) -> tuple[np.ndarray, float, float]:
    """Viterbi path, its score, and the score of `current` (or the path itself)."""
    initial, transition = _gene_tables(emission, spin_row, phi)
    path, score = _viterbi(initial, transition)
    old = score if current is None else _path_score(np.asarray(current), initial, transition)
    return path, score, old


def surrogate_score(
    g: int,
    data: ExpressionData,
    states: StateMatrix,
    net: GeneNetwork,
    phi: MRFParams,
    theta: GGParams,
    path: np.ndarray | None = None,
) -> float:
    """Per-gene objective of `path` (default: the gene's current row)."""
    emission = log_density_from_stats(CellStats.from_values(data.values[g], data.m, data.n), theta)
    spins = spin_sum_matrix(states, net)[g]
    initial, transition = _gene_tables(emission, spins, phi)
    row = states.states[g] if path is None else np.asarray(path)
    return _path_score(row, initial, transition)


def viterbi_update_gene(
    g: int,
    data: ExpressionData,
    states: StateMatrix,
    net: GeneNetwork,
    phi: MRFParams,
    theta: GGParams,
) -> tuple[np.ndarray, float]:
    """Most probable time path of gene g given everything else; returns (path, score gain)."""
    if not 0 <= g < net.node_count:
        raise DimensionError(f"gene index {g} outside [0, {net.node_count})")
    states.check_shape(data.n_genes, data.n_times)
    emission = log_density_from_stats(CellStats.from_values(data.values[g], data.m, data.n), theta)
    spins = spin_sum_matrix(states, net)[g]
    path, score, old = best_path(emission, spins, phi, states.states[g])
    return path, score - old


class SweepOutcome(NamedTuple):
    states: StateMatrix
    flips: int
    gains: np.ndarray


def icm_cycle(
    data: ExpressionData,
    states: StateMatrix,
    net: GeneNetwork,
    phi: MRFParams,
    theta: GGParams,
    emission: np.ndarray | None = None,
) -> SweepOutcome:
    """
    One ICM cycle: genes in ascending order, each row replaced in place by its
    Viterbi path before the next gene is visited.
    """
    states.check_shape(data.n_genes, data.n_times)
    if net.node_count != data.n_genes:
        raise DimensionError(f"network has {net.node_count} genes, data has {data.n_genes}")
    if emission is None:
        emission = log_density_from_stats(CellStats.from_data(data), theta)

    current = states.states.copy()
    spins = spin_sum_matrix(states, net)
    gains = np.zeros(net.node_count)
    flips = 0
    for g in range(net.node_count):
        path, score, old = best_path(emission[g], spins[g], phi, current[g])
        gains[g] = score - old
        changed = path != current[g]
        if changed.any():
            flips += int(changed.sum())
            delta = 2.0 * (path.astype(np.float64) - current[g])
            nbrs = net.neighbor_lists[g]
            if nbrs.size:
                spins[nbrs] += delta[None, :]
            current[g] = path
    return SweepOutcome(StateMatrix(states=current), flips, gains)


# ----------------------------------------------------------------------
# Estimation loop
# ----------------------------------------------------------------------


def max_relative_change(
    old: tuple[MRFParams, GGParams], new: tuple[MRFParams, GGParams]
) -> float:
    """Largest |new - old| / max(|old|, 1e-8) over all prior and emission parameters."""
    before = np.concatenate([old[0].flat(), old[1].as_array()])
    after = np.concatenate([new[0].flat(), new[1].as_array()])
    if before.shape != after.shape:
        raise DimensionError("parameter blocks of different layouts cannot be compared")
    return float(np.max(np.abs(after - before) / np.maximum(np.abs(before), _RELATIVE_FLOOR)))


def fit(data: ExpressionData, net: GeneNetwork, config: FitConfig | None = None) -> FitResult:
    """
    Run the estimation loop until the parameters settle or max_cycles is hit.

    Each cycle refits the prior parameters by pseudolikelihood, refits the
    emission parameters by conditional likelihood, then performs one ICM sweep.
    A converged fit returns the last cycle; otherwise the cycle whose
    post-sweep states and parameters score the highest objective.
    """
    config = config or FitConfig(
        epsilon=settings.epsilon, max_cycles=settings.max_cycles, ttest_alpha=settings.ttest_alpha
    )
    if net.node_count != data.n_genes:
        raise DimensionError(f"network has {net.node_count} genes, data has {data.n_genes}")

    stats = CellStats.from_data(data)
    states = init_states_ttest(data, config.ttest_alpha)
    trace: list[CycleRecord] = []
    previous: tuple[MRFParams, GGParams] | None = None
    theta: GGParams | None = None
    best: tuple[float, StateMatrix, MRFParams, GGParams] | None = None
    converged = False

    logger.info(
        f"[inference] Fitting mode={config.mode.value} on {data.n_genes} genes x "
        f"{data.n_times} time points (epsilon={config.epsilon}, max_cycles={config.max_cycles})"
    )
    for cycle in range(1, config.max_cycles + 1):
        phi = fit_phi(states, net, config.mode)
        theta = fit_theta(data, states, seed=config.seed, start=theta)
        pseudo = log_pseudolikelihood(states, net, phi)
        objective = theta_log_likelihood(stats, states, theta)

        emission = log_density_from_stats(stats, theta)
        states, flips, gains = icm_cycle(data, states, net, phi, theta, emission)
        score = log_pseudolikelihood(states, net, phi) + theta_log_likelihood(stats, states, theta)
        if best is None or score > best[0]:
            best = (score, states, phi, theta)

        change = None if previous is None else max_relative_change(previous, (phi, theta))
        trace.append(
            CycleRecord(
                cycle=cycle,
                phi=phi,
                theta=theta,
                pseudolikelihood=pseudo,
                theta_objective=objective,
                flips=flips,
                max_relative_change=change,
                min_score_gain=float(gains.min()) if gains.size else 0.0,
                objective=score,
            )
        )
        logger.info(
            f"[inference] Cycle {cycle}: flips={flips} pseudolikelihood={pseudo:.6g} "
            f"change={'n/a' if change is None else f'{change:.3g}'}"
        )
        if phi.saturated:
            logger.warning(f"[inference] Cycle {cycle}: prior coefficients saturated at the clamp")

        previous = (phi, theta)
        if change is not None and change < config.epsilon:
            converged = True
            break

    final_phi, final_theta = trace[-1].phi, trace[-1].theta
    if not converged and best is not None:
        _, states, final_phi, final_theta = best
        logger.warning(
            f"[inference] No convergence within {config.max_cycles} cycles, "
            f"returning the best cycle (objective {best[0]:.6g})"
        )
    return FitResult(
        states=states,
        phi=final_phi,
        theta=final_theta,
        trace=trace,
        converged=converged,
        cycles_used=len(trace),
        mode=config.mode,
    )
