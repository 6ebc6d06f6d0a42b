"""
Labeled synthetic datasets under temporal, spatial and spatiotemporal
dependency of the differential-expression states.
"""

import numpy as np
from loguru import logger
from scipy.special import expit

from netcourse.exceptions import ValidationError
from netcourse.gamma_gamma import sample_observations
from netcourse.models import ExpressionData, MRFParams, Scenario, ScenarioSpec, StateMatrix
from netcourse.network import GeneNetwork


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate of a seeded study."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replicate,)))


def _sequential_gibbs(
    net: GeneNetwork,
    x: np.ndarray,
    offset: np.ndarray,
    coupling: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One ascending-order sweep with field offset[g] + coupling * spin_sum[g]."""
    column = np.asarray(x, dtype=np.int8).copy()
    spins = net.spin_sums(column)
    uniforms = rng.random(net.node_count)
    for g in range(net.node_count):
        new = np.int8(uniforms[g] < expit(offset[g] + coupling * spins[g]))
        if new != column[g]:
            nbrs = net.neighbor_lists[g]
            if nbrs.size:
                spins[nbrs] += 2.0 if new else -2.0
            column[g] = new
    return column


def gibbs_sweep(
    net: GeneNetwork, x: np.ndarray, gamma0: float, beta0: float, rng: np.random.Generator
) -> np.ndarray:
    """Resample every gene once from the initial-time conditional, in ascending order."""
    return _sequential_gibbs(net, x, np.full(net.node_count, gamma0), beta0, rng)


def transition_sweep(
    net: GeneNetwork,
    x: np.ndarray,
    xprev: np.ndarray,
    params: MRFParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Resample every gene once from the later-time conditional given the previous column."""
    offset = params.gamma + params.beta2 * (2.0 * np.asarray(xprev, dtype=np.float64) - 1.0)
    return _sequential_gibbs(net, x, offset, params.beta1, rng)


def sample_prior(
    net: GeneNetwork,
    params: MRFParams,
    n_times: int,
    rng: np.random.Generator,
    sweeps: int = 50,
) -> StateMatrix:
    """
    Approximate draw from the spatial-temporal prior: Gibbs at t=0 from a fair
    coin start, then each later column Gibbs-sampled given the previous one.
    """
    p = net.node_count
    states = np.zeros((p, n_times), dtype=np.int8)
    column = (rng.random(p) < 0.5).astype(np.int8)
    for _ in range(sweeps):
        column = gibbs_sweep(net, column, params.gamma0, params.beta0, rng)
    states[:, 0] = column
    for t in range(1, n_times):
        column = states[:, t - 1].copy()
        for _ in range(sweeps):
            column = transition_sweep(net, column, states[:, t - 1], params, rng)
        states[:, t] = column
    return StateMatrix(states=states)


def _markov_chain(
    n_chains: int,
    n_times: int,
    p_init: float,
    p_stay: float,
    p_enter: float,
    rng: np.random.Generator,
) -> np.ndarray:
    chain = np.zeros((n_chains, n_times), dtype=np.int8)
    chain[:, 0] = rng.random(n_chains) < p_init
    for t in range(1, n_times):
        prob = np.where(chain[:, t - 1] == 1, p_stay, p_enter)
        chain[:, t] = rng.random(n_chains) < prob
    return chain


def _with_observations(
    spec: ScenarioSpec, states: StateMatrix, labels: list[str], rng: np.random.Generator
) -> tuple[ExpressionData, StateMatrix]:
    m = n = spec.replicates_per_condition
    values = sample_observations(states, spec.theta, m, n, rng)
    return ExpressionData(values=values, m=m, n=n, gene_labels=labels), states


def simulate_temporal(
    spec: ScenarioSpec, p: int, rng: np.random.Generator, labels: list[str] | None = None
) -> tuple[ExpressionData, StateMatrix]:
    """Independent two-state Markov chain per gene."""
    chain = _markov_chain(
        p, spec.time_points, spec.p_init_de, spec.p_de_given_de, spec.p_de_given_ee, rng
    )
    logger.debug(f"[simulate] Temporal scenario: DE fraction per time {chain.mean(axis=0).round(3)}")
    return _with_observations(
        spec, StateMatrix(states=chain), labels or [f"g{i}" for i in range(p)], rng
    )


def _pathway_names(net: GeneNetwork, needed: int) -> list[str]:
    if not net.has_pathways:
        raise ValidationError("the network carries no pathway membership")
    names = sorted(net.pathway_membership)
    if len(names) < needed:
        raise ValidationError(f"{needed} pathways requested but the network has {len(names)}")
    return names


def _smoothed_column(
    spec: ScenarioSpec, net: GeneNetwork, pathways: list[str], rng: np.random.Generator
) -> np.ndarray:
    membership = net.pathway_membership
    column = np.zeros(net.node_count, dtype=np.int8)
    for name in pathways:
        column[list(membership[name])] = 1
    for _ in range(spec.gibbs_sweeps):
        column = gibbs_sweep(net, column, spec.gamma0, spec.beta0, rng)
    return column


def simulate_spatial(
    spec: ScenarioSpec, net: GeneNetwork, rng: np.random.Generator
) -> tuple[ExpressionData, StateMatrix]:
    """Per time point: seed a random set of pathways as DE, then smooth by Gibbs sweeps."""
    k = spec.resolved_pathways_initially_de
    names = _pathway_names(net, k)
    states = np.zeros((net.node_count, spec.time_points), dtype=np.int8)
    for t in range(spec.time_points):
        chosen = [names[i] for i in rng.choice(len(names), size=k, replace=False)]
        states[:, t] = _smoothed_column(spec, net, chosen, rng)
    return _with_observations(spec, StateMatrix(states=states), list(net.node_labels), rng)


def simulate_spatiotemporal(
    spec: ScenarioSpec, net: GeneNetwork, rng: np.random.Generator
) -> tuple[ExpressionData, StateMatrix]:
    """Pathway-level Markov chain, then per-time Gibbs smoothing of the gene states."""
    k = spec.resolved_pathways_initially_de
    names = _pathway_names(net, k)
    active = np.zeros((len(names), spec.time_points), dtype=np.int8)
    active[rng.choice(len(names), size=k, replace=False), 0] = 1
    for t in range(1, spec.time_points):
        prob = np.where(active[:, t - 1] == 1, spec.p_path_de_given_de, spec.p_path_de_given_ee)
        active[:, t] = rng.random(len(names)) < prob
    logger.debug(f"[simulate] DE pathways per time point: {active.sum(axis=0).tolist()}")

    states = np.zeros((net.node_count, spec.time_points), dtype=np.int8)
    for t in range(spec.time_points):
        chosen = [names[i] for i in np.flatnonzero(active[:, t])]
        states[:, t] = _smoothed_column(spec, net, chosen, rng)
    return _with_observations(spec, StateMatrix(states=states), list(net.node_labels), rng)


def simulate(
    spec: ScenarioSpec, net: GeneNetwork, rng: np.random.Generator | None = None
) -> tuple[ExpressionData, StateMatrix]:
    """Dispatch on spec.scenario; the generator defaults to one seeded by spec.seed."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    logger.info(f"[simulate] Generating {spec.scenario.value} dataset on {net.node_count} genes")
    if spec.scenario == Scenario.TEMPORAL:
        return simulate_temporal(spec, net.node_count, rng, list(net.node_labels))
    if spec.scenario == Scenario.SPATIAL:
        return simulate_spatial(spec, net, rng)
    return simulate_spatiotemporal(spec, net, rng)
