"""
Spatial-temporal auto-logistic prior on the differential-expression states.

Gene-wise conditionals are logistic in a local field:
    initial time:  F1 = gamma0 + beta0 * sum_nbrs(2x - 1)
    later times:   F2 = gamma + beta1 * sum_nbrs(2x_t - 1) + beta2 * (2x_{g,t-1} - 1)
Parameters are estimated by maximizing the pseudolikelihood, which splits
into two logistic regressions fitted by IRLS.
"""

import numpy as np
from loguru import logger
from scipy.special import expit, log_expit, logsumexp

from netcourse.config import settings
from netcourse.exceptions import DimensionError, OracleLimitError
from netcourse.models import ModelMode, MRFParams, StateMatrix
from netcourse.network import GeneNetwork

BRUTE_FORCE_MAX_GENES = 16


def xnor(a: int, b: int) -> int:
    """1 when the two bits agree."""
    return int(a == b)


def _spin_sum(net: GeneNetwork, column: np.ndarray, g: int) -> float:
    if not net.neighbors(g):
        return 0.0
    return float(np.sum(2.0 * np.asarray(column, dtype=np.float64)[net.neighbor_lists[g]] - 1.0))


def _check_column(net: GeneNetwork, column: np.ndarray) -> None:
    if np.shape(column) != (net.node_count,):
        raise DimensionError(f"state column has shape {np.shape(column)}, expected ({net.node_count},)")


def field_initial(net: GeneNetwork, x0: np.ndarray, g: int, params: MRFParams) -> float:
    """Local field of gene g at the initial time point."""
    _check_column(net, x0)
    return params.gamma0 + params.beta0 * _spin_sum(net, x0, g)


def field_transition(
    net: GeneNetwork, xt: np.ndarray, xprev: np.ndarray, g: int, params: MRFParams
) -> float:
    """Local field of gene g at a later time point given its previous state."""
    _check_column(net, xt)
    _check_column(net, xprev)
    return (
        params.gamma
        + params.beta1 * _spin_sum(net, xt, g)
        + params.beta2 * (2.0 * float(xprev[g]) - 1.0)
    )


def log_conditional(field: float | np.ndarray, x: int | np.ndarray) -> float | np.ndarray:
    """log( exp(x * F) / (1 + exp(F)) ), stable for any finite field."""
    x = np.asarray(x)
    value = np.where(x == 1, log_expit(field), log_expit(-np.asarray(field, dtype=float)))
    return float(value) if value.ndim == 0 else value


def conditional_prob(field: float, x: int) -> float:
    """Probability of state x under a logistic field."""
    return float(np.exp(log_conditional(field, x)))


def spin_sum_matrix(states: StateMatrix, net: GeneNetwork) -> np.ndarray:
    """(p, T+1) neighbor spin sums for every column."""
    states.check_shape(net.node_count, states.n_times)
    spins = 2.0 * states.states.astype(np.float64) - 1.0
    return np.asarray(net.adjacency_matrix @ spins, dtype=np.float64)


def field_matrices(
    states: StateMatrix, net: GeneNetwork, params: MRFParams
) -> tuple[np.ndarray, np.ndarray]:
    """F1 for every gene at t=0 and F2 for every gene at t=1..T."""
    s = spin_sum_matrix(states, net)
    x = states.states.astype(np.float64)
    intercepts, couplings = params.time_fields(states.n_times)
    f1 = intercepts[0] + couplings[0] * s[:, 0]
    f2 = intercepts[1:] + couplings[1:] * s[:, 1:] + params.beta2 * (2.0 * x[:, :-1] - 1.0)
    return f1, f2


def log_pseudolikelihood(states: StateMatrix, net: GeneNetwork, params: MRFParams) -> float:
    """Sum of log gene-wise conditionals over all cells."""
    f1, f2 = field_matrices(states, net, params)
    x = states.states
    total = np.sum(log_conditional(f1, x[:, 0]))
    if x.shape[1] > 1:
        total += np.sum(log_conditional(f2, x[:, 1:]))
    return float(total)


# ----------------------------------------------------------------------
# Pseudolikelihood maximization
# ----------------------------------------------------------------------


def _logistic_loglik(design: np.ndarray, response: np.ndarray, coef: np.ndarray) -> float:
    eta = design @ coef
    return float(np.sum(response * log_expit(eta) + (1.0 - response) * log_expit(-eta)))


def irls_logistic(
    design: np.ndarray,
    response: np.ndarray,
    clamp: float | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
    start: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """
    Logistic regression by iteratively reweighted least squares.

    Newton steps are halved until the log likelihood does not decrease.
    Coefficients leaving [-clamp, clamp] are clipped and flagged as saturated.
    A constant response returns the signed clamp as intercept and zero slopes.
    """
    clamp = settings.coefficient_clamp if clamp is None else clamp
    tol = settings.irls_tol if tol is None else tol
    max_iter = settings.irls_max_iter if max_iter is None else max_iter
    design = np.asarray(design, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    k = design.shape[1]

    if response.size == 0:
        return np.zeros(k), False
    if np.all(response == response[0]):
        coef = np.zeros(k)
        coef[0] = clamp if response[0] == 1 else -clamp
        return coef, True

    coef = np.zeros(k) if start is None else np.asarray(start, dtype=np.float64).copy()
    loglik = _logistic_loglik(design, response, coef)
    saturated = False
    for iteration in range(max_iter):
        mu = expit(design @ coef)
        weights = mu * (1.0 - mu)
        hessian = design.T @ (design * weights[:, None])
        gradient = design.T @ (response - mu)
        step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]

        candidate = coef + step
        new_loglik = _logistic_loglik(design, response, candidate)
        halvings = 0
        while new_loglik < loglik - 1e-12 and halvings < 40:
            step /= 2.0
            candidate = coef + step
            new_loglik = _logistic_loglik(design, response, candidate)
            halvings += 1

        if np.any(np.abs(candidate) > clamp):
            coef = np.clip(candidate, -clamp, clamp)
            saturated = True
            logger.warning(f"[mrf_prior] IRLS diverging after {iteration + 1} iterations, clamping at ±{clamp}")
            break
        coef, loglik = candidate, new_loglik
        if np.max(np.abs(step)) < tol:
            break
    return coef, saturated


def _fit_nonnegative(
    design: np.ndarray,
    response: np.ndarray,
    nonnegative: list[int],
    start: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """IRLS with clamp-and-refit for columns constrained to be >= 0."""
    # Identically zero covariates (isolated genes everywhere) carry no information.
    active = [j for j in range(design.shape[1]) if j == 0 or np.any(design[:, j] != 0)]
    while True:
        sub_start = None if start is None else np.asarray(start)[active]
        coef, saturated = irls_logistic(design[:, active], response, start=sub_start)
        full = np.zeros(design.shape[1])
        full[active] = coef
        negative = [j for j in nonnegative if j in active and full[j] < 0]
        if not negative:
            return full, saturated
        worst = min(negative, key=lambda j: full[j])
        logger.debug(f"[mrf_prior] Coefficient {worst} fitted negative ({full[worst]:.4g}), pinning at 0")
        active.remove(worst)


def phi_designs(
    states: StateMatrix, net: GeneNetwork, mode: ModelMode = ModelMode.FULL
) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Regression designs of the pseudolikelihood blocks.

    FULL: [1, s] at t=0 and [1, s, r] pooled over t>=1.
    TEMPORAL_ONLY: [1] at t=0 and [1, r] for t>=1.
    SPATIAL_ONLY: one [1, s] design per time point.
    """
    s = spin_sum_matrix(states, net)
    x = states.states.astype(np.float64)
    p, n_times = x.shape
    ones0 = np.ones(p)

    if mode == ModelMode.SPATIAL_ONLY:
        return [(np.column_stack([ones0, s[:, t]]), x[:, t]) for t in range(n_times)]

    later_s = s[:, 1:].ravel(order="F")
    later_r = (2.0 * x[:, :-1] - 1.0).ravel(order="F")
    later_y = x[:, 1:].ravel(order="F")
    ones1 = np.ones(later_y.size)
    if mode == ModelMode.TEMPORAL_ONLY:
        return [
            (ones0[:, None], x[:, 0]),
            (np.column_stack([ones1, later_r]), later_y),
        ]
    return [
        (np.column_stack([ones0, s[:, 0]]), x[:, 0]),
        (np.column_stack([ones1, later_s, later_r]), later_y),
    ]


def fit_phi(
    states: StateMatrix,
    net: GeneNetwork,
    mode: ModelMode = ModelMode.FULL,
    start: MRFParams | None = None,
) -> MRFParams:
    """
    Maximize the log pseudolikelihood over the parameters free under `mode`.

    SPATIAL_ONLY fits every time point on its own and returns the pairs in
    `per_time`; gamma/beta1 then hold the mean of the later-time pairs. A
    single time point needs no per-time block.
    """
    states.check_shape(net.node_count, states.n_times)
    designs = phi_designs(states, net, mode)
    start_values = start.as_array() if start is not None else None

    if mode == ModelMode.SPATIAL_ONLY:
        starts: list[np.ndarray | None] = [None] * len(designs)
        if start is not None and start.per_time is not None and len(start.per_time) == len(designs):
            starts = [np.asarray(pair, dtype=float) for pair in start.per_time]
        pairs = []
        saturated = False
        for t, (design, response) in enumerate(designs):
            coef, sat = _fit_nonnegative(design, response, [1], starts[t])
            pairs.append((float(coef[0]), float(coef[1])))
            saturated = saturated or sat
        logger.debug(f"[mrf_prior] Per-time spatial fields {np.round(pairs, 4).tolist()}")
        gamma0, beta0 = pairs[0]
        if len(pairs) == 1:
            return MRFParams(
                gamma0=gamma0, beta0=beta0, gamma=gamma0, beta1=beta0, beta2=0.0, saturated=saturated
            )
        gamma, beta1 = np.mean(pairs[1:], axis=0)
        return MRFParams(
            gamma0=gamma0,
            beta0=beta0,
            gamma=float(gamma),
            beta1=float(beta1),
            beta2=0.0,
            saturated=saturated,
            per_time=tuple(pairs),
        )

    (d0, y0), (d1, y1) = designs
    if mode == ModelMode.TEMPORAL_ONLY:
        c0, sat0 = _fit_nonnegative(d0, y0, [], None if start_values is None else start_values[:1])
        c1, sat1 = _fit_nonnegative(
            d1, y1, [1], None if start_values is None else start_values[[2, 4]]
        )
        return MRFParams(
            gamma0=c0[0], beta0=0.0, gamma=c1[0], beta1=0.0, beta2=c1[1], saturated=sat0 or sat1
        )

    c0, sat0 = _fit_nonnegative(d0, y0, [1], None if start_values is None else start_values[:2])
    if y1.size == 0:
        # Single time point: the later-time block inherits the initial field.
        return MRFParams(
            gamma0=c0[0], beta0=c0[1], gamma=c0[0], beta1=c0[1], beta2=0.0, saturated=sat0
        )
    c1, sat1 = _fit_nonnegative(d1, y1, [1, 2], None if start_values is None else start_values[2:])
    return MRFParams(
        gamma0=c0[0], beta0=c0[1], gamma=c1[0], beta1=c1[1], beta2=c1[2], saturated=sat0 or sat1
    )


# ----------------------------------------------------------------------
# Brute-force oracle
# ----------------------------------------------------------------------


def _configurations(p: int) -> np.ndarray:
    return ((np.arange(2**p)[:, None] >> np.arange(p)) & 1).astype(np.int8)


def _transition_weights(
    configs: np.ndarray, prev: np.ndarray, net: GeneNetwork, params: MRFParams
) -> np.ndarray:
    weights = params.gamma * configs.sum(axis=1).astype(float)
    if net.edges:
        i, j = np.array(net.edges).T
        weights += params.beta1 * (configs[:, i] == configs[:, j]).sum(axis=1)
    weights += params.beta2 * (configs == prev[None, :]).sum(axis=1)
    return weights


def joint_log_prob_bruteforce(states: StateMatrix, net: GeneNetwork, params: MRFParams) -> float:
    """
    Exact log Pr(x_1, ..., x_T | x_0) by enumerating every configuration
    per time step to obtain the normalizing constants.
    """
    p = net.node_count
    if p > BRUTE_FORCE_MAX_GENES:
        raise OracleLimitError(f"brute force limited to {BRUTE_FORCE_MAX_GENES} genes, got {p}")
    states.check_shape(p, states.n_times)
    configs = _configurations(p)
    codes = (states.states.astype(np.int64) << np.arange(p)[:, None]).sum(axis=0)

    total = 0.0
    for t in range(1, states.n_times):
        weights = _transition_weights(configs, states.states[:, t - 1], net, params)
        total += weights[codes[t]] - logsumexp(weights)
    return float(total)


def bruteforce_conditional(
    states: StateMatrix, net: GeneNetwork, params: MRFParams, g: int, t: int
) -> float:
    """
    Pr(X_gt = 1 | x_0..x_{t-1}, other genes at t) as a ratio of enumerated
    joints over the first t+1 columns.
    """
    if t < 1:
        raise DimensionError("the brute-force conditional needs t >= 1")
    window = states.states[:, : t + 1].copy()
    logs = []
    for value in (0, 1):
        window[g, t] = value
        logs.append(joint_log_prob_bruteforce(StateMatrix(states=window), net, params))
    return float(np.exp(logs[1] - logsumexp(logs)))
