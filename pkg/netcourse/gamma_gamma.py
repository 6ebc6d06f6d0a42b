"""
Gamma-Gamma observation model.

Each observation is gamma with shape alpha and rate lambda; lambda is gamma
with shape alpha0 and rate nu. An EE cell shares one lambda across both
conditions, a DE cell draws one lambda per condition. All densities are
evaluated in log space.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.optimize import minimize
from scipy.special import gammaln

from netcourse.config import settings
from netcourse.exceptions import DimensionError, FittingError, ValidationError
from netcourse.models import ExpressionData, GGParams, StateMatrix

_LOG_BOUND = 25.0


@dataclass(frozen=True)
class CellStats:
    """Per-cell sufficient statistics: sum of logs and the two condition sums."""

    log_sum: np.ndarray
    sum1: np.ndarray
    sum2: np.ndarray
    m: int
    n: int

    @classmethod
    def from_values(cls, values: np.ndarray, m: int, n: int) -> "CellStats":
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != m + n:
            raise DimensionError(f"expected {m + n} samples, got {values.shape[-1]}")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValidationError("observations must be finite and strictly positive")
        return cls(
            log_sum=np.log(values).sum(axis=-1),
            sum1=values[..., :m].sum(axis=-1),
            sum2=values[..., m:].sum(axis=-1),
            m=m,
            n=n,
        )

    @classmethod
    def from_data(cls, data: ExpressionData) -> "CellStats":
        return cls.from_values(data.values, data.m, data.n)


def _log_density_parts(
    stats: CellStats, alpha: float, alpha0: float, nu: float
) -> tuple[np.ndarray, np.ndarray]:
    m, n = stats.m, stats.n
    common = (alpha - 1.0) * stats.log_sum - (m + n) * gammaln(alpha)
    log_nu = np.log(nu)
    ee = (
        alpha0 * log_nu
        + gammaln((m + n) * alpha + alpha0)
        - gammaln(alpha0)
        - ((m + n) * alpha + alpha0) * np.log(nu + stats.sum1 + stats.sum2)
    )
    de = (
        2.0 * (alpha0 * log_nu - gammaln(alpha0))
        + gammaln(m * alpha + alpha0)
        + gammaln(n * alpha + alpha0)
        - (m * alpha + alpha0) * np.log(nu + stats.sum1)
        - (n * alpha + alpha0) * np.log(nu + stats.sum2)
    )
    return common + ee, common + de


def log_density(y_gt: np.ndarray, state: int, theta: GGParams, m: int, n: int) -> float:
    """Log marginal density of one cell's m+n observations under EE (0) or DE (1)."""
    if state not in (0, 1):
        raise ValidationError(f"state must be 0 or 1, got {state}")
    stats = CellStats.from_values(np.asarray(y_gt, dtype=float), m, n)
    ee, de = _log_density_parts(stats, theta.alpha, theta.alpha0, theta.nu)
    return float(de if state else ee)


def log_density_from_stats(stats: CellStats, theta: GGParams) -> np.ndarray:
    """Array of shape stats.shape + (2,) holding the EE and DE log densities."""
    ee, de = _log_density_parts(stats, theta.alpha, theta.alpha0, theta.nu)
    return np.stack([ee, de], axis=-1)


def log_density_table(data: ExpressionData, theta: GGParams) -> np.ndarray:
    """(p, T+1, 2) log densities for every cell and both states."""
    return log_density_from_stats(CellStats.from_data(data), theta)


def log_bayes_factor(y_gt: np.ndarray, theta: GGParams, m: int, n: int) -> float:
    """log f(y | DE) - log f(y | EE)."""
    return log_density(y_gt, 1, theta, m, n) - log_density(y_gt, 0, theta, m, n)


def theta_log_likelihood(
    data: ExpressionData | CellStats, states: StateMatrix, theta: GGParams
) -> float:
    """Conditional log likelihood of all cells given the states."""
    stats = data if isinstance(data, CellStats) else CellStats.from_data(data)
    table = log_density_from_stats(stats, theta)
    if table.shape[:2] != states.states.shape:
        raise DimensionError(
            f"states shape {states.states.shape} does not match data {table.shape[:2]}"
        )
    picked = np.take_along_axis(table, states.states[..., None].astype(np.int64), axis=-1)
    return float(picked.sum())


def moment_start(stats: CellStats, values: np.ndarray | None = None) -> np.ndarray:
    """Method-of-moments starting point (log alpha, log alpha0, log nu)."""
    size = stats.m + stats.n
    mean = (stats.sum1 + stats.sum2) / size
    alpha = 10.0
    if values is not None:
        var = values.var(axis=-1, ddof=1) if size > 1 else np.zeros_like(mean)
        ok = var > 0
        if ok.any():
            alpha = float(np.median(mean[ok] ** 2 / var[ok]))
    alpha = float(np.clip(alpha, 1e-2, 1e4))

    rates = (alpha / mean).ravel()
    rate_var = rates.var()
    if rate_var > 0 and np.isfinite(rate_var):
        alpha0 = float(rates.mean() ** 2 / rate_var)
    else:
        alpha0 = 1.0
    alpha0 = float(np.clip(alpha0, 1e-2, 1e4))
    nu = float(np.clip(alpha0 / rates.mean(), 1e-6, 1e6))
    return np.log([alpha, alpha0, nu])


def fit_theta(
    data: ExpressionData,
    states: StateMatrix,
    seed: int = 0,
    restarts: int | None = None,
    tol: float | None = None,
    start: GGParams | None = None,
) -> GGParams:
    """
    Maximize the conditional log likelihood over (alpha, alpha0, nu).

    Nelder-Mead runs in log-parameter space from a method-of-moments start
    (or `start`), followed by `restarts` jittered restarts. The returned value
    never scores below the starting point.
    """
    restarts = settings.theta_restarts if restarts is None else restarts
    tol = settings.simplex_tol if tol is None else tol
    stats = CellStats.from_data(data)
    states.check_shape(data.n_genes, data.n_times)
    mask = states.states.astype(bool)

    def negative(log_theta: np.ndarray) -> float:
        if np.any(np.abs(log_theta) > _LOG_BOUND):
            return np.inf
        alpha, alpha0, nu = np.exp(log_theta)
        ee, de = _log_density_parts(stats, alpha, alpha0, nu)
        total = ee[~mask].sum() + de[mask].sum()
        return float(-total) if np.isfinite(total) else np.inf

    x0 = np.log(start.as_array()) if start is not None else moment_start(stats, data.values)
    if not np.isfinite(negative(x0)):
        logger.warning("[gamma_gamma] Non-finite objective at the moment start, using unit start")
        x0 = np.zeros(3)
    f0 = negative(x0)

    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.normal(0.0, 0.5, size=3) for _ in range(restarts)]
    best_x, best_f = x0, f0
    for k, point in enumerate(starts):
        if not np.isfinite(negative(point)):
            continue
        result = minimize(
            negative,
            point,
            method="Nelder-Mead",
            options={"xatol": tol, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
        )
        logger.debug(f"[gamma_gamma] Start {k}: objective {-result.fun:.6g} after {result.nit} iterations")
        if result.fun < best_f:
            best_x, best_f = result.x, float(result.fun)

    if not np.isfinite(best_f):
        raise FittingError("Gamma-Gamma objective is not finite at any start point")

    theta = GGParams.from_array(np.exp(best_x))
    logger.debug(f"[gamma_gamma] Fitted theta {theta.as_array()} with log likelihood {-best_f:.6g}")
    return theta


def sample_gene_obs(
    state: int, theta: GGParams, m: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw one cell's m+n observations from the hierarchy."""
    if state not in (0, 1):
        raise ValidationError(f"state must be 0 or 1, got {state}")
    lam1 = max(rng.gamma(theta.alpha0, 1.0 / theta.nu), 1e-300)
    lam2 = max(rng.gamma(theta.alpha0, 1.0 / theta.nu), 1e-300) if state else lam1
    rates = np.concatenate([np.full(m, lam1), np.full(n, lam2)])
    return np.maximum(rng.gamma(theta.alpha, 1.0 / rates), np.finfo(float).tiny)


def sample_observations(
    states: StateMatrix, theta: GGParams, m: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized sampler for a whole state matrix; shape (p, T+1, m+n)."""
    bits = states.states.astype(bool)
    lam1 = np.maximum(rng.gamma(theta.alpha0, 1.0 / theta.nu, size=bits.shape), 1e-300)
    lam2 = np.maximum(rng.gamma(theta.alpha0, 1.0 / theta.nu, size=bits.shape), 1e-300)
    lam2 = np.where(bits, lam2, lam1)
    rates = np.concatenate(
        [np.repeat(lam1[..., None], m, axis=-1), np.repeat(lam2[..., None], n, axis=-1)], axis=-1
    )
    return np.maximum(rng.gamma(theta.alpha, 1.0 / rates), np.finfo(float).tiny)
