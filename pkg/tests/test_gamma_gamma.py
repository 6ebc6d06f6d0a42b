"""Tests for the Gamma-Gamma observation model."""

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sstats

from netcourse.exceptions import DimensionError, ValidationError
from netcourse.gamma_gamma import (
    CellStats,
    fit_theta,
    log_bayes_factor,
    log_density,
    log_density_from_stats,
    log_density_table,
    sample_gene_obs,
    sample_observations,
    theta_log_likelihood,
)
from netcourse.models import ExpressionData, GGParams, StateMatrix

THETAS = [
    GGParams(alpha=10.0, alpha0=0.9, nu=0.5),
    GGParams(alpha=4.0, alpha0=2.5, nu=1.0),
    GGParams(alpha=20.0, alpha0=1.2, nu=3.0),
]


def _hierarchy_log_density(blocks: list[np.ndarray], theta: GGParams) -> float:
    """
    Integrate the rate out of each block numerically: every block shares one
    rate, blocks are independent.
    """
    total = 0.0
    for block in blocks:
        shape = block.size * theta.alpha + theta.alpha0
        mode = np.log(shape / (theta.nu + block.sum()))

        def log_integrand(v: float) -> float:
            lam = np.exp(v)
            return float(
                sstats.gamma.logpdf(block, a=theta.alpha, scale=1.0 / lam).sum()
                + sstats.gamma.logpdf(lam, a=theta.alpha0, scale=1.0 / theta.nu)
                + v
            )

        peak = log_integrand(mode)
        value, _ = integrate.quad(
            lambda v: np.exp(log_integrand(v) - peak),
            mode - 12.0,
            mode + 12.0,
            points=[mode],
            epsabs=0.0,
            epsrel=1e-11,
            limit=200,
        )
        total += peak + np.log(value)
    return total


@pytest.mark.unit
class TestLogDensity:
    """Closed-form log densities against the hierarchy they come from."""

    def test_single_pair_both_states(self, sim_theta):
        y = np.array([1.0, 1.0])
        ee = log_density(y, 0, sim_theta, 1, 1)
        de = log_density(y, 1, sim_theta, 1, 1)
        assert np.isfinite(ee) and np.isfinite(de)
        assert de - ee == pytest.approx(log_bayes_factor(y, sim_theta, 1, 1), abs=1e-12)
        assert ee == pytest.approx(_hierarchy_log_density([y], sim_theta), rel=1e-6)
        assert de == pytest.approx(_hierarchy_log_density([y[:1], y[1:]], sim_theta), rel=1e-6)

    @pytest.mark.parametrize("theta", THETAS)
    def test_matches_quadrature_on_grid(self, theta):
        grid = np.linspace(0.2, 8.0, 20)
        for k, y1 in enumerate(grid):
            y = np.array([y1, grid[::-1][k]])
            ee = _hierarchy_log_density([y], theta)
            de = _hierarchy_log_density([y[:1], y[1:]], theta)
            assert log_density(y, 0, theta, 1, 1) == pytest.approx(ee, rel=1e-6, abs=1e-7)
            assert log_density(y, 1, theta, 1, 1) == pytest.approx(de, rel=1e-6, abs=1e-7)

    @pytest.mark.parametrize("theta", THETAS)
    @pytest.mark.parametrize("state", [0, 1])
    def test_integrates_to_one(self, theta, state):
        # trapezoid rule in log coordinates; both tails decay exponentially there
        u = np.arange(-25.0, 45.0, 0.05)
        y1, y2 = np.meshgrid(np.exp(u), np.exp(u), indexing="ij")
        stats = CellStats.from_values(np.stack([y1, y2], axis=-1), 1, 1)
        log_f = log_density_from_stats(stats, theta)[..., state]
        integrand = np.exp(log_f + np.log(y1) + np.log(y2))
        mass = integrate.trapezoid(integrate.trapezoid(integrand, u, axis=1), u)
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_ee_symmetric_in_blocks(self, sim_theta):
        y = np.array([0.7, 2.3, 1.1, 5.0, 0.4, 3.3])
        swapped = np.concatenate([y[3:], y[:3]])
        for state in (0, 1):
            assert log_density(y, state, sim_theta, 3, 3) == pytest.approx(
                log_density(swapped, state, sim_theta, 3, 3), rel=1e-12
            )

    def test_reproducible(self, sim_theta):
        y = np.array([1.5, 2.5, 0.5, 3.5])
        assert log_density(y, 1, sim_theta, 2, 2) == log_density(y, 1, sim_theta, 2, 2)

    def test_large_shape_stays_finite(self):
        theta = GGParams(alpha=500.0, alpha0=50.0, nu=0.01)
        y = np.full(6, 1e4)
        assert np.isfinite(log_density(y, 0, theta, 3, 3))
        assert np.isfinite(log_density(y, 1, theta, 3, 3))

    def test_rejects_nonpositive(self, sim_theta):
        with pytest.raises(ValidationError):
            log_density(np.array([1.0, 0.0]), 0, sim_theta, 1, 1)

    def test_rejects_bad_state(self, sim_theta):
        with pytest.raises(ValidationError):
            log_density(np.array([1.0, 1.0]), 2, sim_theta, 1, 1)

    def test_rejects_wrong_sample_count(self, sim_theta):
        with pytest.raises(DimensionError):
            log_density(np.array([1.0, 1.0, 1.0]), 0, sim_theta, 1, 1)

    def test_table_matches_cells(self, sim_theta, rng):
        values = rng.gamma(2.0, 1.0, size=(4, 3, 5))
        data = ExpressionData(values=values, m=2, n=3)
        table = log_density_table(data, sim_theta)
        assert table.shape == (4, 3, 2)
        for g in range(4):
            for t in range(3):
                for state in (0, 1):
                    assert table[g, t, state] == pytest.approx(
                        log_density(values[g, t], state, sim_theta, 2, 3), rel=1e-12
                    )


@pytest.mark.unit
class TestSampler:
    """Generative sampling from the hierarchy."""

    def test_marginal_mean(self):
        theta = GGParams(alpha=4.0, alpha0=5.0, nu=2.0)
        draws = sample_observations(StateMatrix.zeros(100_000, 1), theta, 3, 3, np.random.default_rng(2))
        per_draw = draws.mean(axis=-1).ravel()
        expected = theta.alpha * theta.nu / (theta.alpha0 - 1.0)
        se = per_draw.std(ddof=1) / np.sqrt(per_draw.size)
        assert abs(per_draw.mean() - expected) < 3.0 * se

    def test_gene_sampler_shape_and_support(self, sim_theta, rng):
        for state in (0, 1):
            y = sample_gene_obs(state, sim_theta, 3, 3, rng)
            assert y.shape == (6,)
            assert np.all(y > 0)

    def test_same_seed_same_draws(self, sim_theta):
        a = sample_gene_obs(1, sim_theta, 3, 3, np.random.default_rng(7))
        b = sample_gene_obs(1, sim_theta, 3, 3, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_de_draws_favor_de(self, sim_theta):
        draws = sample_observations(StateMatrix(states=np.ones((10_000, 1))), sim_theta, 3, 3,
                                    np.random.default_rng(4))
        stats = CellStats.from_values(draws, 3, 3)
        table = log_density_from_stats(stats, sim_theta)
        assert float(np.mean(table[..., 1] - table[..., 0])) > 0.0

    def test_ee_cells_share_one_rate(self, sim_theta):
        # with a huge observation shape each sample sits at its block mean alpha/lambda
        theta = GGParams(alpha=1e6, alpha0=sim_theta.alpha0, nu=sim_theta.nu)
        y = sample_gene_obs(0, theta, 3, 3, np.random.default_rng(1))
        assert np.allclose(y, y[0], rtol=1e-2)

    def test_rejects_bad_state(self, sim_theta, rng):
        with pytest.raises(ValidationError):
            sample_gene_obs(3, sim_theta, 3, 3, rng)


@pytest.mark.unit
class TestFitTheta:
    """Maximum conditional likelihood for the emission parameters."""

    @staticmethod
    def _dataset(theta: GGParams, p: int, seed: int) -> tuple[ExpressionData, StateMatrix]:
        rng = np.random.default_rng(seed)
        states = StateMatrix(states=(rng.random((p, 6)) < 0.25).astype(np.int8))
        values = sample_observations(states, theta, 3, 3, rng)
        return ExpressionData(values=values, m=3, n=3), states

    def test_never_worse_than_start(self, sim_theta):
        data, states = self._dataset(sim_theta, 100, seed=1)
        fitted = fit_theta(data, states, start=sim_theta)
        assert theta_log_likelihood(data, states, fitted) >= theta_log_likelihood(
            data, states, sim_theta
        )

    def test_beats_generator_values(self, sim_theta):
        data, states = self._dataset(sim_theta, 200, seed=2)
        fitted = fit_theta(data, states)
        assert theta_log_likelihood(data, states, fitted) >= theta_log_likelihood(
            data, states, sim_theta
        ) - 1e-6

    def test_constant_observations(self):
        data = ExpressionData(values=np.full((5, 2, 4), 2.0), m=2, n=2)
        states = StateMatrix.zeros(5, 2)
        fitted = fit_theta(data, states)
        assert np.isfinite(theta_log_likelihood(data, states, fitted))

    def test_seeded_restarts_are_deterministic(self, sim_theta):
        data, states = self._dataset(sim_theta, 50, seed=3)
        assert fit_theta(data, states, seed=5) == fit_theta(data, states, seed=5)

    def test_shape_mismatch(self, sim_theta):
        data, _ = self._dataset(sim_theta, 10, seed=4)
        with pytest.raises(DimensionError):
            fit_theta(data, StateMatrix.zeros(9, 6))

    @pytest.mark.slow
    def test_recovers_generator(self, sim_theta):
        for seed in range(20):
            data, states = self._dataset(sim_theta, 1668, seed=100 + seed)
            fitted = fit_theta(data, states)
            relative = np.abs(fitted.as_array() - sim_theta.as_array()) / sim_theta.as_array()
            assert np.all(relative < 0.15), f"replicate {seed}: {fitted}"
