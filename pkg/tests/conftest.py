"""Test configuration and shared fixtures for netcourse tests."""

import numpy as np
import pytest

from netcourse.models import GGParams, MRFParams, Scenario, ScenarioSpec
from netcourse.network import GeneNetwork, load_edge_list, synthetic_pathway_network
from netcourse.simulate import simulate


@pytest.fixture
def rng() -> np.random.Generator:
    """Provide a fixed-seed generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def sim_theta() -> GGParams:
    """Gamma-Gamma parameters used by the simulation studies."""
    return GGParams(alpha=10.0, alpha0=0.9, nu=0.5)


@pytest.fixture
def triangle() -> GeneNetwork:
    """Complete graph on three genes."""
    return load_edge_list("A\tB\nB\tC\nA\tC\n")


@pytest.fixture
def path_network() -> GeneNetwork:
    """Path A - B - C."""
    return load_edge_list("A\tB\nB\tC\n")


@pytest.fixture
def mixed_phi() -> MRFParams:
    return MRFParams(gamma0=-2.0, beta0=2.0, gamma=-1.0, beta1=0.5, beta2=1.5)


@pytest.fixture(scope="session")
def small_pathway_network() -> GeneNetwork:
    """200-gene overlapping-pathway network with 12 pathways."""
    return synthetic_pathway_network(
        n_genes=200, n_edges=800, n_pathways=12, shared_fraction=0.15, seed=3
    )


@pytest.fixture(scope="session")
def small_temporal_dataset(small_pathway_network):
    """Temporal-scenario data and truth on the small network."""
    spec = ScenarioSpec(scenario=Scenario.TEMPORAL, seed=11)
    return simulate(spec, small_pathway_network)
