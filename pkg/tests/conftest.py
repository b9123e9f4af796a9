import numpy as np
import pytest

from gpbarrier import benchmark, dynamics, gp, synthesis


@pytest.fixture(scope="session")
def jet():
    """Posterior, data, system, problem for the benchmark configuration."""
    return benchmark.benchmark_model()


@pytest.fixture(scope="session")
def toy():
    """1-d toy problem: unknown drift with a zero-mean prior, g = 1, D = {0}."""
    system = dynamics.ControlAffineSystem(1, 1, lambda X: np.zeros_like(X),
                                          np.array([[1.0]]))
    problem = dynamics.ProblemSpec(dynamics.Box([-1.0], [1.0]),
                                   [dynamics.Box([-0.2], [0.2])],
                                   [dynamics.Box([0.8], [1.0])],
                                   np.array([[-1.0], [0.0], [1.0]]))
    prior = gp.fit_posterior([gp.KernelSpec(1.0, [0.5])], None, noise_std=0.0,
                             state_box=problem.state_box)
    return prior, system, problem


@pytest.fixture(scope="session")
def synthesis_cache():
    """Shared store so expensive CEGIS runs happen once, inside a timed test."""
    return {}


def build_jet_result(jet_bundle, cache):
    if "jet" not in cache:
        posterior, _, system, problem = jet_bundle
        cache["jet"] = benchmark.synthesize_benchmark(posterior, system, problem)
    return cache["jet"]


def build_toy_result(toy_bundle, cache):
    if "toy" not in cache:
        prior, system, problem = toy_bundle
        cache["toy"] = synthesis.cegis(
            prior, system, problem, synthesis.BarrierTemplate(1, 1),
            np.array([0.0]), synthesis.CegisConfig(a_max=100.0))
    return cache["toy"]


@pytest.fixture(scope="session")
def jet_result(jet, synthesis_cache):
    return build_jet_result(jet, synthesis_cache)


@pytest.fixture(scope="session")
def toy_result(toy, synthesis_cache):
    return build_toy_result(toy, synthesis_cache)
