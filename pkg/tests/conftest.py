"""Shared fixtures: a fast reduced-scale scenario family (epsilon = 0.2) for
module tests, and the full default-scale runs the acceptance suite reuses."""

import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

import mott1d as m
from mott1d import channels as ch

REDUCED_EPS = 0.2


@pytest.fixture(scope="session")
def reduced_collinear():
    return m.default_params("collinear", epsilon=REDUCED_EPS)


@pytest.fixture(scope="session")
def reduced_opposite():
    return m.default_params("opposite", epsilon=REDUCED_EPS)


@pytest.fixture(scope="session")
def reduced_grid(reduced_collinear):
    p = reduced_collinear
    return m.suggest_grid(p, 1.5 * p.tau2)


@pytest.fixture(scope="session")
def reduced_config():
    return ch.PropagatorConfig(dt=0.1, n_max=2)


@pytest.fixture(scope="session")
def reduced_oracle_final(reduced_collinear, reduced_grid, reduced_config):
    """Coupled-channel run of the reduced collinear scenario to 1.5 tau2."""
    p = reduced_collinear
    state = ch.initialize_channels(p, reduced_grid, reduced_config.n_max)
    return ch.evolve(state, p, reduced_config, 1.5 * p.tau2)


# --- full default-scale fixtures (built lazily; only the acceptance suite
# --- and the heaviest cross-checks pay for them)

from mott1d import experiments as ex


@pytest.fixture(scope="session")
def oracle_collinear_full():
    return m.run_scenario(ex.acceptance_scenario("collinear", "oracle"),
                          keep_oracle_states=True)


@pytest.fixture(scope="session")
def oracle_opposite_full():
    return m.run_scenario(ex.acceptance_scenario("opposite", "oracle"),
                          keep_oracle_states=True)


def _pt_spec(case: str) -> m.ScenarioSpec:
    # the PT engine is only consulted at the headline time 1.5 tau2; the
    # 1.5 tau1 snapshot exists for the oracle-side localization criterion
    spec = ex.acceptance_scenario(case, "pt")
    return replace(spec, times=(max(spec.eval_times),))


@pytest.fixture(scope="session")
def pt_collinear_full():
    return m.run_scenario(_pt_spec("collinear"))


@pytest.fixture(scope="session")
def pt_opposite_full():
    return m.run_scenario(_pt_spec("opposite"))
