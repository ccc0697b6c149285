"""Form factors, channel states and the split-step coupled-channel propagator."""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import mott1d.channels as ch
from mott1d.core import (
    ModelParams,
    OscillatorBasis,
    QuadratureError,
    SpatialGrid,
)
from oracles import free_two_packet, gaussian_form_factor_00


# ---------------------------------------------------------------------------
# potential profiles


def test_potential_peak_value():
    assert ch.potential_profile(0.0) == 1.0


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-10.0, 10.0), shape=st.sampled_from(["gaussian", "bump"]))
def test_potential_even(x, shape):
    assert ch.potential_profile(x, shape) == ch.potential_profile(-x, shape)


def test_potential_gaussian_tail():
    assert ch.potential_profile(8.0) < 1e-13


def test_potential_bump_compact_support():
    assert ch.potential_profile(0.0, "bump") == 1.0
    assert ch.potential_profile(1.0, "bump") == 0.0
    assert ch.potential_profile(-1.5, "bump") == 0.0
    assert 0.0 < ch.potential_profile(0.9, "bump") < 1.0


def test_potential_unknown_shape():
    with pytest.raises(ValueError):
        ch.potential_profile(0.0, "square-well")


# ---------------------------------------------------------------------------
# form factors


@pytest.fixture(scope="module")
def ff_setup():
    params = ModelParams(M=1.0, m=0.2, omega=0.2, lam=1e-3, delta=5.0, sigma=5.0,
                         P0=1.0, a1=16.0, a2=-32.0)
    grid = SpatialGrid.symmetric(256.0, 2048)  # dx = 0.25, a1 = 16 on the grid
    basis = OscillatorBasis.for_oscillator(params, 1, 4)
    table = ch.build_form_factors(params, basis, grid)
    return params, grid, basis, table


def test_form_factor_ground_state_matches_closed_form(ff_setup):
    params, grid, basis, table = ff_setup
    expected = gaussian_form_factor_00(grid.points, basis.a, params.delta, basis.length)
    assert np.max(np.abs(table.values[0, 0] - expected)) <= 1e-10


def test_form_factor_parity_zero_at_center(ff_setup):
    params, grid, basis, table = ff_setup
    j_center = int(round((basis.a - grid.x_min) / grid.dx))
    assert grid.points[j_center] == basis.a
    assert abs(table.values[0, 1, j_center]) <= 1e-13
    assert abs(table.values[2, 1, j_center]) <= 1e-13


def test_form_factor_symmetric_exactly(ff_setup):
    _, _, _, table = ff_setup
    np.testing.assert_array_equal(table.values, table.values.transpose(1, 0, 2))


def test_form_factor_decay_far_from_center(ff_setup):
    params, grid, basis, table = ff_setup
    reach = 10.0 * max(params.delta, basis.length)
    far = np.abs(grid.points - basis.a) >= reach
    assert np.max(np.abs(table.values[:, :, far])) < 1e-10


def test_form_factor_against_dense_quadrature(ff_setup):
    # independent check of an off-diagonal element by brute-force quadrature
    params, grid, basis, table = ff_setup
    r = np.linspace(basis.a - 60.0, basis.a + 60.0, 20001)
    dr = r[1] - r[0]
    phi = basis.eigenfunctions(r)
    for (n, k) in [(1, 2), (0, 3), (2, 2)]:
        j = grid.n_points // 2 + 80
        x = grid.points[j]
        integrand = phi[n] * phi[k] * np.exp(-((x - r) / params.delta) ** 2 / 2.0)
        brute = float(np.sum(integrand) * dr)
        assert table.values[n, k, j] == pytest.approx(brute, abs=1e-9)


def test_form_factor_quadrature_budget_error(ff_setup):
    params, grid, basis, _ = ff_setup
    with pytest.raises(QuadratureError):
        ch.build_form_factors(params, basis, grid, tol=1e-16, max_nodes=32)


# ---------------------------------------------------------------------------
# channel state


def test_initialize_channels(reduced_collinear, reduced_grid):
    state = ch.initialize_channels(reduced_collinear, reduced_grid, 2)
    assert abs(state.norm() - 1.0) <= 1e-12
    assert np.all(state.amplitudes[1:, :, :] == 0.0)
    assert np.all(state.amplitudes[0, 1:, :] == 0.0)
    f00 = state.amplitudes[0, 0]
    assert np.max(np.abs(f00 - reduced_grid.mirror(f00))) <= 1e-12


def test_initial_probabilities(reduced_collinear, reduced_grid):
    state = ch.initialize_channels(reduced_collinear, reduced_grid, 2)
    probs = ch.channel_probabilities(state)
    assert probs[(0, 0)] == pytest.approx(1.0, abs=1e-12)
    assert all(p == 0.0 for key, p in probs.items() if key != (0, 0))


def test_probabilities_sum_to_norm(reduced_oracle_final):
    probs = ch.channel_probabilities(reduced_oracle_final)
    assert sum(probs.values()) == pytest.approx(reduced_oracle_final.norm() ** 2, abs=1e-10)


# ---------------------------------------------------------------------------
# propagator


def test_free_evolution_matches_analytic(reduced_collinear, reduced_grid):
    p = replace(reduced_collinear, lam=0.0)
    config = ch.PropagatorConfig(dt=0.1, n_max=1)
    state = ch.initialize_channels(p, reduced_grid, 1)
    final = ch.evolve(state, p, config, p.tau2)
    probs = ch.channel_probabilities(final)
    assert probs[(0, 0)] == pytest.approx(1.0, abs=1e-12)
    exact = free_two_packet(reduced_grid.points, p.tau2, p.sigma, p.P0, p.hbar, p.M)
    assert np.max(np.abs(np.abs(final.amplitudes[0, 0]) - np.abs(exact))) <= 1e-8


def test_single_step_norm_preserving(reduced_collinear, reduced_grid):
    config = ch.PropagatorConfig(dt=0.1, n_max=2)
    state = ch.initialize_channels(reduced_collinear, reduced_grid, 2)
    stepped = ch.evolve(state, reduced_collinear, config, 0.1)
    assert abs(stepped.norm() - 1.0) <= 1e-12


def test_norm_drift_full_run(reduced_oracle_final):
    assert abs(reduced_oracle_final.norm() - 1.0) <= 1e-8


def test_top_shell_is_healthy(reduced_oracle_final):
    assert reduced_oracle_final.top_shell_norm() < 1e-6


def test_mirrored_run_has_identical_probabilities(reduced_opposite, reduced_grid,
                                                  reduced_config):
    p = reduced_opposite
    t_final = 1.5 * p.tau2
    runs = {}
    for tag, params in (("base", p), ("mirrored", p.mirrored())):
        state = ch.initialize_channels(params, reduced_grid, reduced_config.n_max)
        final = ch.evolve(state, params, reduced_config, t_final)
        runs[tag] = ch.channel_probabilities(final)
    for key in runs["base"]:
        assert runs["base"][key] == pytest.approx(runs["mirrored"][key], abs=1e-9)


def test_evolve_is_deterministic(reduced_collinear, reduced_grid, reduced_config,
                                 reduced_oracle_final):
    state = ch.initialize_channels(reduced_collinear, reduced_grid, reduced_config.n_max)
    again = ch.evolve(state, reduced_collinear, reduced_config, 1.5 * reduced_collinear.tau2)
    np.testing.assert_array_equal(again.amplitudes, reduced_oracle_final.amplitudes)


def test_snapshot_equals_direct_run(reduced_collinear, reduced_grid, reduced_config):
    p = reduced_collinear
    t_mid, t_final = 0.75 * p.tau2, 1.5 * p.tau2
    seen = []
    state = ch.initialize_channels(p, reduced_grid, reduced_config.n_max)
    ch.evolve(state, p, reduced_config, t_final,
              snapshot_times=[t_mid], on_snapshot=seen.append)
    assert len(seen) == 1
    # the same step sequence reaches the snapshot (up to the re-derived dt)
    state2 = ch.initialize_channels(p, reduced_grid, reduced_config.n_max)
    direct = ch.evolve(state2, p, reduced_config, seen[0].t)
    assert seen[0].t == pytest.approx(t_mid, rel=1e-12)
    np.testing.assert_allclose(seen[0].amplitudes, direct.amplitudes, rtol=0, atol=1e-12)


def test_snapshot_time_out_of_range(reduced_collinear, reduced_grid, reduced_config):
    state = ch.initialize_channels(reduced_collinear, reduced_grid, reduced_config.n_max)
    with pytest.raises(ValueError):
        ch.evolve(state, reduced_collinear, reduced_config, 10.0,
                  snapshot_times=[20.0], on_snapshot=lambda s: None)


def test_evolve_requires_forward_time(reduced_collinear, reduced_grid, reduced_config):
    state = ch.initialize_channels(reduced_collinear, reduced_grid, reduced_config.n_max)
    with pytest.raises(ValueError):
        ch.evolve(state, reduced_collinear, reduced_config, 0.0)


def test_truncation_error_and_escalation(reduced_collinear, reduced_grid):
    strong = replace(reduced_collinear, lam=0.05)  # lambda0 = 0.05: heavy excitation
    config = ch.PropagatorConfig(dt=0.1, n_max=1)
    state = ch.initialize_channels(strong, reduced_grid, 1)
    with pytest.raises(ch.TruncationError):
        ch.evolve(state, strong, config, 1.5 * strong.tau2)
    final, used = ch.evolve_with_escalation(strong, reduced_grid, config,
                                            1.5 * strong.tau2)
    assert used.n_max > 1
    assert final.top_shell_norm() < used.top_shell_threshold


def test_escalation_cap(reduced_collinear, reduced_grid):
    strong = replace(reduced_collinear, lam=0.05)
    config = ch.PropagatorConfig(dt=0.1, n_max=1)
    with pytest.raises(ch.TruncationError):
        ch.evolve_with_escalation(strong, reduced_grid, config, 1.5 * strong.tau2,
                                  n_max_cap=1)


def test_config_validation():
    with pytest.raises(ValueError):
        ch.PropagatorConfig(dt=0.0)
    with pytest.raises(ValueError):
        ch.PropagatorConfig(n_max=0)
    with pytest.raises(ValueError):
        ch.PropagatorConfig(scheme="euler")


# ---------------------------------------------------------------------------
# exports


def test_snapshot_csv_and_summary(tmp_path, reduced_oracle_final):
    path = tmp_path / "snap.csv"
    ch.snapshot_to_csv(reduced_oracle_final, path)
    header = path.read_text().splitlines()[0]
    assert header == "x,n1,n2,re_f,im_f"
    summary = ch.probability_summary(reduced_oracle_final)
    assert summary["t"] == reduced_oracle_final.t
    assert "0,0" in summary["probabilities"]
    total = sum(summary["probabilities"].values())
    assert total == pytest.approx(1.0, abs=1e-8)
