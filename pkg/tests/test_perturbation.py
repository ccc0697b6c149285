"""Dyson engine: free propagator, kick accumulation, scaling structure."""

import math
from dataclasses import replace

import numpy as np
import pytest

import mott1d.perturbation as pt
from mott1d.channels import form_factor_pair
from mott1d.core import (
    ModelParams,
    QuadratureError,
    SpatialGrid,
    make_gaussian_packet,
    free_spread,
    suggest_grid,
)


@pytest.fixture(scope="module")
def free_params():
    return ModelParams(M=1.0, m=0.2, omega=0.2, lam=0.0, delta=5.0, sigma=1.0,
                       P0=2.0, a1=25.0, a2=50.0)


# ---------------------------------------------------------------------------
# free propagator


def test_free_propagate_zero_time_is_identity(free_params):
    g = SpatialGrid.symmetric(64.0, 2048)
    psi = make_gaussian_packet(g, 1.0, 2.0)
    out = pt.free_propagate(psi, 0.0, free_params)
    assert np.max(np.abs(out.values - psi.values)) <= 1e-14


def test_free_propagate_center_and_width(free_params):
    g = SpatialGrid.symmetric(64.0, 4096)
    p = free_params
    psi = make_gaussian_packet(g, p.sigma, p.P0, hbar=p.hbar)
    t = 5.0
    out = pt.free_propagate(psi, t, p)
    x = g.points
    rho = out.density() * g.dx
    mean = float(np.sum(rho * x))
    spread = math.sqrt(float(np.sum(rho * (x - mean) ** 2)))
    assert mean == pytest.approx(p.v0 * t, abs=1e-9)
    assert spread == pytest.approx(free_spread(p.sigma, t, p.hbar, p.M) / math.sqrt(2.0),
                                   abs=1e-9)


def test_free_propagate_group_property(free_params):
    g = SpatialGrid.symmetric(64.0, 2048)
    psi = make_gaussian_packet(g, 1.0, 2.0)
    out = pt.free_propagate(pt.free_propagate(psi, 3.7, free_params), -3.7, free_params)
    assert np.max(np.abs(out.values - psi.values)) <= 1e-12


# ---------------------------------------------------------------------------
# first order


def test_first_order_zero_coupling(reduced_collinear, reduced_grid):
    p = replace(reduced_collinear, lam=0.0)
    amp = pt.first_order_amplitude((1, 0), 0.5 * p.tau2, p, grid=reduced_grid)
    assert np.all(amp.amplitude.values == 0.0)
    assert amp.probability == 0.0


def test_first_order_lambda_doubling_quadruples_exactly(reduced_collinear, reduced_grid):
    p = reduced_collinear
    ff = form_factor_pair(p, reduced_grid, 1)
    t = p.tau2
    a1 = pt.first_order_amplitude((1, 0), t, p, ff, grid=reduced_grid)
    a2 = pt.first_order_amplitude((1, 0), t, replace(p, lam=2.0 * p.lam), ff,
                                  grid=reduced_grid)
    assert a2.probability == 4.0 * a1.probability


def test_first_order_rejects_bad_target(reduced_collinear, reduced_grid):
    with pytest.raises(ValueError):
        pt.first_order_amplitude((1, 1), 10.0, reduced_collinear, grid=reduced_grid)
    with pytest.raises(ValueError):
        pt.first_order_amplitude((0, 0), 10.0, reduced_collinear, grid=reduced_grid)


def test_first_order_grows_after_arrival():
    # before the packet reaches a1 the excitation is tail-suppressed by >= 1e3
    p = m_default_collinear_eps01()
    grid = suggest_grid(p, 2.0 * p.tau1)
    ff = form_factor_pair(p, grid, 1)
    early = pt.first_order_amplitude((1, 0), 0.5 * p.tau1, p, ff, grid=grid)
    late = pt.first_order_amplitude((1, 0), 2.0 * p.tau1, p, ff, grid=grid)
    assert late.probability >= 1e3 * early.probability


def m_default_collinear_eps01():
    import mott1d.experiments as ex
    return ex.default_params("collinear", epsilon=0.1)


# ---------------------------------------------------------------------------
# second order


def test_second_order_zero_coupling(reduced_collinear, reduced_grid):
    p = replace(reduced_collinear, lam=0.0)
    amp = pt.second_order_joint_amplitude((1, 1), 1.5 * p.tau2, p, grid=reduced_grid)
    assert np.all(amp.amplitude.values == 0.0)
    assert amp.probability == 0.0


def test_second_order_lambda_fourth_power(reduced_collinear, reduced_grid):
    p = reduced_collinear
    ff = form_factor_pair(p, reduced_grid, 1)
    t = 1.5 * p.tau2
    probs = {}
    for lam in (5e-4, 1e-3, 3e-3):
        amp = pt.second_order_joint_amplitude((1, 1), t, replace(p, lam=lam), ff,
                                              grid=reduced_grid)
        probs[lam] = amp.probability
    lams = sorted(probs)
    for lo, hi in [(lams[0], lams[1]), (lams[0], lams[2]), (lams[1], lams[2])]:
        slope = math.log(probs[hi] / probs[lo]) / math.log(hi / lo)
        assert abs(slope - 4.0) <= 1e-10


def test_second_order_ordering_dominance(reduced_collinear, reduced_grid):
    # same-side geometry: the packet passes a1 first, so the 1->2 ordering
    # carries essentially all of the amplitude
    p = reduced_collinear
    amp = pt.second_order_joint_amplitude((1, 1), 1.5 * p.tau2, p, grid=reduced_grid)
    p12 = amp.ordering_probabilities["1->2"]
    p21 = amp.ordering_probabilities["2->1"]
    assert p12 > 1e3 * p21
    assert amp.probability == pytest.approx(p12, rel=0.05)


def test_second_order_warns_before_tau2(reduced_collinear, reduced_grid):
    p = reduced_collinear
    with pytest.warns(UserWarning):
        pt.second_order_joint_amplitude((1, 1), 0.5 * p.tau2, p, grid=reduced_grid)


def test_second_order_rejects_single_excitation(reduced_collinear, reduced_grid):
    with pytest.raises(ValueError):
        pt.second_order_joint_amplitude((1, 0), 10.0, reduced_collinear,
                                        grid=reduced_grid)


def test_dyson_order_validation():
    with pytest.raises(ValueError):
        pt.DysonOrder(3)
    with pytest.raises(ValueError):
        pt.DysonOrder(2, "simultaneous")
    assert pt.DysonOrder(2, "1->2").ordering == "1->2"


# ---------------------------------------------------------------------------
# histories


def test_histories_zero_coupling(reduced_collinear, reduced_grid):
    p = replace(reduced_collinear, lam=0.0)
    hist = pt.history_probabilities(1.5 * p.tau2, p, n_max=2, grid=reduced_grid)
    assert hist.as_tuple() == (1.0, 0.0, 0.0, 0.0)


def test_histories_sum_to_one(reduced_collinear, reduced_grid):
    p = reduced_collinear
    hist = pt.history_probabilities(1.5 * p.tau2, p, n_max=2, grid=reduced_grid)
    assert sum(hist.as_tuple()) == pytest.approx(1.0, abs=1e-12)
    assert hist.p_right_only > 0
    assert hist.p_left_only > 0
    assert hist.p_both > 0
    assert hist.p_both < min(hist.p_right_only, hist.p_left_only)


def test_histories_parity(reduced_opposite, reduced_grid):
    p = reduced_opposite
    t = 1.5 * p.tau2
    base = pt.history_probabilities(t, p, n_max=2, grid=reduced_grid)
    mirrored = pt.history_probabilities(t, p.mirrored(), n_max=2, grid=reduced_grid)
    for a, b in zip(base.as_tuple(), mirrored.as_tuple()):
        assert a == pytest.approx(b, abs=1e-9)


# ---------------------------------------------------------------------------
# quadrature control


def test_quadrature_convergence_error(reduced_collinear, reduced_grid):
    p = reduced_collinear
    with pytest.raises(QuadratureError):
        pt.converged_dyson_run(p, p.tau2, grid=reduced_grid, n_max=1,
                               rtol=0.0, max_halvings=1)


def test_converged_run_reports_step(reduced_collinear, reduced_grid):
    p = reduced_collinear
    amp = pt.first_order_amplitude((1, 0), p.tau2, p, grid=reduced_grid)
    assert amp.converged
    assert 0.0 < amp.quadrature_step < pt.default_duhamel_step(p)


def test_amplitude_json_report(reduced_collinear, reduced_grid):
    import json

    p = reduced_collinear
    amp = pt.second_order_joint_amplitude((1, 1), 1.5 * p.tau2, p, grid=reduced_grid)
    report = amp.as_report()
    assert {"order", "n1", "n2", "t", "P", "quadrature_step", "converged"} <= set(report)
    assert report["order"] == 2
    assert (report["n1"], report["n2"]) == (1, 1)
    assert report["P"] == amp.probability
    json.dumps(report)  # serializable as-is
