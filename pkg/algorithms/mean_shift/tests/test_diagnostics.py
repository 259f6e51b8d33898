"""Tests for Jacobian and convergence-rate diagnostics."""

import numpy as np
import pytest

from algorithms.mean_shift.src import dms
from algorithms.mean_shift.src.diagnostics import (
    empirical_rate,
    gradient_split,
    is_fixed_point,
    jacobian_F,
    polish_mode,
    rate_bound,
    taylor_exponent,
)
from framework.core.errors import InsufficientIterationsError, UnsupportedKernelError, ZeroGradientError
from framework.core.kde import KdeModel
from framework.core.sphere_core import normalize_rows


def random_unit(n, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return normalize_rows(rng.standard_normal((n, dim)))


def offset_from(m, angle, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(m.size)
    u -= (u @ m) * m
    u /= np.linalg.norm(u)
    return np.cos(angle) * m + np.sin(angle) * u


def great_circle_points(angles):
    return np.column_stack([np.cos(angles), np.sin(angles), np.zeros(len(angles))])


def fd_jacobian(model, x, step=1e-6):
    cols = []
    for e in np.eye(model.dim):
        plus = dms._step_coords(model, x + step * e)
        minus = dms._step_coords(model, x - step * e)
        cols.append((plus - minus) / (2 * step))
    return np.column_stack(cols)


@pytest.fixture(scope="module")
def small_model():
    return KdeModel.build(random_unit(60, seed=1), h=0.5)


def test_single_point_jacobian_vanishes():
    X = np.array([0.0, 0.6, 0.8])
    m = KdeModel.build(X[None, :], h=0.5)
    report = jacobian_F(m, X)
    assert report.at_mode
    np.testing.assert_allclose(report.jac, 0.0, atol=1e-10)
    assert rate_bound(m, X) < 1e-10


@pytest.mark.parametrize("kernel", ["von_mises", "truncated:p=3"])
def test_jacobian_matches_finite_differences(kernel):
    data = random_unit(60, seed=2)
    m = KdeModel.build(data, h=0.7, kernel=kernel)
    for x in random_unit(10, seed=3):
        report = jacobian_F(m, x)
        assert not report.at_mode
        np.testing.assert_allclose(report.jac, fd_jacobian(m, x), atol=1e-4)


def test_eigenvalues_come_from_symmetric_form(small_model):
    x = random_unit(1, seed=4)[0]
    report = jacobian_F(small_model, x)
    jac_eigs = np.sort(np.linalg.eigvals(report.jac).real)
    np.testing.assert_allclose(jac_eigs, report.eigenvalues, atol=1e-10)
    assert report.max_abs_eig == np.abs(report.eigenvalues).max()
    assert report.asymmetry >= 0.0


def test_reduced_form_at_mode(scenario_model, scenario_modes):
    for mode in scenario_modes.modes:
        m = polish_mode(scenario_model, mode)
        report = jacobian_F(scenario_model, m)
        assert report.at_mode
        g = scenario_model.gradient(m)
        F = g / np.linalg.norm(g)
        general = (np.eye(3) - np.outer(F, F)) @ scenario_model.hessian(m) / np.linalg.norm(g)
        np.testing.assert_allclose(report.jac, general, atol=1e-8)
        assert report.to_dict()["at_mode"] is True


def test_fixed_point_gate(scenario_model, scenario_modes):
    m = polish_mode(scenario_model, scenario_modes.modes[0])
    assert is_fixed_point(scenario_model, m)
    assert not is_fixed_point(scenario_model, offset_from(m, 0.1))
    tangent, normal = gradient_split(scenario_model, m)
    assert tangent < 1e-8 * normal


def test_zero_gradient_rejected():
    m = KdeModel.build(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]), h=0.5)
    with pytest.raises(ZeroGradientError):
        jacobian_F(m, [0.0, 1.0, 0.0])


def test_jacobian_needs_smooth_profile():
    m = KdeModel.build(random_unit(10, seed=5), h=0.8, kernel="truncated:p=1")
    with pytest.raises(UnsupportedKernelError):
        jacobian_F(m, random_unit(1, seed=6)[0])


def test_rate_bound_ignores_data_order(scenario_data, scenario_modes):
    perm = np.random.default_rng(7).permutation(len(scenario_data))
    a = KdeModel.build(scenario_data, h=0.38)
    b = KdeModel.build(scenario_data[perm], h=0.38)
    mode = scenario_modes.modes[0]
    assert rate_bound(a, mode) == pytest.approx(rate_bound(b, mode), rel=1e-8)


def test_tail_ratios_respect_rate_bound(scenario_model, scenario_modes):
    for k, mode in enumerate(scenario_modes.modes):
        m = polish_mode(scenario_model, mode)
        bound = rate_bound(scenario_model, m)
        assert np.isfinite(bound) and bound < 1.0
        traj = dms.run(scenario_model, offset_from(m, 0.3, seed=k), eps=1e-11)
        ratios = empirical_rate(traj, m, eps=1e-9, last=3)
        assert np.all(ratios <= bound + 0.05)


def test_rate_falls_with_bandwidth_once_points_separate():
    data = great_circle_points(np.array([0.0, 0.3, 0.6]))
    wide = KdeModel.build(data, h=0.1)
    narrow = KdeModel.build(data, h=0.05)
    for X in data:
        assert rate_bound(narrow, X) < rate_bound(wide, X)


def test_single_point_first_ratio_is_zero():
    X = np.array([0.0, 0.6, 0.8])
    m = KdeModel.build(X[None, :], h=0.5)
    traj = dms.run(m, [1.0, 0.0, 0.0])
    ratios = empirical_rate(traj, X, min_ratios=1)
    assert ratios[0] < 1e-12


def test_trajectory_from_mode_has_no_ratios(scenario_model, scenario_modes):
    m = polish_mode(scenario_model, scenario_modes.modes[0])
    traj = dms.run(scenario_model, m)
    with pytest.raises(InsufficientIterationsError):
        empirical_rate(traj, m)


def test_taylor_residuals_are_quadratic(scenario_model, scenario_modes):
    assert taylor_exponent(scenario_model, scenario_modes.modes[0]) >= 1.8
