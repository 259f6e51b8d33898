"""Tests for the EM reading of directional mean shift."""

import numpy as np
import pytest

from algorithms.mean_shift.src import dms
from algorithms.mean_shift.src.em_view import (
    InnerStop,
    em_state,
    exact_m_step,
    gem_step,
    observed_loglik,
    q_function,
    responsibilities,
    run_em,
)
from framework.core.errors import AllZeroError, DegenerateStepError
from framework.core.kde import KdeModel
from framework.core.special_fn import log_vmf_norm_const
from framework.core.sphere_core import lattice_starts, normalize_rows


def random_unit(n, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return normalize_rows(rng.standard_normal((n, dim)))


def near(points, scale, seed):
    rng = np.random.default_rng(seed)
    return normalize_rows(points + scale * rng.standard_normal(points.shape))


@pytest.fixture(scope="module")
def models(scenario_data):
    return {
        kernel: KdeModel.build(scenario_data, h=0.38, kernel=kernel)
        for kernel in ("von_mises", "truncated:p=2")
    }


def test_single_point_responsibility():
    m = KdeModel.build(np.array([[0.0, 0.0, 1.0]]), h=0.5)
    np.testing.assert_array_equal(responsibilities(m, [0.0, 1.0, 0.0]), [1.0])


def test_symmetric_pair_splits_evenly():
    m = KdeModel.build(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]), h=0.5)
    np.testing.assert_allclose(responsibilities(m, [0.0, 0.0, 1.0]), [0.5, 0.5], atol=1e-15)


def test_von_mises_responsibilities_are_softmax():
    data = random_unit(3, seed=1)
    h = 0.6
    m = KdeModel.build(data, h=h)
    mu = random_unit(1, seed=2)[0]
    logits = data @ mu / h**2
    expected = np.exp(logits - logits.max())
    expected /= expected.sum()
    p = responsibilities(m, mu)
    np.testing.assert_allclose(p, expected, rtol=1e-12)
    assert abs(p.sum() - 1.0) < 1e-12


def test_all_components_vanish():
    m = KdeModel.build(np.array([[0.0, 0.0, 1.0]]), h=0.5, kernel="truncated:p=2")
    with pytest.raises(AllZeroError):
        responsibilities(m, [0.0, 0.0, -1.0])


def test_q_is_minus_infinity_off_support():
    data = normalize_rows(np.array([[1.0, 0.1, 0.0], [1.0, -0.1, 0.0]]))
    m = KdeModel.build(data, h=0.5, kernel="truncated:p=2")
    assert np.isfinite(q_function(m, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]))
    assert q_function(m, [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == -np.inf


def test_single_point_q_peaks_at_the_point():
    X = np.array([0.0, 0.6, 0.8])
    m = KdeModel.build(X[None, :], h=0.5)
    grid = np.vstack([lattice_starts(2, 2000), X])
    values = [q_function(m, mu, [1.0, 0.0, 0.0]) for mu in grid]
    np.testing.assert_array_equal(grid[int(np.argmax(values))], X)


@pytest.mark.parametrize("kernel", ["von_mises", "truncated:p=2"])
def test_gem_step_does_not_lower_q(models, scenario_data, kernel):
    m = models[kernel]
    for mu in near(scenario_data[:150], 0.05, seed=3):
        q_old = q_function(m, mu, mu)
        q_new = q_function(m, gem_step(m, mu), mu)
        assert q_new >= q_old - 1e-12 * abs(q_old)


def test_gem_step_is_the_mean_shift_step(models):
    for kernel, m in models.items():
        starts = random_unit(500, seed=4) if kernel == "von_mises" else near(m.data[:500], 0.05, seed=4)
        for mu in starts:
            np.testing.assert_array_equal(gem_step(m, mu).coords, dms.step(m, mu).coords)


def test_gem_step_degenerate_where_mean_shift_is():
    m = KdeModel.build(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]), h=0.5)
    with pytest.raises(DegenerateStepError):
        gem_step(m, [0.0, 1.0, 0.0])
    with pytest.raises(DegenerateStepError):
        dms.step(m, [0.0, 1.0, 0.0])


def test_von_mises_gem_step_closed_form(models):
    m = models["von_mises"]
    mu = random_unit(1, seed=5)[0]
    s = np.sum(m.data * np.exp((m.data @ mu - 1.0) / 0.38**2)[:, None], axis=0)
    np.testing.assert_allclose(gem_step(m, mu).coords, s / np.linalg.norm(s), atol=1e-12)


@pytest.mark.parametrize("kernel", ["von_mises", "truncated:p=2"])
def test_loglik_offset_is_constant(models, scenario_data, kernel):
    m = models[kernel]
    mus = near(scenario_data[:50], 0.02, seed=6)
    offsets = np.array([observed_loglik(m, mu) - m.log_density(mu) for mu in mus])
    assert offsets.max() - offsets.min() < 1e-9
    assert offsets[0] == pytest.approx(m.log_mass, abs=1e-9)


def test_von_mises_offset_closed_form(scenario_data):
    kappa = 1 / 0.38**2
    expected = float(log_vmf_norm_const(3, kappa) - log_vmf_norm_const(2, kappa))
    closed = KdeModel.build(scenario_data, h=0.38)
    quad = KdeModel.build(scenario_data, h=0.38, method="quadrature")
    assert closed.log_mass == pytest.approx(expected, rel=1e-12)
    assert quad.log_mass == pytest.approx(expected, rel=1e-8)


def test_single_point_loglik():
    X = np.array([0.0, 0.6, 0.8])
    kappa = 4.0
    m = KdeModel.build(X[None, :], h=0.5)
    mu = np.array([1.0, 0.0, 0.0])
    expected = float(log_vmf_norm_const(3, kappa)) + kappa * (X @ mu)
    assert observed_loglik(m, mu) == pytest.approx(expected, rel=1e-12)


def test_em_state_bundle(models):
    m = models["von_mises"]
    mu = random_unit(1, seed=7)[0]
    state = em_state(m, mu)
    assert abs(state.responsibilities.sum() - 1.0) < 1e-12
    assert np.all(state.responsibilities >= 0)
    assert np.isfinite(state.q_value)
    assert state.obs_loglik == observed_loglik(m, mu)


def test_exact_m_step_von_mises_is_single_step(models):
    m = models["von_mises"]
    mu = random_unit(1, seed=8)[0]
    result = exact_m_step(m, mu)
    np.testing.assert_array_equal(result.mu.coords, gem_step(m, mu).coords)
    assert result.inner_iterations == 1
    assert result.stop is InnerStop.CONVERGED


def test_exact_m_step_single_point():
    X = np.array([0.0, 0.6, 0.8])
    m = KdeModel.build(X[None, :], h=0.5, kernel="truncated:p=2")
    result = exact_m_step(m, normalize_rows(np.array([[0.05, 0.6, 0.8]]))[0])
    np.testing.assert_allclose(result.mu.coords, X, atol=1e-12)
    assert not result.zero_division


def test_exact_m_step_improves_on_single_step():
    data = normalize_rows(np.array([[1.0, 0.1, 0.0], [1.0, -0.05, 0.1], [1.0, 0.0, -0.12]]))
    m = KdeModel.build(data, h=0.5, kernel="truncated:p=2")
    mu_t = normalize_rows(np.array([[1.0, 0.2, 0.2]]))[0]
    exact = exact_m_step(m, mu_t)
    q_exact = q_function(m, exact.mu, mu_t)
    q_single = q_function(m, gem_step(m, mu_t), mu_t)
    assert q_exact >= q_single - 1e-12 * abs(q_single)
    assert q_single >= q_function(m, mu_t, mu_t)


@pytest.mark.parametrize("inner", ["single", "exact"])
def test_run_em_loglik_is_monotone(models, scenario_data, inner):
    m = models["truncated:p=2"]
    run = run_em(m, scenario_data[0], inner=inner)
    assert run.status is dms.DmsStatus.CONVERGED
    assert np.all(np.diff(run.loglik) >= -1e-12 * np.abs(run.loglik[:-1]))


def test_single_inner_step_retraces_mean_shift(models):
    m = models["von_mises"]
    x0 = random_unit(1, seed=9)[0]
    em = run_em(m, x0)
    ms = dms.run(m, x0)
    assert em.status is dms.DmsStatus.CONVERGED
    assert np.linalg.norm(em.points[-1] - ms.endpoint) < 1e-6
    assert em.inner_iterations == [1] * em.iterations


def test_run_em_rejects_unknown_inner(models):
    with pytest.raises(ValueError):
        run_em(models["von_mises"], [0.0, 0.0, 1.0], inner="newton")
