"""Tests for the directional mean shift iteration, mode finding and basins."""

import numpy as np
import pytest

from algorithms.mean_shift.src import dms
from algorithms.vmf_mixture.src.vmf_mixture import VmfMixture, sample
from framework.core.errors import DegenerateStepError, NoConvergedTrajectoryError
from framework.core.kde import KdeModel
from framework.core.sphere_core import (
    geodesic_distance,
    geodesic_distances,
    lattice_starts,
    lonlat_grid,
    normalize_rows,
)


def random_unit(n, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return normalize_rows(rng.standard_normal((n, dim)))


def single_point_model(kernel="von_mises"):
    return KdeModel.build(np.array([[0.0, 0.6, 0.8]]), h=0.5, kernel=kernel)


def ascent_models(scenario_data):
    q3 = sample(VmfMixture(weights=[1.0], means=[[0, 0, 0, 1.0]], kappas=[5.0]), 300, seed=2)
    datasets = [(scenario_data, 0.38), (random_unit(200, seed=1), 0.3), (q3, 0.4)]
    return [
        KdeModel.build(data, h=h, kernel=kernel)
        for data, h in datasets
        for kernel in ("von_mises", "truncated:p=2")
    ]


def test_single_point_step_lands_on_point():
    m = single_point_model()
    x = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(dms.step(m, x).coords, m.data[0], atol=1e-15)


def test_antipodal_pair_is_degenerate():
    m = KdeModel.build(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]), h=0.5)
    with pytest.raises(DegenerateStepError):
        dms.step(m, [0.0, 1.0, 0.0])
    traj = dms.run(m, [0.0, 1.0, 0.0])
    assert traj.status is dms.DmsStatus.DEGENERATE
    assert traj.iterations == 0


def test_step_is_normalised_gradient(scenario_model):
    for x in random_unit(20, seed=3):
        g = scenario_model.gradient(x)
        np.testing.assert_allclose(dms.step(scenario_model, x).coords, g / np.linalg.norm(g), atol=1e-12)


def test_single_point_run_converges_quickly():
    m = single_point_model()
    traj = dms.run(m, [1.0, 0.0, 0.0])
    assert traj.converged
    assert traj.iterations <= 2
    np.testing.assert_allclose(traj.endpoint, m.data[0], atol=1e-12)


def test_run_from_mode_stops_at_once(scenario_model, scenario_modes):
    traj = dms.run(scenario_model, scenario_modes.modes[0])
    assert traj.converged
    assert traj.iterations == 1


def test_run_rejects_bad_eps(scenario_model):
    with pytest.raises(ValueError):
        dms.run(scenario_model, [0.0, 0.0, 1.0], eps=0.0)


def test_max_iter_status(scenario_model):
    traj = dms.run(scenario_model, random_unit(1, seed=5)[0], max_iter=1)
    assert traj.status is dms.DmsStatus.MAX_ITER
    assert traj.iterations == 1
    assert traj.step_norms.shape == (1,)


def test_ascending_property(scenario_data):
    starts = random_unit(100, seed=7)
    for model in ascent_models(scenario_data):
        for x0 in starts:
            traj = dms.run(model, x0)
            d = traj.densities
            assert np.all(d[1:] >= d[:-1] - 1e-12 * np.abs(d[:-1]))
            if traj.converged:
                assert np.linalg.norm(traj.points[-1] - traj.points[-2]) < 1e-7


def test_batch_matches_single_runs(scenario_model):
    starts = random_unit(30, seed=8)
    batch = dms.run_batch(scenario_model, starts)
    assert batch.converged_mask.all()
    for k, x0 in enumerate(starts):
        traj = dms.run(scenario_model, x0)
        assert geodesic_distance(traj.endpoint, batch.endpoints[k]) < 1e-5


def test_batch_chunks_agree(scenario_model):
    starts = random_unit(25, seed=9)
    whole = dms.run_batch(scenario_model, starts)
    chunked = dms.run_batch(scenario_model, starts, chunk=4)
    dist = np.linalg.norm(whole.endpoints - chunked.endpoints, axis=1)
    assert dist.max() < 1e-6


def test_joint_stop_moves_every_start_together(scenario_model):
    batch = dms.run_batch(scenario_model, random_unit(20, seed=10), joint_stop=True)
    assert batch.converged_mask.all()
    assert np.unique(batch.iterations).size == 1


def test_scenario_has_three_modes(scenario_model, scenario_modes, scenario_mixture):
    assert len(scenario_modes) == 3
    dist = geodesic_distances(scenario_mixture.means, scenario_modes.modes)
    assert np.all(dist.min(axis=1) < 0.2)
    assert np.all(np.diff(scenario_modes.densities) <= 0)
    assert scenario_modes.counts.sum() <= len(scenario_modes.labels)


def test_mode_set_invariants(scenario_model, scenario_modes):
    modes = scenario_modes.modes
    pair = geodesic_distances(modes, modes)[np.triu_indices(len(modes), k=1)]
    assert np.all(pair > scenario_modes.merge_tol)
    for m in modes:
        assert np.linalg.norm(m - dms.step(scenario_model, m).coords) < 1e-6
        assert dms.is_local_max(scenario_model, m)


def test_fibonacci_starts_find_three_modes(scenario_model):
    modes = dms.find_modes(scenario_model, starts=lattice_starts(2, 400))
    assert len(modes) == 3


def test_single_point_dataset_has_one_mode():
    m = single_point_model()
    modes = dms.find_modes(m)
    assert len(modes) == 1
    np.testing.assert_allclose(modes.modes[0], m.data[0], atol=1e-12)


def test_duplicate_starts_give_same_modes(scenario_model):
    starts = random_unit(40, seed=11)
    once = dms.find_modes(scenario_model, starts=starts)
    twice = dms.find_modes(scenario_model, starts=np.vstack([starts, starts]))
    np.testing.assert_allclose(once.modes, twice.modes, atol=1e-8)
    np.testing.assert_array_equal(2 * once.counts, twice.counts)


def test_no_converged_trajectory(scenario_model):
    with pytest.raises(NoConvergedTrajectoryError):
        dms.find_modes(scenario_model, starts=random_unit(5, seed=12), max_iter=1)


def test_saddle_is_not_a_local_max():
    # two equal bumps: the midpoint is a saddle of the density on the sphere
    data = normalize_rows(np.array([[1.0, 0.3, 0.0], [1.0, -0.3, 0.0]]))
    m = KdeModel.build(data, h=0.15)
    assert not dms.is_local_max(m, [1.0, 0.0, 0.0])
    assert dms.is_local_max(m, dms.run(m, data[0]).endpoint)


def test_mode_assignment(scenario_modes):
    labels = scenario_modes.assign(scenario_modes.modes)
    np.testing.assert_array_equal(labels, np.arange(len(scenario_modes)))
    assert scenario_modes.assign(-scenario_modes.modes[:1])[0] == -1


def test_basin_grid_of_modes_is_identity(scenario_model, scenario_modes):
    grid = dms.basin_grid(scenario_model, scenario_modes.modes)
    np.testing.assert_array_equal(grid.labels, np.arange(3))


def test_basin_grid_single_point_dataset():
    m = single_point_model()
    _, grid = lonlat_grid(30.0)
    result = dms.basin_grid(m, grid)
    assert np.all(result.labels == 0)
    assert result.labelled_fraction == 1.0


@pytest.mark.slow
def test_basin_grid_covers_sphere(scenario_model):
    _, grid = lonlat_grid(2.0)
    result = dms.basin_grid(scenario_model, grid)
    assert set(np.unique(result.labels)) <= {-1, 0, 1, 2}
    assert np.mean(np.isin(result.labels, [0, 1, 2])) >= 0.99
    again = dms.basin_grid(scenario_model, grid)
    np.testing.assert_array_equal(result.labels, again.labels)
