import itertools

import numpy as np
import pytest

from dynslam.clustering import NOISE
from dynslam.defs.params import ResampleConfig
from dynslam.resampler import (CLUSTERED, REMOVED, UNIFORM, Autoencoder, SubsetFitness,
                               adaptive_radius, draw_overlay, farthest_point_subset,
                               ga_resample_cluster, ga_select, nn_distance_std,
                               normalize_keypoints, plan_resampling, resample_keypoints,
                               subset_size, train_autoencoder)

CFG = ResampleConfig()


def clumped_keypoints():
    """50 keypoints in a 6x6 px clump plus a 10x5 grid of 50 at 40 px spacing"""
    rng = np.random.default_rng(7)
    clump = np.column_stack([500 + rng.uniform(0, 6, 50), 350 + rng.uniform(0, 6, 50),
                             np.full(50, 7.0), np.full(50, 30.0), np.full(50, 0.9),
                             np.zeros(50)])
    gx, gy = np.meshgrid(20 + 40 * np.arange(10), 20 + 40 * np.arange(5))
    grid = np.column_stack([gx.reshape(-1), gy.reshape(-1), np.full(50, 14.0),
                            np.full(50, 200.0), np.full(50, 0.1), np.ones(50)])
    return np.concatenate([clump, grid])


def test_normalize_keypoints_range(rng):
    kps = np.column_stack([rng.uniform(0, 640, 30), rng.uniform(0, 480, 30),
                           np.full(30, 7.0), rng.uniform(0, 360, 30), rng.random(30),
                           rng.integers(0, 3, 30)])
    x = normalize_keypoints(kps)
    assert x.min() >= 0 and x.max() <= 1
    assert np.all(x[:, 2] == 0)
    assert x[:, 0].max() == 1.0


def test_autoencoder_gradient_matches_finite_differences():
    x = np.random.default_rng(3).random((12, 6))
    for seed in range(5):
        model = Autoencoder(seed=seed)
        flat = model.get_flat()
        _, grad = model.flat_grad(x)
        for k in np.random.default_rng(seed).choice(flat.size, 10, replace=False):
            h = 1e-5
            plus, minus = flat.copy(), flat.copy()
            plus[k] += h
            minus[k] -= h
            model.set_flat(plus)
            up = model.loss(x)
            model.set_flat(minus)
            down = model.loss(x)
            model.set_flat(flat)
            numeric = (up - down) / (2 * h)
            assert abs(numeric - grad[k]) <= 1e-4 * max(abs(numeric), abs(grad[k]), 1e-3)


def test_autoencoder_training_reduces_loss():
    kps = clumped_keypoints()
    for seed in range(5):
        _, latents, losses = train_autoencoder(kps, ResampleConfig(seed=seed))
        assert len(losses) == CFG.epochs + 1
        assert losses[-1] < losses[0]
        assert latents.shape == (len(kps), 2)


def test_autoencoder_initialization_is_seeded():
    a, b = Autoencoder(seed=4), Autoencoder(seed=4)
    assert np.array_equal(a.get_flat(), b.get_flat())
    assert not np.array_equal(a.get_flat(), Autoencoder(seed=5).get_flat())


def test_autoencoder_rejects_wrong_parameter_count():
    with pytest.raises(ValueError):
        Autoencoder().set_flat(np.zeros(3))


def test_train_needs_two_keypoints():
    with pytest.raises(ValueError):
        train_autoencoder(clumped_keypoints()[:1], CFG)


def test_adaptive_radius_matches_sorted_quantile():
    for seed in range(50):
        latents = np.random.default_rng(seed).normal(size=(20, 2))
        squared = sorted(float(np.sum((a - b) ** 2))
                         for a, b in itertools.combinations(latents, 2))
        expected = squared[int(len(squared) * CFG.q0)]
        assert adaptive_radius(latents, CFG) == pytest.approx(expected, rel=1e-12)


def test_adaptive_radius_advances_past_duplicates():
    latents = np.array([[0.0, 0.0]] * 5 + [[1.0, 0.0], [3.0, 0.0]])
    # 10 of the 21 distances are zero
    assert adaptive_radius(latents, CFG) > 0


def test_adaptive_radius_of_identical_latents_is_zero():
    assert adaptive_radius(np.ones((10, 2)), CFG) == 0.0


def test_identical_keypoints_are_kept():
    kps = np.tile([[100.0, 100.0, 7.0, 45.0, 0.5, 0.0]], (12, 1))
    plan = plan_resampling(kps, CFG)
    assert plan.keep.all()
    assert np.all(plan.labels == NOISE)


def test_small_sets_are_kept():
    kps = clumped_keypoints()[:7]
    assert len(resample_keypoints(kps, CFG)) == 7
    assert len(resample_keypoints(np.zeros((0, 6)), CFG)) == 0


def test_subset_size():
    assert subset_size(10, 0.5) == 5
    assert subset_size(3, 0.1) == 1
    assert subset_size(4, 1.0) == 4


def exhaustive_best(cluster, size):
    fitness = SubsetFitness(cluster)
    best = None
    for combo in itertools.combinations(range(len(cluster)), size):
        selected = np.zeros(len(cluster), dtype=bool)
        selected[list(combo)] = True
        score = fitness(selected)[0]
        best = score if best is None else max(best, score)
    return best


def test_ga_is_near_exhaustive_optimum():
    cfg = CFG
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(4, 11))
        cluster = np.column_stack([rng.uniform(0, 100, m), rng.uniform(0, 100, m),
                                   np.full(m, 7.0), np.zeros(m), rng.random(m), np.zeros(m)])
        size = subset_size(m, cfg.selection_ratio)
        selected = np.zeros(m, dtype=bool)
        selected[ga_select(cluster, cfg, np.random.default_rng(seed))] = True
        assert selected.sum() == size
        assert SubsetFitness(cluster)(selected)[0] >= 0.95 * exhaustive_best(cluster, size)


def test_ga_picks_collinear_endpoints():
    cluster = np.array([[0.0, 0, 7, 0, 1.0, 0], [1.0, 0, 7, 0, 1.0, 0],
                        [2.0, 0, 7, 0, 1.0, 0], [3.0, 0, 7, 0, 1.0, 0]])
    assert ga_select(cluster, CFG, np.random.default_rng(0)).tolist() == [0, 3]
    kept = ga_resample_cluster(cluster, CFG)
    assert kept[:, 0].tolist() == [0.0, 3.0]


def test_farthest_point_subset():
    cluster = np.array([[0.0, 0, 7, 0, 0.2, 0], [10.0, 0, 7, 0, 0.9, 0],
                        [5.0, 0, 7, 0, 0.1, 0], [1.0, 0, 7, 0, 0.3, 0]])
    assert np.flatnonzero(farthest_point_subset(cluster, 3)).tolist() == [0, 1, 2]
    assert np.flatnonzero(farthest_point_subset(cluster, 1)).tolist() == [1]


def test_resampling_thins_the_clump():
    kps = clumped_keypoints()
    plan = plan_resampling(kps, CFG)
    kept = kps[plan.keep]
    assert len(kept) < len(kps)
    assert nn_distance_std(kept) < nn_distance_std(kps)
    removed = np.flatnonzero(~plan.keep)
    assert np.all(removed < 50)
    assert plan.radius > 0 and np.count_nonzero(plan.labels != NOISE) >= 7


def test_second_pass_removes_no_more_than_the_first():
    kps = clumped_keypoints()
    once = resample_keypoints(kps, CFG)
    twice = resample_keypoints(once, CFG)
    assert 0 < len(kps) - len(once)
    assert len(once) - len(twice) <= len(kps) - len(once)


def test_latents_follow_a_permutation_of_the_keypoints():
    kps = clumped_keypoints()
    perm = np.random.default_rng(3).permutation(len(kps))
    _, latents, _ = train_autoencoder(kps, CFG)
    _, permuted, _ = train_autoencoder(kps[perm], CFG)
    assert np.allclose(permuted, latents[perm], atol=1e-9)


def test_resampling_is_deterministic():
    kps = clumped_keypoints()
    assert np.array_equal(plan_resampling(kps, CFG).keep, plan_resampling(kps, CFG).keep)


def test_warm_start_continues_from_the_given_model():
    kps = clumped_keypoints()
    first = plan_resampling(kps, CFG)
    start = first.model.get_flat()
    second = plan_resampling(kps, CFG, warm_start=first.model)
    assert second.model is first.model
    assert second.losses[0] == pytest.approx(first.losses[-1])
    assert not np.array_equal(first.model.get_flat(), start)


def test_categories_and_overlay():
    kps = clumped_keypoints()
    plan = plan_resampling(kps, CFG)
    categories = plan.categories
    assert np.count_nonzero(categories == REMOVED) == plan.removed
    assert set(np.unique(categories)) <= {UNIFORM, CLUSTERED, REMOVED}
    canvas = np.zeros((400, 520, 3), dtype=np.uint8)
    overlay = draw_overlay(canvas, kps, plan)
    assert overlay.shape == canvas.shape
    assert overlay.sum() > 0
    assert canvas.sum() == 0


def test_nn_distance_std_of_a_grid_is_zero():
    gx, gy = np.meshgrid(np.arange(5) * 10.0, np.arange(4) * 10.0)
    kps = np.column_stack([gx.reshape(-1), gy.reshape(-1), np.full(20, 7.0),
                           np.zeros(20), np.ones(20), np.zeros(20)])
    assert nn_distance_std(kps) == pytest.approx(0.0)
    assert nn_distance_std(kps[:1]) == 0.0
