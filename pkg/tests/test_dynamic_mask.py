import math

import numpy as np
import pytest

from dynslam.defs.params import VarianceThresholds
from dynslam.defs.records import DynamicPixelSet
from dynslam.dynamic_mask import (broad_mask, depth_mask, dilate, extract_dynamic_pixels,
                                  largest_component, merge_masks, predict_masks,
                                  variance_map, window_variance, window_variance_histogram)
from dynslam.synthetic import render_frame

TH = VarianceThresholds()


def one_window_image():
    """constant 1 m image with a single qualifying window whose first positive pixel is (10, 10)"""
    depth = np.ones((30, 30), dtype=np.float64)
    depth[9:12, 9:12] = 0.01
    depth[9, 9] = depth[9, 10] = depth[9, 11] = depth[10, 9] = 0.0
    return depth


def test_window_variance_worked_example():
    depth = np.ones((3, 3))
    depth[2, 1] = 1.01
    assert window_variance(depth, (1, 1)) == pytest.approx(9.8765e-6, abs=1e-10)


def test_window_variance_matches_direct_computation(rng):
    depth = rng.uniform(0.0, 4.0, (33, 33))
    for _ in range(1000):
        u, v = rng.integers(1, 32, size=2)
        block = depth[u - 1:u + 2, v - 1:v + 2].reshape(-1)
        mean = sum(block) / 9
        expected = sum((x - mean) ** 2 for x in block) / 9
        assert window_variance(depth, (u, v)) == pytest.approx(expected, rel=1e-12)


def test_window_variance_counts_zeros():
    assert window_variance(np.zeros((3, 3)), (1, 1)) == 0.0
    depth = np.ones((3, 3))
    depth[0, 0] = 0.0
    assert window_variance(depth, (1, 1)) == pytest.approx(np.var(depth.reshape(-1)))


def test_window_variance_out_of_bounds():
    with pytest.raises(IndexError):
        window_variance(np.ones((5, 5)), (0, 2))


def test_variance_map_matches_window_variance(rng):
    depth = rng.uniform(0.5, 2.0, (14, 20))
    vmap = variance_map(depth)
    assert vmap.shape == (4, 6)
    for i in range(4):
        for j in range(6):
            assert vmap[i, j] == pytest.approx(window_variance(depth, (3 * i + 1, 3 * j + 1)))


def test_constant_depth_has_no_dynamic_pixels():
    assert len(extract_dynamic_pixels(np.full((30, 40), 2.0), TH)) == 0


def test_single_window_yields_its_first_positive_pixel():
    depth = one_window_image()
    assert TH.tau_a <= window_variance(depth, (10, 10)) <= TH.tau_b
    pk = extract_dynamic_pixels(depth, TH)
    assert pk.pixels.tolist() == [[10, 10]]
    assert pk.depths.tolist() == [0.01]


def test_first_pixel_without_zeros_is_window_corner():
    depth = np.ones((30, 30))
    depth[11, 10] = 1.01
    assert extract_dynamic_pixels(depth, TH).pixels.tolist() == [[9, 9]]


def test_extraction_is_scale_invariant_with_scaled_thresholds():
    depth = one_window_image()
    for k in (0.5, 3.0):
        pk = extract_dynamic_pixels(depth * k, TH.scaled(k))
        assert pk.pixels.tolist() == [[10, 10]]


def test_sharp_edge_window_is_excluded():
    depth = np.ones((30, 30))
    depth[9:12, 9] = 1.1
    assert window_variance(depth, (10, 10)) > TH.tau_b
    assert len(extract_dynamic_pixels(depth, TH)) == 0


def test_at_most_one_pixel_per_window(rng):
    depth = 1.5 + rng.normal(0, 0.003, (47, 62))
    pk = extract_dynamic_pixels(depth, TH)
    assert 0 < len(pk) <= math.ceil(47 / 3) * math.ceil(62 / 3)
    windows = {(r // 3, c // 3) for r, c in pk.pixels}
    assert len(windows) == len(pk)


def test_windows_are_visited_column_major():
    depth = np.ones((30, 30))
    depth[1, 4] = 1.01
    depth[4, 1] = 1.01
    assert extract_dynamic_pixels(depth, TH).pixels.tolist() == [[3, 0], [0, 3]]


def test_image_smaller_than_a_window():
    with pytest.raises(ValueError):
        extract_dynamic_pixels(np.ones((2, 10)), TH)


def test_depth_mask_empty_set():
    assert depth_mask(np.ones((20, 20)), DynamicPixelSet(), TH).sum() == 0


def test_depth_mask_recovers_the_synthetic_box(scene):
    depth, truth = render_frame(scene, 15)[1:]
    pk = extract_dynamic_pixels(depth, TH)
    m_depth = depth_mask(depth, pk, TH)
    assert not np.any(m_depth & (truth == 0))
    iou = np.count_nonzero(m_depth & truth) / np.count_nonzero(m_depth | truth)
    assert iou > 0.95


def test_depth_mask_two_blobs(rng):
    depth = np.full((90, 120), 3.0)
    depth[10:40, 10:40] = 1.5 + rng.normal(0, 0.003, (30, 30))
    depth[50:80, 70:110] = 2.0 + rng.normal(0, 0.003, (30, 40))
    truth = (depth < 2.5).astype(np.uint8)
    pk = extract_dynamic_pixels(depth, TH)
    m_depth = depth_mask(depth, pk, TH)
    assert np.array_equal(m_depth, truth)


def test_cluster_without_valid_depth_is_skipped():
    depth = np.zeros((30, 30))
    depth[10:20, 10:20] = 0.01
    pk = DynamicPixelSet([[r, c] for r in range(10, 20, 3) for c in range(10, 20, 3)],
                         [0.01] * 16)
    assert depth_mask(depth, pk, TH).sum() == 0


def test_largest_component_uses_eight_connectivity():
    mask = np.zeros((6, 6), dtype=np.uint8)
    mask[0, 0] = mask[1, 1] = mask[2, 2] = 1
    mask[4:6, 4:6] = 1
    kept = largest_component(mask)
    assert kept.sum() == 4
    assert kept[4:6, 4:6].all()
    mask[3, 3] = 1
    assert largest_component(mask).sum() == 8


def test_broad_mask_open_interval():
    depth = np.array([[1.5, 2.5, 2.0, 1.2]])
    pk = DynamicPixelSet([[0, 0], [0, 1]], [1.2, 2.0])
    assert broad_mask(depth, pk).tolist() == [[1, 0, 0, 0]]
    assert broad_mask(depth, DynamicPixelSet()).sum() == 0


def test_merge_masks_is_a_union():
    a = np.array([[1, 0, 0, 0]], dtype=np.uint8)
    b = np.array([[0, 1, 0, 0]], dtype=np.uint8)
    c = np.array([[0, 0, 1, 0]], dtype=np.uint8)
    assert merge_masks(None, a, b).tolist() == [[1, 1, 0, 0]]
    assert merge_masks(c, a, b).tolist() == [[1, 1, 1, 0]]
    zero = np.zeros((1, 4), dtype=np.uint8)
    assert merge_masks(None, zero, zero).sum() == 0


def test_merge_masks_rejects_size_mismatch():
    with pytest.raises(ValueError):
        merge_masks(None, np.zeros((2, 2), np.uint8), np.zeros((3, 2), np.uint8))


def test_dilate(rng):
    mask = (rng.random((20, 20)) > 0.9).astype(np.uint8)
    assert np.array_equal(dilate(mask, 0), mask)
    grown = dilate(mask, 2)
    assert grown.sum() >= mask.sum()
    assert np.all(grown[mask == 1] == 1)
    single = np.zeros((7, 7), dtype=np.uint8)
    single[0, 0] = 1
    assert dilate(single, 1).sum() == 4
    with pytest.raises(ValueError):
        dilate(single, -1)


def test_predict_masks_contains_every_stage(scene):
    depth, truth = render_frame(scene, 15)[1:]
    masks = predict_masks(depth, TH)
    assert np.all(masks.m_c >= masks.m_depth)
    assert np.all(masks.m_c >= masks.m_broad)
    assert masks.m_broad.sum() > 0
    without_broad = predict_masks(depth, TH, use_broad=False)
    assert without_broad.m_broad.sum() == 0
    assert np.array_equal(without_broad.m_c, without_broad.m_depth)


def test_predict_masks_on_static_scene(scene):
    static = scene.model_copy(update={"relief": 0.0, "jitter": 0.0})
    depth = render_frame(static, 0)[1]
    assert predict_masks(depth, TH).m_c.sum() == 0


def test_histogram_counts_every_window(rng):
    depths = [rng.uniform(1.0, 1.01, (12, 15)), np.ones((12, 15))]
    edges, counts, zeros = window_variance_histogram(depths, bins=10)
    assert len(edges) == 11 and len(counts) == 10
    assert zeros == 20
    assert counts.sum() + zeros == 40
