"""Depth-guided dynamic-object masks.

The chain per frame: stride-3 window variances pick candidate dynamic pixels, DBSCAN
removes isolated candidates, each cluster grows a median-anchored local mask refined to
its largest 8-connected region (M_depth), the candidates' depth range gives a broad mask
(M_broad), and both are united with an optional external mask into M_C.

Masks use one polarity everywhere: 1 = dynamic / remove, 0 = keep.
"""
from dataclasses import dataclass

import cv2
import numpy as np

from .clustering import dbscan
from .defs.params import VarianceThresholds
from .defs.records import BinaryMask, DepthImage, DynamicPixelSet
from .utils import get_logger

logger = get_logger(__name__)

WINDOW = 3
DEFAULT_PIXEL_EPS = 9.0
DEFAULT_PIXEL_MIN_PTS = 4
DEFAULT_BOX_MARGIN = 6


def window_variance(depth: DepthImage, center: tuple[int, int]) -> float:
    """population variance of the 3x3 depth window at (row, col), zeros included

    >>> window_variance(np.ones((3, 3), dtype=np.float32), (1, 1))
    0.0
    """
    u, v = center
    h, w = depth.shape
    if not (1 <= u <= h - 2 and 1 <= v <= w - 2):
        raise IndexError(f"3x3 window at {center} leaves the {h}x{w} image")
    block = np.asarray(depth[u - 1:u + 2, v - 1:v + 2], dtype=np.float64)
    return float(np.var(block))


def _window_blocks(depth: DepthImage) -> np.ndarray:
    """(rows, cols, 9) view of the stride-3 windows that fit inside the image"""
    h, w = depth.shape
    nr, nc = h // WINDOW, w // WINDOW
    tiles = np.asarray(depth[:nr * WINDOW, :nc * WINDOW], dtype=np.float64)
    return tiles.reshape(nr, WINDOW, nc, WINDOW).transpose(0, 2, 1, 3).reshape(
        nr, nc, WINDOW * WINDOW)


def variance_map(depth: DepthImage) -> np.ndarray:
    """variance of every stride-3 window; entry (i, j) is the window centered at (3i+1, 3j+1)"""
    return np.var(_window_blocks(depth), axis=2)


def extract_dynamic_pixels(depth: DepthImage, th: VarianceThresholds) -> DynamicPixelSet:
    """candidate dynamic pixels: one per window whose variance lies in [tau_a, tau_b]

    Windows are visited column-major (outer loop over columns) and each qualifying
    window contributes its first positive-depth pixel in row-major window order.
    """
    h, w = depth.shape
    if h < WINDOW or w < WINDOW:
        raise ValueError(f"depth image {h}x{w} is smaller than one window")
    blocks = _window_blocks(depth)
    variances = np.var(blocks, axis=2)
    positive = blocks > 0
    qualifies = (variances >= th.tau_a) & (variances <= th.tau_b) & positive.any(axis=2)
    # column-major window order
    wi, wj = np.nonzero(qualifies.T)
    wi, wj = wj, wi
    first = np.argmax(positive[wi, wj], axis=1)
    rows = wi * WINDOW + first // WINDOW
    cols = wj * WINDOW + first % WINDOW
    pixels = np.stack([rows, cols], axis=1)
    depths = np.asarray(depth[rows, cols], dtype=np.float64)
    logger.debug("extract_dynamic_pixels: %d of %d windows qualify", len(pixels),
                 variances.size)
    return DynamicPixelSet(pixels, depths)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """largest 8-connected region of a binary mask; ties go to the first region in raster order"""
    count, labels, stats, _ = cv2.connectedComponentsWithStats(
        (mask > 0).astype(np.uint8), connectivity=8)
    if count <= 1:
        return np.zeros(mask.shape, dtype=np.uint8)
    biggest = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
    return (labels == biggest).astype(np.uint8)


def lower_median(values: np.ndarray) -> float:
    """
    >>> lower_median(np.array([4.0, 1.0, 3.0, 2.0]))
    2.0
    """
    ordered = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    return float(ordered[(len(ordered) - 1) // 2])


def depth_mask(depth: DepthImage, pk: DynamicPixelSet, th: VarianceThresholds,
               pixel_eps: float = DEFAULT_PIXEL_EPS, pixel_min_pts: int = DEFAULT_PIXEL_MIN_PTS,
               box_margin: int = DEFAULT_BOX_MARGIN) -> BinaryMask:
    """M_depth: union over pixel clusters of their refined local masks

    For a cluster with bounding rectangle B, the median of the depths in B above tau_c
    anchors the local mask |depth - median| <= tau_d, evaluated on valid depth inside B
    grown by `box_margin` pixels and reduced to its largest 8-connected region.
    """
    h, w = depth.shape
    m_depth = np.zeros((h, w), dtype=np.uint8)
    if len(pk) == 0:
        return m_depth
    if np.any(pk.pixels < 0) or np.any(pk.pixels >= (h, w)):
        raise IndexError("dynamic pixel outside the depth image")

    labeling = dbscan(pk.pixels.astype(np.float64), pixel_eps, pixel_min_pts)
    for cluster in range(labeling.cluster_count):
        members = pk.pixels[labeling.members(cluster)]
        r0, c0 = members.min(axis=0)
        r1, c1 = members.max(axis=0) + 1
        box = depth[r0:r1, c0:c1]
        valid = box[box > th.tau_c]
        if valid.size == 0:
            logger.debug("cluster %d has no depth above tau_c, skipped", cluster)
            continue
        median = lower_median(valid)
        g0, g1 = max(r0 - box_margin, 0), min(r1 + box_margin, h)
        k0, k1 = max(c0 - box_margin, 0), min(c1 + box_margin, w)
        region = np.asarray(depth[g0:g1, k0:k1], dtype=np.float64)
        local = (region > 0) & (np.abs(region - median) <= th.tau_d)
        m_depth[g0:g1, k0:k1] |= largest_component(local)
    logger.debug("depth_mask: %d clusters, %d masked pixels", labeling.cluster_count,
                 int(m_depth.sum()))
    return m_depth


def broad_mask(depth: DepthImage, pk: DynamicPixelSet) -> BinaryMask:
    """M_broad: 1 where depth lies strictly between the min and max candidate depths"""
    if len(pk) == 0:
        return np.zeros(depth.shape, dtype=np.uint8)
    tau_e, tau_f = pk.depths.min(), pk.depths.max()
    d = np.asarray(depth, dtype=np.float64)
    return ((d > tau_e) & (d < tau_f)).astype(np.uint8)


def merge_masks(m_ext: BinaryMask | None, m_depth: BinaryMask, m_broad: BinaryMask) -> BinaryMask:
    """M_C = M_ext | M_depth | M_broad; a missing external mask counts as all zero"""
    if m_depth.shape != m_broad.shape or (m_ext is not None and m_ext.shape != m_depth.shape):
        raise ValueError("masks differ in size")
    merged = (m_depth > 0) | (m_broad > 0)
    if m_ext is not None:
        merged |= m_ext > 0
    return merged.astype(np.uint8)


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """dilation with a (2r+1) x (2r+1) square

    >>> m = np.zeros((5, 5), dtype=np.uint8); m[2, 2] = 1
    >>> int(dilate(m, 1).sum())
    9
    """
    if radius < 0:
        raise ValueError(f"dilation radius must not be negative, got {radius}")
    binary = (np.asarray(mask) > 0).astype(np.uint8)
    if radius == 0:
        return binary
    kernel = np.ones((2 * radius + 1, 2 * radius + 1), dtype=np.uint8)
    return cv2.dilate(binary, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)


@dataclass
class MaskSet:
    """every intermediate of one frame's mask prediction"""
    pk: DynamicPixelSet
    m_depth: BinaryMask
    m_broad: BinaryMask
    m_c: BinaryMask


def predict_masks(depth: DepthImage, th: VarianceThresholds, m_ext: BinaryMask | None = None,
                  pixel_eps: float = DEFAULT_PIXEL_EPS,
                  pixel_min_pts: int = DEFAULT_PIXEL_MIN_PTS,
                  box_margin: int = DEFAULT_BOX_MARGIN, use_broad: bool = True) -> MaskSet:
    """run the full per-frame chain; `use_broad=False` leaves M_broad empty"""
    pk = extract_dynamic_pixels(depth, th)
    m_depth = depth_mask(depth, pk, th, pixel_eps, pixel_min_pts, box_margin)
    m_broad = broad_mask(depth, pk) if use_broad else np.zeros(depth.shape, dtype=np.uint8)
    return MaskSet(pk, m_depth, m_broad, merge_masks(m_ext, m_depth, m_broad))


def window_variance_histogram(depths: list[DepthImage], bins: int = 60,
                              low: float = 1e-9, high: float = 1e-1
                              ) -> tuple[np.ndarray, np.ndarray, int]:
    """log-spaced histogram of stride-3 window variances over several frames

    Returns:
        bin edges, counts per bin, and the number of windows with zero variance
        (constant windows fall outside a log axis)
    """
    edges = np.geomspace(low, high, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    zeros = 0
    for depth in depths:
        v = variance_map(depth).reshape(-1)
        zeros += int(np.count_nonzero(v == 0))
        counts += np.histogram(np.clip(v[v > 0], low, high), bins=edges)[0]
    return edges, counts, zeros
