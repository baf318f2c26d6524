"""TUM-format RGB-D sequence loading, timestamp association and depth decoding.

A sequence directory holds ``rgb.txt`` and ``depth.txt`` ("timestamp filename" per line,
``#`` comments) and optionally ``groundtruth.txt`` ("timestamp tx ty tz qx qy qz qw").
"""
import os

import numpy as np

from .defs.errors import DataError
from .defs.geometry import Trajectory
from .defs.records import DepthImage, FrameRecord, RgbImage
from .utils import get_logger
from .utils.file_utils import read_depth_raw, read_rgb, read_text_rows, read_trajectory

logger = get_logger(__name__)

DEFAULT_MAX_DIFF = 0.02
DEFAULT_DEPTH_SCALE = 5000.0


def associate(a_ts: np.ndarray, b_ts: np.ndarray,
              max_diff: float = DEFAULT_MAX_DIFF) -> list[tuple[int, int]]:
    """greedy nearest-timestamp association of two timestamp lists

    Candidate pairs with |a - b| <= max_diff are taken in order of increasing gap; each
    index is used at most once. Pairs come back sorted by the `a` index.

    >>> associate(np.array([1.00, 2.00]), np.array([1.01, 3.00]))
    [(0, 0)]
    >>> associate(np.array([1.00]), np.array([1.05]))
    []
    """
    a_ts = np.asarray(a_ts, dtype=np.float64).reshape(-1)
    b_ts = np.asarray(b_ts, dtype=np.float64).reshape(-1)
    if len(a_ts) == 0 or len(b_ts) == 0:
        return []
    order = np.argsort(b_ts, kind="stable")
    b_sorted = b_ts[order]
    lo = np.searchsorted(b_sorted, a_ts - max_diff, side="left")
    hi = np.searchsorted(b_sorted, a_ts + max_diff, side="right")
    counts = hi - lo
    if counts.sum() == 0:
        return []
    a_idx = np.repeat(np.arange(len(a_ts)), counts)
    b_pos = np.concatenate([np.arange(l, h) for l, h in zip(lo, hi) if h > l])
    b_idx = order[b_pos]
    gaps = np.abs(a_ts[a_idx] - b_ts[b_idx])
    within = gaps <= max_diff
    a_idx, b_idx, gaps = a_idx[within], b_idx[within], gaps[within]

    used_a = np.zeros(len(a_ts), dtype=bool)
    used_b = np.zeros(len(b_ts), dtype=bool)
    pairs = []
    for k in np.lexsort((b_idx, a_idx, gaps)):
        i, j = a_idx[k], b_idx[k]
        if not used_a[i] and not used_b[j]:
            used_a[i] = used_b[j] = True
            pairs.append((int(i), int(j)))
    return sorted(pairs)


def _read_index(path: str) -> tuple[np.ndarray, list[str]]:
    rows, _ = read_text_rows(path, 2)
    stamps, names = [], []
    for fields in rows:
        stamps.append(float(fields[0]))
        names.append(fields[1])
    return np.array(stamps, dtype=np.float64), names


def load_sequence(directory: str, max_diff: float = DEFAULT_MAX_DIFF
                  ) -> tuple[list[FrameRecord], Trajectory | None]:
    """load and associate a TUM-layout sequence

    Returns:
        frame records sorted by RGB timestamp, and the ground-truth trajectory when
        ``groundtruth.txt`` exists

    Raises:
        DataError: if an index file is missing or no RGB/depth pair associates
    """
    rgb_index = os.path.join(directory, "rgb.txt")
    depth_index = os.path.join(directory, "depth.txt")
    for index in (rgb_index, depth_index):
        if not os.path.isfile(index):
            raise DataError(f"sequence index {index} is missing")
    rgb_ts, rgb_names = _read_index(rgb_index)
    depth_ts, depth_names = _read_index(depth_index)

    pairs = associate(rgb_ts, depth_ts, max_diff)
    if not pairs:
        raise DataError(f"no rgb/depth pairs within {max_diff} s in {directory}")
    records, last = [], -np.inf
    for i, j in sorted(pairs, key=lambda p: (rgb_ts[p[0]], p[0])):
        if rgb_ts[i] <= last:
            logger.warning("dropping rgb frame at repeated timestamp %.6f", rgb_ts[i])
            continue
        last = rgb_ts[i]
        records.append(FrameRecord(timestamp=rgb_ts[i],
                                   rgb_path=os.path.join(directory, rgb_names[i]),
                                   depth_path=os.path.join(directory, depth_names[j]),
                                   depth_timestamp=depth_ts[j]))
    logger.info("%s: %d rgb, %d depth entries, %d associated frames", directory,
                len(rgb_ts), len(depth_ts), len(records))

    gt_path = os.path.join(directory, "groundtruth.txt")
    ground_truth = read_trajectory(gt_path) if os.path.isfile(gt_path) else None
    return records, ground_truth


def decode_depth(raw: np.ndarray, depth_scale: float = DEFAULT_DEPTH_SCALE) -> DepthImage:
    """raw 16-bit depth to meters; raw 0 stays 0 (invalid)

    >>> decode_depth(np.array([[5000, 0, 65535]], dtype=np.uint16)).astype(float).round(3).tolist()
    [[1.0, 0.0, 13.107]]
    """
    if not depth_scale > 0:
        raise ValueError(f"depth scale must be positive, got {depth_scale}")
    return (np.asarray(raw, dtype=np.float64) / depth_scale).astype(np.float32)


def read_frame(record: FrameRecord, depth_scale: float = DEFAULT_DEPTH_SCALE
               ) -> tuple[RgbImage, DepthImage]:
    rgb = read_rgb(record.rgb_path)
    depth = decode_depth(read_depth_raw(record.depth_path), depth_scale)
    if rgb.shape[:2] != depth.shape:
        raise DataError(f"rgb {record.rgb_path} and depth {record.depth_path} differ in size")
    return rgb, depth
