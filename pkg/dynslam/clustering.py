"""Density-based clustering (DBSCAN) with deterministic labeling.

Used on image-space dynamic pixels and on latent keypoint projections.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .utils import get_logger

logger = get_logger(__name__)

NOISE = -1


@dataclass
class ClusterLabeling:
    """per-point labels (-1 = noise, 0..k-1 = cluster id) and the cluster count k"""
    labels: np.ndarray
    cluster_count: int

    @property
    def noise(self) -> np.ndarray:
        return self.labels == NOISE

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def region_query(points: np.ndarray, radius: float) -> list[np.ndarray]:
    """indices within `radius` (inclusive, Euclidean) of every point, itself included, ascending"""
    tree = cKDTree(points)
    return [np.sort(np.asarray(nbrs, dtype=np.intp))
            for nbrs in tree.query_ball_point(points, r=radius)]


def dbscan(points: np.ndarray, radius: float, min_pts: int) -> ClusterLabeling:
    """DBSCAN over fixed-dimension points

    Clusters are numbered in the order their first core point appears in the input; a
    border point joins the first cluster that reaches it.

    >>> pts = np.array([[0.0, 0.0], [0.0, 0.1], [0.1, 0.0], [5.0, 5.0]])
    >>> dbscan(pts, radius=0.5, min_pts=3).labels.tolist()
    [0, 0, 0, -1]
    """
    if min_pts < 1:
        raise ValueError(f"min_pts must be at least 1, got {min_pts}")
    if not np.isfinite(radius) or radius < 0:
        raise ValueError(f"radius must be finite and non-negative, got {radius}")
    if isinstance(points, np.ndarray):
        pts = points.astype(np.float64)
    else:
        rows = [np.asarray(p, dtype=np.float64).reshape(-1) for p in points]
        if len({len(r) for r in rows}) > 1:
            raise ValueError("all points must have the same dimension")
        pts = np.array(rows)
    n = len(pts)
    if n == 0:
        return ClusterLabeling(np.zeros(0, dtype=np.intp), 0)
    if pts.ndim != 2:
        raise ValueError("points must form an (n, dim) array")

    neighbors = region_query(pts, radius)
    core = np.array([len(nbrs) >= min_pts for nbrs in neighbors])
    labels = np.full(n, NOISE, dtype=np.intp)
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            for k in neighbors[queue.popleft()]:
                if labels[k] == NOISE:
                    labels[k] = cluster
                    if core[k]:
                        queue.append(k)
        cluster += 1
    logger.debug("dbscan: %d points, %d clusters, %d noise", n, cluster,
                 int(np.count_nonzero(labels == NOISE)))
    return ClusterLabeling(labels, cluster)
