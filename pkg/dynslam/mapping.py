"""Dynamic-free colored point-cloud maps from masked RGB-D frames, with PLY I/O."""
import os
from dataclasses import dataclass, field

import numpy as np

from .defs.errors import DataError
from .defs.geometry import Se3Pose
from .defs.params import CameraIntrinsics
from .defs.records import BinaryMask, DepthImage, RgbImage
from .tracking import backproject
from .utils import get_logger
from .utils.file_utils import ensure_parent

logger = get_logger(__name__)

DEFAULT_MAX_RANGE = 5.0
PLY_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                      ("red", "u1"), ("green", "u1"), ("blue", "u1")])


@dataclass
class ColoredPointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise ValueError("points and colors differ in length")

    def __len__(self) -> int:
        return len(self.points)


def frame_to_cloud(rgb: RgbImage, depth: DepthImage, mask: BinaryMask | None,
                   intr: CameraIntrinsics, pose: Se3Pose, stride: int = 2,
                   max_range: float = DEFAULT_MAX_RANGE) -> ColoredPointCloud:
    """world-frame points of every `stride`-th static pixel with depth in (0, max_range]"""
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    h, w = depth.shape
    if rgb.shape[:2] != (h, w) or (mask is not None and mask.shape != (h, w)):
        raise ValueError("rgb, depth and mask differ in size")
    rows, cols = np.mgrid[0:h:stride, 0:w:stride]
    rows, cols = rows.reshape(-1), cols.reshape(-1)
    z = np.asarray(depth, dtype=np.float64)[rows, cols]
    keep = (z > 0) & (z <= max_range)
    if mask is not None:
        keep &= mask[rows, cols] == 0
    rows, cols, z = rows[keep], cols[keep], z[keep]
    if len(z) == 0:
        return ColoredPointCloud()
    camera = backproject(np.stack([cols, rows], axis=1), z, intr)
    return ColoredPointCloud(pose.apply(camera), rgb[rows, cols])


def stitch(clouds: list[ColoredPointCloud], voxel: float = 0.0) -> ColoredPointCloud:
    """concatenate clouds; with voxel > 0 keep one centroid point and mean color per voxel

    Voxels come out in sorted key order.
    """
    if voxel < 0:
        raise ValueError(f"voxel size must not be negative, got {voxel}")
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return ColoredPointCloud()
    points = np.concatenate([c.points for c in clouds])
    colors = np.concatenate([c.colors for c in clouds])
    if voxel == 0:
        return ColoredPointCloud(points, colors)
    keys = np.floor(points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    centroids = np.zeros((len(counts), 3))
    mean_colors = np.zeros((len(counts), 3))
    np.add.at(centroids, inverse, points)
    np.add.at(mean_colors, inverse, colors.astype(np.float64))
    centroids /= counts[:, None]
    mean_colors = np.rint(mean_colors / counts[:, None])
    logger.debug("stitch: %d points into %d voxels of %.3f m", len(points), len(counts), voxel)
    return ColoredPointCloud(centroids, mean_colors.astype(np.uint8))


def export_ply(cloud: ColoredPointCloud, path: str, binary: bool = True) -> None:
    """write x, y, z float32 and red, green, blue uchar vertices"""
    vertices = np.empty(len(cloud), dtype=PLY_DTYPE)
    for axis, name in enumerate("xyz"):
        vertices[name] = cloud.points[:, axis]
    for channel, name in enumerate(("red", "green", "blue")):
        vertices[name] = cloud.colors[:, channel]
    header = ("ply\n"
              f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
              f"element vertex {len(cloud)}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property uchar red\nproperty uchar green\nproperty uchar blue\n"
              "end_header\n")
    ensure_parent(path)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(vertices.tobytes())
        else:
            for v in vertices:
                f.write(f"{float(v['x']):.9g} {float(v['y']):.9g} {float(v['z']):.9g} "
                        f"{v['red']} {v['green']} {v['blue']}\n".encode("ascii"))
    logger.info("wrote %d points to %s", len(cloud), path)


def read_ply(path: str) -> ColoredPointCloud:
    """read PLY files written by export_ply"""
    if not os.path.isfile(path):
        raise DataError(f"{path} does not exist")
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise DataError(f"{path} is not a PLY file")
        fmt, count = None, 0
        while True:
            line = f.readline()
            if not line:
                raise DataError(f"{path}: PLY header has no end_header")
            words = line.decode("ascii").split()
            if words[:1] == ["format"]:
                fmt = words[1]
            elif words[:2] == ["element", "vertex"]:
                count = int(words[2])
            elif words[:1] == ["end_header"]:
                break
        body = f.read()
    if count == 0 and fmt in ("binary_little_endian", "ascii"):
        vertices = np.empty(0, dtype=PLY_DTYPE)
    elif fmt == "binary_little_endian":
        vertices = np.frombuffer(body, dtype=PLY_DTYPE, count=count)
    elif fmt == "ascii":
        rows = np.loadtxt(body.decode("ascii").splitlines(), ndmin=2)
        vertices = np.empty(count, dtype=PLY_DTYPE)
        for column, name in enumerate(PLY_DTYPE.names):
            vertices[name] = rows[:count, column]
    else:
        raise DataError(f"{path}: unsupported PLY format {fmt}")
    points = np.stack([vertices["x"], vertices["y"], vertices["z"]], axis=1)
    colors = np.stack([vertices["red"], vertices["green"], vertices["blue"]], axis=1)
    return ColoredPointCloud(points.astype(np.float64), colors)
