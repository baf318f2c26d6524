"""Synthetic dynamic RGB-D sequences with known poses, masks and object volume.

The scene is a textured wall facing the camera and one textured box face that slides
sideways in front of it. Box depth carries a gentle relief and a pixel-checker jitter so
its 3x3 depth variance falls in the default dynamic band while the flat wall does not.
Output follows the TUM layout plus ``intrinsics.txt``, ``mask_gt/`` and ``scene.json``.
"""
import os

import numpy as np
from pydantic import BaseModel, ConfigDict

from .defs.geometry import Se3Pose, Trajectory
from .defs.params import CameraIntrinsics
from .utils import get_logger
from .utils.file_utils import (write_depth, write_intrinsics, write_json, write_mask, write_rgb,
                               write_trajectory)

logger = get_logger(__name__)

DEPTH_OFFSET = 0.001
"""depth timestamps trail the rgb ones by this many seconds"""


class SceneConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = 160
    height: int = 120
    fx: float = 150.0
    fy: float = 150.0
    cx: float = 79.5
    cy: float = 59.5
    frames: int = 30
    fps: float = 20.0
    start_time: float = 1.0
    wall_depth: float = 3.0
    camera_step: float = 0.01
    camera_yaw_step: float = 0.002
    camera_drift: float = 0.0005
    """vertical drift coefficient; the camera's y offset grows as index**1.5"""
    box_start: tuple[float, float, float] = (-0.6, 0.0, 1.5)
    box_size: tuple[float, float] = (0.6, 0.8)
    box_step: float = 0.04
    relief: float = 0.02
    jitter: float = 0.003
    depth_scale: float = 5000.0
    seed: int = 0

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)

    def timestamp(self, index: int) -> float:
        return self.start_time + index / self.fps


def camera_pose(cfg: SceneConfig, index: int) -> Se3Pose:
    """camera-to-world pose of frame `index`; the world frame is the first camera

    The path bends downward so positions are never collinear and trajectory
    alignment stays well posed.
    """
    angle = cfg.camera_yaw_step * index
    c, s = np.cos(angle), np.sin(angle)
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return Se3Pose.from_rt(rotation, [cfg.camera_step * index,
                                      cfg.camera_drift * index ** 1.5, 0.0])


def box_center(cfg: SceneConfig, index: int) -> np.ndarray:
    return np.array(cfg.box_start) + np.array([cfg.box_step * index, 0.0, 0.0])


def texture(a: np.ndarray, b: np.ndarray, cell: float, salt: int) -> np.ndarray:
    """blocky pseudo-random gray levels in [40, 220] on a world-anchored grid"""
    ia = np.floor(a / cell).astype(np.int64)
    ib = np.floor(b / cell).astype(np.int64)
    h = (ia * 73856093) ^ (ib * 19349663) ^ (salt * 83492791)
    return (40 + np.mod(h, 181)).astype(np.float64)


def render_frame(cfg: SceneConfig, index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rgb uint8, depth float32 meters, ground-truth box mask uint8) of one frame"""
    pose = camera_pose(cfg, index)
    v, u = np.mgrid[0:cfg.height, 0:cfg.width].astype(np.float64)
    rays = np.stack([(u - cfg.cx) / cfg.fx, (v - cfg.cy) / cfg.fy, np.ones_like(u)], axis=-1)
    directions = rays @ pose.rotation_matrix.T
    origin = pose.translation

    # wall: plane z = wall_depth
    t_wall = (cfg.wall_depth - origin[2]) / directions[..., 2]
    hit = origin + t_wall[..., None] * directions
    wall_tex = texture(hit[..., 0] + 7.0, hit[..., 1] + 7.0, 0.1, cfg.seed)
    rgb = np.stack([wall_tex, wall_tex, wall_tex * 0.8 + 30.0], axis=-1)
    depth = t_wall.copy()

    # box face: plane z = box center z, bounded by the box size
    center = box_center(cfg, index)
    half_w, half_h = cfg.box_size[0] / 2.0, cfg.box_size[1] / 2.0
    t_box = (center[2] - origin[2]) / directions[..., 2]
    face = origin + t_box[..., None] * directions
    lx, ly = face[..., 0] - center[0], face[..., 1] - center[1]
    on_box = (t_box > 0) & (np.abs(lx) <= half_w) & (np.abs(ly) <= half_h) & (t_box < t_wall)
    relief = cfg.relief * np.cos(2 * np.pi * lx / cfg.box_size[0]) * \
        np.cos(2 * np.pi * ly / cfg.box_size[1])
    checker = np.where((u.astype(np.int64) + v.astype(np.int64)) % 2 == 0, 1.0, -1.0)
    depth = np.where(on_box, t_box + relief + cfg.jitter * checker, depth)
    box_tex = texture(lx + 3.0, ly + 3.0, 0.05, cfg.seed + 1)
    box_rgb = np.stack([box_tex, box_tex * 0.6, box_tex * 0.4], axis=-1)
    rgb = np.where(on_box[..., None], box_rgb, rgb)

    return (np.clip(np.rint(rgb), 0, 255).astype(np.uint8), depth.astype(np.float32),
            on_box.astype(np.uint8))


def swept_volume(cfg: SceneConfig, margin: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """world-frame axis-aligned bounds of everything the box face covers over the sequence"""
    first, last = box_center(cfg, 0), box_center(cfg, cfg.frames - 1)
    half = np.array([cfg.box_size[0] / 2.0, cfg.box_size[1] / 2.0,
                     cfg.relief + cfg.jitter])
    lo = np.minimum(first, last) - half - margin
    hi = np.maximum(first, last) + half + margin
    return lo, hi


def points_in_volume(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.all((points >= lo) & (points <= hi), axis=1)


def ground_truth(cfg: SceneConfig) -> Trajectory:
    return Trajectory.from_poses([cfg.timestamp(i) for i in range(cfg.frames)],
                                 [camera_pose(cfg, i) for i in range(cfg.frames)])


def render_sequence(out_dir: str, cfg: SceneConfig | None = None) -> str:
    """render every frame and its metadata into `out_dir`; returns `out_dir`"""
    cfg = cfg or SceneConfig()
    os.makedirs(out_dir, exist_ok=True)
    rgb_lines, depth_lines = ["# timestamp filename"], ["# timestamp filename"]
    for i in range(cfg.frames):
        ts = cfg.timestamp(i)
        rgb, depth, mask = render_frame(cfg, i)
        rgb_name = f"rgb/{ts:.6f}.png"
        depth_name = f"depth/{ts + DEPTH_OFFSET:.6f}.png"
        write_rgb(os.path.join(out_dir, rgb_name), rgb)
        write_depth(os.path.join(out_dir, depth_name), depth, cfg.depth_scale)
        write_mask(os.path.join(out_dir, "mask_gt", f"{ts:.6f}.png"), mask)
        rgb_lines.append(f"{ts:.6f} {rgb_name}")
        depth_lines.append(f"{ts + DEPTH_OFFSET:.6f} {depth_name}")
    for name, lines in (("rgb.txt", rgb_lines), ("depth.txt", depth_lines)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    write_trajectory(os.path.join(out_dir, "groundtruth.txt"), ground_truth(cfg))
    write_intrinsics(os.path.join(out_dir, "intrinsics.txt"), cfg.intrinsics)
    lo, hi = swept_volume(cfg)
    write_json(os.path.join(out_dir, "scene.json"),
               {"config": cfg.model_dump(), "swept_min": lo.tolist(), "swept_max": hi.tolist()})
    logger.info("rendered %d synthetic frames into %s", cfg.frames, out_dir)
    return out_dir
