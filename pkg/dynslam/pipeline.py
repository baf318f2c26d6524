"""Per-sequence runs: dynamic masks, tracking, map building and evaluation."""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import Settings
from .defs.errors import DataError
from .defs.geometry import Trajectory
from .defs.records import BinaryMask, FrameRecord
from .dynamic_mask import MaskSet, dilate, predict_masks
from .evaluation import MetricReport, evaluate, improvement
from .ingest import associate, load_sequence, read_frame
from .mapping import ColoredPointCloud, export_ply, frame_to_cloud, stitch
from .synthetic import points_in_volume
from .tracking import Frame, Tracker
from .utils import get_logger
from .utils.file_utils import read_mask, write_json, write_mask, write_trajectory
from .utils.log import run_context

logger = get_logger(__name__)


def external_mask(mask_dir: str, frame_path: str) -> BinaryMask | None:
    """mask image named like `frame_path` inside `mask_dir`, if one exists"""
    if not mask_dir:
        return None
    path = os.path.join(mask_dir, os.path.basename(frame_path))
    if not os.path.isfile(path):
        logger.warning("no external mask %s", path)
        return None
    return read_mask(path)


@dataclass
class RunResult:
    mask_mode: str
    trajectory: Trajectory
    cloud: ColoredPointCloud
    report: MetricReport | None = None
    lost_frames: int = 0
    dynamic_fraction: float | None = None
    """share of map points inside the scene's known dynamic-object volume"""

    def summary(self) -> dict:
        out = {"mask_mode": self.mask_mode, "frames": len(self.trajectory),
               "lost_frames": self.lost_frames, "map_points": len(self.cloud)}
        if self.report is not None:
            out["metrics"] = self.report.model_dump()
        if self.dynamic_fraction is not None:
            out["dynamic_fraction"] = self.dynamic_fraction
        return out


class SequenceRunner:
    """run the mask, tracking, mapping and evaluation stages over one sequence directory"""

    def __init__(self, settings: Settings, sequence_dir: str):
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")
        self.settings = settings
        self.sequence_dir = sequence_dir
        self.name = os.path.basename(os.path.normpath(sequence_dir))
        self.records, self.ground_truth = load_sequence(sequence_dir, settings.ASSOC_MAX_DIFF)
        self.intr = settings.camera(fallback=os.path.join(sequence_dir, "intrinsics.txt"))

    def external_mask(self, record: FrameRecord) -> BinaryMask | None:
        return external_mask(self.settings.EXT_MASK_DIR, record.rgb_path)

    def mask_set(self, record: FrameRecord, mode: str) -> MaskSet | None:
        if mode == "off":
            return None
        with run_context(sequence=self.name, frame=f"{record.timestamp:.6f}"):
            _, depth = read_frame(record, self.settings.DEPTH_SCALE)
            return predict_masks(depth, self.settings.thresholds(), self.external_mask(record),
                                 self.settings.PIXEL_EPS, self.settings.PIXEL_MIN_PTS,
                                 self.settings.BOX_MARGIN, use_broad=(mode == "full"))

    def predict(self, mode: str) -> list[MaskSet | None]:
        """mask sets of every frame, computed by THREADS workers in frame order"""
        with ThreadPoolExecutor(max_workers=self.settings.THREADS) as pool:
            masks = list(pool.map(lambda r: self.mask_set(r, mode), self.records))
        self.logger.info("predicted %s masks for %d frames", mode, len(masks))
        return masks

    def working_masks(self, masks: list[MaskSet | None]) -> list[BinaryMask | None]:
        """final masks dilated by DILATE pixels, as used by tracking and mapping"""
        return [None if m is None else dilate(m.m_c, self.settings.DILATE) for m in masks]

    def track(self, masks: list[BinaryMask | None]) -> tuple[Trajectory, int]:
        s = self.settings
        tracker = Tracker(self.intr, s.MAX_KEYPOINTS, s.ROBUST_LOSS, s.HUBER_DELTA,
                          s.resample_config() if s.RESAMPLE else None, s.WARM_START)
        poses = []
        for record, mask in zip(self.records, masks):
            with run_context(sequence=self.name, frame=f"{record.timestamp:.6f}"):
                rgb, depth = read_frame(record, s.DEPTH_SCALE)
                frame = Frame.from_rgbd(record.timestamp, rgb, depth, mask)
                poses.append(tracker.track(frame).pose)
        trajectory = Trajectory.from_poses([r.timestamp for r in self.records], poses)
        self.logger.info("tracked %d frames, %d lost", len(poses), tracker.lost_frames)
        return trajectory, tracker.lost_frames

    def build_map(self, trajectory: Trajectory, masks: list[BinaryMask | None]
                  ) -> ColoredPointCloud:
        """stitched cloud of every frame that has a pose in `trajectory`"""
        s = self.settings
        stamps = np.array([r.timestamp for r in self.records])
        pose_of = dict(associate(stamps, trajectory.timestamps, s.ASSOC_MAX_DIFF))
        if not pose_of:
            raise DataError("no frame of the sequence has a pose in the trajectory")
        clouds = []
        for i, (record, mask) in enumerate(zip(self.records, masks)):
            if i not in pose_of:
                self.logger.debug("frame %.6f has no pose, left out of the map", record.timestamp)
                continue
            rgb, depth = read_frame(record, s.DEPTH_SCALE)
            clouds.append(frame_to_cloud(rgb, depth, mask, self.intr,
                                         trajectory.pose(pose_of[i]), s.STRIDE, s.MAX_RANGE))
        return stitch(clouds, s.VOXEL)

    def dynamic_fraction(self, cloud: ColoredPointCloud) -> float | None:
        """fraction of points in the swept volume recorded by the synthetic renderer"""
        scene = os.path.join(self.sequence_dir, "scene.json")
        if not os.path.isfile(scene) or len(cloud) == 0:
            return None
        with open(scene, "r", encoding="utf-8") as f:
            volume = json.load(f)
        inside = points_in_volume(cloud.points, np.array(volume["swept_min"]),
                                  np.array(volume["swept_max"]))
        return float(inside.mean())

    def evaluate(self, trajectory: Trajectory) -> MetricReport | None:
        if self.ground_truth is None:
            self.logger.info("no ground truth in %s, skipping evaluation", self.sequence_dir)
            return None
        try:
            return evaluate(trajectory, self.ground_truth, self.settings.RPE_DELTA,
                            self.settings.ASSOC_MAX_DIFF)
        except DataError as e:
            self.logger.warning("evaluation failed: %s", e)
            return None

    def run(self, out_dir: str, mode: str | None = None, write_masks: bool = False,
            binary_ply: bool = True) -> RunResult:
        mode = mode or self.settings.MASK_MODE
        mask_sets = self.predict(mode)
        masks = self.working_masks(mask_sets)
        if write_masks:
            for record, mask in zip(self.records, masks):
                if mask is not None:
                    write_mask(os.path.join(out_dir, "masks",
                                            os.path.basename(record.rgb_path)), mask)
        trajectory, lost = self.track(masks)
        cloud = self.build_map(trajectory, masks)
        write_trajectory(os.path.join(out_dir, "trajectory.txt"), trajectory)
        export_ply(cloud, os.path.join(out_dir, "map.ply"), binary_ply)
        result = RunResult(mode, trajectory, cloud, self.evaluate(trajectory), lost,
                           self.dynamic_fraction(cloud))
        write_json(os.path.join(out_dir, "report.json"), result.summary())
        return result

    def ablation(self, out_dir: str) -> dict:
        """run with the configured masks and with masking off; report both and the improvement"""
        masked = self.run(os.path.join(out_dir, "masked"))
        unmasked = self.run(os.path.join(out_dir, "unmasked"), mode="off")
        out = {"masked": masked.summary(), "unmasked": unmasked.summary()}
        if masked.report is not None and unmasked.report is not None:
            out["improvement_percent"] = improvement(unmasked.report, masked.report)
        write_json(os.path.join(out_dir, "ablation.json"), out)
        return out
