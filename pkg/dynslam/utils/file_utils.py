"""Artifact file I/O: images, masks, TUM index and trajectory files, intrinsics, keypoint CSV"""
import json
import os
from typing import Any

import cv2
import numpy as np

from ..defs.errors import DataError
from ..defs.geometry import Trajectory
from ..defs.params import CameraIntrinsics
from ..defs.records import KEYPOINT_FIELDS, as_keypoints
from . import get_logger

logger = get_logger(__name__)


def ensure_parent(path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return path


def read_text_rows(path: str, min_fields: int) -> tuple[list[list[str]], int]:
    """split the non-comment lines of a TUM-style text file into fields

    Returns:
        rows with at least `min_fields` fields whose first field parses as a float,
        and the count of malformed lines that were skipped
    """
    if not os.path.isfile(path):
        raise DataError(f"{path} does not exist")
    rows, malformed = [], 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.replace(",", " ").split()
            try:
                float(fields[0])
            except ValueError:
                malformed += 1
                continue
            if len(fields) < min_fields:
                malformed += 1
                continue
            rows.append(fields)
    if malformed:
        logger.warning("%s: skipped %d malformed lines", path, malformed)
    return rows, malformed


def read_trajectory(path: str) -> Trajectory:
    """read a TUM trajectory file "timestamp tx ty tz qx qy qz qw"

    Lines are sorted by timestamp, repeated timestamps keep their first pose and
    quaternions are normalized.
    """
    rows, _ = read_text_rows(path, 8)
    values = []
    for fields in rows:
        try:
            row = [float(v) for v in fields[:8]]
        except ValueError:
            logger.warning("%s: skipping non-numeric pose line %s", path, " ".join(fields))
            continue
        if not all(np.isfinite(row)) or np.linalg.norm(row[4:8]) == 0:
            logger.warning("%s: skipping invalid pose at %s", path, fields[0])
            continue
        values.append(row)
    if not values:
        raise DataError(f"{path} holds no poses")
    data = np.array(values)
    data = data[np.argsort(data[:, 0], kind="stable")]
    keep = np.concatenate(([True], np.diff(data[:, 0]) > 0))
    if not np.all(keep):
        logger.warning("%s: dropped %d poses with repeated timestamps", path,
                       int(np.count_nonzero(~keep)))
    data = data[keep]
    return Trajectory(data[:, 0], data[:, 1:4], data[:, 4:8])


def write_trajectory(path: str, trajectory: Trajectory) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, t, q in zip(trajectory.timestamps, trajectory.translations,
                            trajectory.quaternions):
            f.write(f"{ts:.6f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
                    f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}\n")


def read_intrinsics(path: str) -> CameraIntrinsics:
    """read "fx fy cx cy" from the first non-comment line"""
    rows, _ = read_text_rows(path, 4)
    if not rows:
        raise DataError(f"{path} holds no 'fx fy cx cy' line")
    try:
        fx, fy, cx, cy = (float(v) for v in rows[0][:4])
        return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
    except ValueError as e:
        raise DataError(f"{path}: invalid intrinsics: {e}") from e


def write_intrinsics(path: str, intr: CameraIntrinsics) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# fx fy cx cy\n")
        f.write(f"{intr.fx:.6f} {intr.fy:.6f} {intr.cx:.6f} {intr.cy:.6f}\n")


def read_image(path: str, flags: int = cv2.IMREAD_UNCHANGED) -> np.ndarray:
    image = cv2.imread(path, flags)
    if image is None:
        raise DataError(f"cannot read image {path}")
    return image


def read_rgb(path: str) -> np.ndarray:
    """8-bit color image in RGB channel order"""
    return cv2.cvtColor(read_image(path, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)


def write_rgb(path: str, rgb: np.ndarray) -> None:
    ensure_parent(path)
    if not cv2.imwrite(path, cv2.cvtColor(np.ascontiguousarray(rgb), cv2.COLOR_RGB2BGR)):
        raise OSError(f"cannot write image {path}")


def read_depth_raw(path: str) -> np.ndarray:
    """16-bit single-channel depth as stored on disk"""
    raw = read_image(path, cv2.IMREAD_ANYDEPTH)
    if raw.ndim != 2:
        raise DataError(f"{path} is not a single-channel depth image")
    return raw


def write_depth(path: str, depth_m: np.ndarray, depth_scale: float) -> None:
    ensure_parent(path)
    raw = np.clip(np.rint(np.asarray(depth_m, dtype=np.float64) * depth_scale), 0, 65535)
    if not cv2.imwrite(path, raw.astype(np.uint16)):
        raise OSError(f"cannot write depth {path}")


def read_mask(path: str) -> np.ndarray:
    """8-bit mask image to {0,1}; values above 127 are dynamic"""
    image = read_image(path, cv2.IMREAD_GRAYSCALE)
    return (image > 127).astype(np.uint8)


def write_mask(path: str, mask: np.ndarray) -> None:
    """store a {0,1} mask as 8-bit 255 = dynamic, 0 = keep"""
    ensure_parent(path)
    if not cv2.imwrite(path, (np.asarray(mask) > 0).astype(np.uint8) * 255):
        raise OSError(f"cannot write mask {path}")


def read_keypoints_csv(path: str) -> np.ndarray:
    """keypoint CSV with columns x,y,d,theta,sigma,lambda; a header line is optional"""
    if not os.path.isfile(path):
        raise DataError(f"{path} does not exist")
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2,
                          skiprows=_header_rows(path))
    except ValueError as e:
        raise DataError(f"{path}: malformed keypoint CSV: {e}") from e
    if data.size == 0:
        return np.zeros((0, len(KEYPOINT_FIELDS)))
    if data.shape[1] != len(KEYPOINT_FIELDS):
        raise DataError(f"{path}: expected {len(KEYPOINT_FIELDS)} columns, got {data.shape[1]}")
    try:
        return as_keypoints(data)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def _header_rows(path: str) -> int:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    return 1 if first and not first.startswith("#") and first[0].isalpha() else 0


def write_keypoints_csv(path: str, keypoints: np.ndarray) -> None:
    ensure_parent(path)
    np.savetxt(path, np.asarray(keypoints).reshape(-1, len(KEYPOINT_FIELDS)), delimiter=",",
               header=",".join(KEYPOINT_FIELDS), comments="", fmt="%.6f")


def write_json(path: str, obj: Any) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        if isinstance(obj, str):
            f.write(obj)
        else:
            json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
