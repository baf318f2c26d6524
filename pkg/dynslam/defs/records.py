"""Frame, pixel-set and keypoint records."""
import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, field_validator

DepthImage = npt.NDArray[np.float32]
"""H x W metric depth in meters, 0 = invalid"""
RgbImage = npt.NDArray[np.uint8]
"""H x W x 3, RGB channel order"""
GrayImage = npt.NDArray[np.uint8]
BinaryMask = npt.NDArray[np.uint8]
"""H x W, 1 = dynamic / remove, 0 = static / keep"""

KEYPOINT_FIELDS = ("x", "y", "d", "theta", "sigma", "lambda")
KP_X, KP_Y, KP_D, KP_THETA, KP_SIGMA, KP_LEVEL = range(6)


class FrameRecord(BaseModel):
    """one associated RGB/depth pair of a sequence"""
    model_config = ConfigDict(frozen=True)

    timestamp: float
    rgb_path: str
    depth_path: str
    depth_timestamp: float | None = None

    @field_validator('timestamp')
    def check_timestamp(cls, value):
        if not math.isfinite(value) or value < 0:
            raise ValueError('timestamp must be finite and non-negative')
        return value

    @field_validator('rgb_path', 'depth_path')
    def check_path(cls, value, info):
        if not value:
            raise ValueError(f'{info.field_name} must not be empty')
        return value


@dataclass
class DynamicPixelSet:
    """candidate dynamic pixels (row, col) with their depths in meters"""
    pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.intp))
    depths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float64))

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.intp).reshape(-1, 2)
        self.depths = np.asarray(self.depths, dtype=np.float64).reshape(-1)
        if len(self.pixels) != len(self.depths):
            raise ValueError("pixels and depths differ in length")
        if np.any(self.depths <= 0):
            raise ValueError("dynamic pixels must carry positive depth")

    def __len__(self) -> int:
        return len(self.pixels)


def as_keypoints(values: npt.ArrayLike) -> np.ndarray:
    """(N, 6) float64 keypoint array, validated

    >>> as_keypoints([[10, 20, 7, 45.0, 0.5, 0]]).shape
    (1, 6)
    """
    kps = np.asarray(values, dtype=np.float64).reshape(-1, len(KEYPOINT_FIELDS))
    if np.any(kps[:, KP_D] <= 0):
        raise ValueError("keypoint diameter must be positive")
    if np.any(kps[:, KP_LEVEL] < 0):
        raise ValueError("keypoint pyramid level must not be negative")
    return kps
