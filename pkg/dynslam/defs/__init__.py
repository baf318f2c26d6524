from .errors import ConfigError, DataError, DegenerateError, DynSlamError
from .geometry import Se3Pose, Trajectory
from .params import CameraIntrinsics, ResampleConfig, VarianceThresholds
from .records import (KEYPOINT_FIELDS, BinaryMask, DepthImage, DynamicPixelSet, FrameRecord,
                      GrayImage, RgbImage, as_keypoints)
