"""
dynslam: dynamic-object handling for RGB-D visual odometry and mapping.

Depth-variance dynamic masks, autoencoder-guided genetic keypoint resampling, masked
pose estimation, trajectory evaluation and dynamic-free point-cloud maps.

Usage:
    python -m dynslam {mask,hist,resample,track,eval,map,pipeline,synth} [options]
"""

from .config import config
from .utils import get_logger

__version__ = "0.1.0"

logger = get_logger(__package__ or __name__ or "dynslam")
