"""Sparse frame-to-frame tracking.

Corners detected in the previous frame are tracked into the current one with pyramidal
Lucas-Kanade flow, back-projected with the previous depth, filtered by the dynamic masks
and fed to a Levenberg-Marquardt PnP refinement of T_cur_prev.
"""
from dataclasses import dataclass, field

import cv2
import numpy as np

from .defs.errors import DegenerateError
from .defs.geometry import Se3Pose, skew
from .defs.params import CameraIntrinsics, ResampleConfig
from .defs.records import (KEYPOINT_FIELDS, KP_LEVEL, KP_SIGMA, KP_X, KP_Y, BinaryMask,
                           DepthImage, GrayImage, RgbImage)
from .resampler import Autoencoder, plan_resampling
from .utils import get_logger

logger = get_logger(__name__)

PYRAMID_LEVELS = 2
BASE_DIAMETER = 7
MIN_CORRESPONDENCES = 4
INLIER_PX = 2.0
LK_PARAMS = dict(winSize=(21, 21), maxLevel=2,
                 criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 30, 0.01))


def to_gray(image: np.ndarray) -> GrayImage:
    if image.ndim == 2:
        return np.ascontiguousarray(image, dtype=np.uint8)
    return cv2.cvtColor(np.ascontiguousarray(image, dtype=np.uint8), cv2.COLOR_RGB2GRAY)


def _orientation(image: np.ndarray, x: float, y: float, radius: int) -> float:
    """intensity-centroid direction in degrees [0, 360), -1 when the patch has no centroid offset"""
    h, w = image.shape
    xi, yi = int(round(x)), int(round(y))
    y0, y1 = max(yi - radius, 0), min(yi + radius + 1, h)
    x0, x1 = max(xi - radius, 0), min(xi + radius + 1, w)
    patch = image[y0:y1, x0:x1].astype(np.float64)
    dy, dx = np.mgrid[y0 - yi:y1 - yi, x0 - xi:x1 - xi]
    m10, m01 = float(np.sum(dx * patch)), float(np.sum(dy * patch))
    if m10 == 0 and m01 == 0:
        return -1.0
    return float(np.degrees(np.arctan2(m01, m10)) % 360.0)


def detect_keypoints(gray: np.ndarray, max_count: int = 500,
                     levels: int = PYRAMID_LEVELS) -> np.ndarray:
    """Shi-Tomasi corners over an image pyramid as (N, 6) keypoints, strongest first

    Coordinates are level-0 pixels; a coarser-level corner closer than its diameter to an
    accepted finer one is dropped.
    """
    gray = to_gray(gray)
    h, w = gray.shape
    if h < 16 or w < 16:
        raise ValueError(f"image {h}x{w} is smaller than 16x16")
    found = []
    image = gray
    for level in range(levels):
        if level:
            image = cv2.pyrDown(image)
        corners = cv2.goodFeaturesToTrack(image, maxCorners=max_count, qualityLevel=0.01,
                                          minDistance=BASE_DIAMETER, blockSize=3)
        if corners is None or len(corners) == 0:
            continue
        response = cv2.cornerMinEigenVal(image, blockSize=3)
        scale = 2.0 ** level
        diameter = BASE_DIAMETER * scale
        for cx, cy in corners.reshape(-1, 2):
            x = min(cx * scale, w - 1.0)
            y = min(cy * scale, h - 1.0)
            if any(np.hypot(x - k[KP_X], y - k[KP_Y]) < diameter
                   for k in found if k[KP_LEVEL] < level):
                continue
            sigma = float(response[int(round(cy)), int(round(cx))])
            theta = _orientation(image, cx, cy, BASE_DIAMETER)
            found.append((x, y, diameter, theta, sigma, float(level)))
    if not found:
        return np.zeros((0, len(KEYPOINT_FIELDS)))
    kps = np.array(found, dtype=np.float64)
    order = np.lexsort((kps[:, KP_X], kps[:, KP_Y], -kps[:, KP_SIGMA]))
    return kps[order][:max_count]


def track_flow(prev: np.ndarray, cur: np.ndarray, points: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """pyramidal Lucas-Kanade tracks of (x, y) points

    Returns:
        tracked (N, 2) positions and a boolean status; tracks that diverge or leave the
        image are False
    """
    prev, cur = to_gray(prev), to_gray(cur)
    if prev.shape != cur.shape:
        raise ValueError("frames differ in size")
    points = np.asarray(points, dtype=np.float32).reshape(-1, 2)
    if len(points) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    tracked, status, _ = cv2.calcOpticalFlowPyrLK(prev, cur, points.reshape(-1, 1, 2), None,
                                                  **LK_PARAMS)
    tracked = tracked.reshape(-1, 2).astype(np.float64)
    h, w = prev.shape
    ok = status.reshape(-1).astype(bool) & np.all(np.isfinite(tracked), axis=1)
    ok &= (tracked[:, 0] >= 0) & (tracked[:, 0] <= w - 1)
    ok &= (tracked[:, 1] >= 0) & (tracked[:, 1] <= h - 1)
    return tracked, ok


def backproject(pixels: np.ndarray, depths: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """camera-frame points of (x, y) pixels at metric depth

    >>> intr = CameraIntrinsics(fx=100, fy=100, cx=50, cy=40)
    >>> backproject(np.array([[150.0, 40.0]]), np.array([1.0]), intr).tolist()
    [[1.0, 0.0, 1.0]]
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    z = np.asarray(depths, dtype=np.float64).reshape(-1)
    if np.any(z <= 0):
        raise ValueError("back-projection needs positive depth")
    return np.stack([(pixels[:, 0] - intr.cx) * z / intr.fx,
                     (pixels[:, 1] - intr.cy) * z / intr.fy, z], axis=1)


def project(points: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    return np.stack([intr.fx * points[:, 0] / z + intr.cx,
                     intr.fy * points[:, 1] / z + intr.cy], axis=1)


def reprojection_jacobian(pose: Se3Pose, points: np.ndarray, intr: CameraIntrinsics
                          ) -> np.ndarray:
    """(N, 2, 6) derivative of pi(exp(delta) pose P) at delta = 0, delta = (rho, phi)"""
    q = pose.apply(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    x, y, z = q[:, 0], q[:, 1], q[:, 2]
    j_pi = np.zeros((len(q), 2, 3))
    j_pi[:, 0, 0] = intr.fx / z
    j_pi[:, 0, 2] = -intr.fx * x / (z * z)
    j_pi[:, 1, 1] = intr.fy / z
    j_pi[:, 1, 2] = -intr.fy * y / (z * z)
    j_point = np.concatenate([np.broadcast_to(np.eye(3), (len(q), 3, 3)), -skew(q)], axis=2)
    return j_pi @ j_point


@dataclass
class PoseEstimate:
    pose: Se3Pose
    inliers: int
    converged: bool
    costs: list[float] = field(default_factory=list)


def _robust(errors: np.ndarray, robust: bool, delta: float) -> tuple[float, np.ndarray]:
    """cost and IRLS weights for per-correspondence reprojection error norms"""
    if not robust:
        return float(np.sum(errors * errors)), np.ones_like(errors)
    small = errors <= delta
    cost = np.where(small, errors * errors, 2.0 * delta * errors - delta * delta)
    weights = np.where(small, 1.0, delta / np.maximum(errors, 1e-300))
    return float(np.sum(cost)), weights


def estimate_pose(pixels: np.ndarray, points: np.ndarray, intr: CameraIntrinsics,
                  init: Se3Pose | None = None, selected: np.ndarray | None = None,
                  robust: bool = True, huber_delta: float = 2.0,
                  max_iterations: int = 20, min_step: float = 1e-8) -> PoseEstimate:
    """Levenberg-Marquardt refinement of the pose mapping `points` onto `pixels`

    Only selected correspondences with positive depth enter the residual. The returned
    costs are the accepted iterates' costs, non-increasing.

    Raises:
        DegenerateError: fewer than 4 usable correspondences
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pixels) != len(points):
        raise ValueError("pixels and points differ in length")
    use = np.ones(len(points), dtype=bool) if selected is None else np.asarray(selected, bool)
    use = use & (points[:, 2] > 0)
    if use.sum() < MIN_CORRESPONDENCES:
        raise DegenerateError(f"degenerate: {int(use.sum())} selected correspondences, "
                              f"need {MIN_CORRESPONDENCES}")
    p, P = pixels[use], points[use]

    def evaluate(pose: Se3Pose) -> tuple[np.ndarray, float, np.ndarray]:
        residual = p - project(pose.apply(P), intr)
        cost, weights = _robust(np.linalg.norm(residual, axis=1), robust, huber_delta)
        return residual, cost, weights

    pose = init or Se3Pose.identity()
    residual, cost, weights = evaluate(pose)
    costs, damping, converged = [cost], 1e-3, False
    for _ in range(max_iterations):
        jac = -reprojection_jacobian(pose, P, intr)
        hessian = np.einsum("n,nij,nik->jk", weights, jac, jac)
        gradient = np.einsum("n,nij,ni->j", weights, jac, residual)
        system = hessian + damping * np.diag(np.diag(hessian))
        try:
            step = -np.linalg.solve(system, gradient)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(system, gradient, rcond=None)[0]
        if np.linalg.norm(step) < min_step:
            converged = True
            break
        candidate = pose.perturb(step)
        cand_residual, cand_cost, cand_weights = evaluate(candidate)
        if cand_cost < cost:
            pose, residual, cost, weights = candidate, cand_residual, cand_cost, cand_weights
            costs.append(cost)
            damping = max(damping / 10.0, 1e-12)
        else:
            damping *= 10.0
    inliers = int(np.count_nonzero(np.linalg.norm(residual, axis=1) < INLIER_PX))
    if not converged:
        logger.debug("pose refinement stopped after %d iterations, cost %.6g",
                     max_iterations, cost)
    return PoseEstimate(pose, inliers, converged, costs)


@dataclass
class Frame:
    """one RGB-D frame prepared for tracking; `mask` marks dynamic pixels with 1"""
    timestamp: float
    gray: GrayImage
    depth: DepthImage
    mask: BinaryMask | None = None
    rgb: RgbImage | None = None

    @classmethod
    def from_rgbd(cls, timestamp: float, rgb: RgbImage, depth: DepthImage,
                  mask: BinaryMask | None = None) -> "Frame":
        return cls(timestamp, to_gray(rgb), depth, mask, rgb)


@dataclass
class FrameMotion:
    relative: Se3Pose
    lost: bool
    used: int
    estimate: PoseEstimate | None = None
    model: Autoencoder | None = None


def _lookup(image: np.ndarray | None, xy: np.ndarray) -> np.ndarray:
    """values of `image` at rounded (x, y) positions; zeros where there is no image"""
    if image is None:
        return np.zeros(len(xy))
    h, w = image.shape[:2]
    cols = np.clip(np.rint(xy[:, 0]).astype(np.intp), 0, w - 1)
    rows = np.clip(np.rint(xy[:, 1]).astype(np.intp), 0, h - 1)
    return np.asarray(image)[rows, cols]


def track_frame(prev: Frame, cur: Frame, intr: CameraIntrinsics, init: Se3Pose | None = None,
                max_keypoints: int = 500, robust: bool = True, huber_delta: float = 2.0,
                resample: ResampleConfig | None = None,
                warm_start: Autoencoder | None = None) -> FrameMotion:
    """T_cur_prev from one frame pair; too few usable correspondences mark the frame lost"""
    init = init or Se3Pose.identity()
    kps = detect_keypoints(prev.gray, max_keypoints)
    if prev.mask is not None and len(kps):
        kps = kps[_lookup(prev.mask, kps[:, :2]) == 0]
    tracked, status = track_flow(prev.gray, cur.gray, kps[:, :2])
    depths = _lookup(prev.depth, kps[:, :2]).astype(np.float64)
    selected = status & (depths > 0)
    if cur.mask is not None and len(kps):
        selected &= _lookup(cur.mask, tracked) == 0

    model = warm_start
    if resample is not None and len(kps):
        plan = plan_resampling(kps, resample, warm_start)
        selected &= plan.keep
        model = plan.model or warm_start

    used = int(selected.sum())
    if used < MIN_CORRESPONDENCES:
        return FrameMotion(init, True, used, None, model)
    points = np.zeros((len(kps), 3))
    points[selected] = backproject(kps[selected, :2], depths[selected], intr)
    try:
        estimate = estimate_pose(tracked, points, intr, init, selected, robust, huber_delta)
    except DegenerateError:
        return FrameMotion(init, True, used, None, model)
    return FrameMotion(estimate.pose, False, used, estimate, model)


@dataclass
class TrackResult:
    relative: Se3Pose
    """T_cur_prev"""
    pose: Se3Pose
    """T_world_cur"""
    lost: bool
    used: int


class Tracker:
    """sequential visual odometry with a constant-velocity motion model

    The first frame defines the world frame. A lost frame repeats the previous motion.
    """

    def __init__(self, intr: CameraIntrinsics, max_keypoints: int = 500, robust: bool = True,
                 huber_delta: float = 2.0, resample: ResampleConfig | None = None,
                 warm_start: bool = False):
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")
        self.intr = intr
        self.max_keypoints = max_keypoints
        self.robust = robust
        self.huber_delta = huber_delta
        self.resample = resample
        self.warm_start = warm_start
        self.prev: Frame | None = None
        self.pose = Se3Pose.identity()
        self.velocity = Se3Pose.identity()
        self.model: Autoencoder | None = None
        self.lost_frames = 0

    def track(self, frame: Frame) -> TrackResult:
        if self.prev is None:
            self.prev = frame
            return TrackResult(Se3Pose.identity(), self.pose, False, 0)
        motion = track_frame(self.prev, frame, self.intr, self.velocity, self.max_keypoints,
                             self.robust, self.huber_delta, self.resample,
                             self.model if self.warm_start else None)
        if self.warm_start:
            self.model = motion.model
        if motion.lost:
            self.lost_frames += 1
            self.logger.warning("frame %.6f lost (%d usable correspondences), "
                                "keeping constant velocity", frame.timestamp, motion.used)
        else:
            self.logger.debug("frame %.6f: %d correspondences, %d inliers", frame.timestamp,
                              motion.used, motion.estimate.inliers)
        self.velocity = motion.relative
        self.pose = self.pose @ motion.relative.inverse()
        self.prev = frame
        return TrackResult(motion.relative, self.pose, motion.lost, motion.used)
