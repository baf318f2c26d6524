"""Trajectory metrics: SE(3) Umeyama alignment, ATE and RPE."""
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .defs.errors import DataError, DegenerateError
from .defs.geometry import Se3Pose, Trajectory, quaternion_angle
from .ingest import DEFAULT_MAX_DIFF, associate
from .utils import get_logger

logger = get_logger(__name__)

DEFAULT_RPE_DELTA = 1.0


class MetricReport(BaseModel):
    """ATE RMSE in m, RPE translation RMSE in m/s and rotation RMSE in deg/s"""
    model_config = ConfigDict(frozen=True)

    ate_rmse: float
    rpe_trans_rmse: float
    rpe_rot_rmse: float
    pairs_used: int
    rpe_pairs: int = 0

    @field_validator('ate_rmse', 'rpe_trans_rmse', 'rpe_rot_rmse', 'pairs_used', 'rpe_pairs')
    def check_non_negative(cls, value, info):
        if value < 0:
            raise ValueError(f'{info.field_name} must not be negative')
        return value

    def table(self) -> str:
        rows = [("ATE RMSE (m)", f"{self.ate_rmse:.6f}"),
                ("RPE translation RMSE (m/s)", f"{self.rpe_trans_rmse:.6f}"),
                ("RPE rotation RMSE (deg/s)", f"{self.rpe_rot_rmse:.6f}"),
                ("associated poses", str(self.pairs_used)),
                ("RPE pairs", str(self.rpe_pairs))]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>12}" for name, value in rows)


def associate_trajectories(est: Trajectory, gt: Trajectory, max_diff: float = DEFAULT_MAX_DIFF
                           ) -> tuple[np.ndarray, np.ndarray]:
    """index arrays of est/gt poses paired by nearest timestamp

    Raises:
        DataError: no pose pairs within `max_diff`
    """
    if len(est) == 0 or len(gt) == 0:
        raise DataError("cannot associate an empty trajectory")
    pairs = associate(est.timestamps, gt.timestamps, max_diff)
    if not pairs:
        raise DataError(f"no estimated and ground-truth poses within {max_diff} s of each other")
    idx = np.array(pairs, dtype=np.intp)
    return idx[:, 0], idx[:, 1]


def umeyama_se3(est_positions: np.ndarray, gt_positions: np.ndarray) -> Se3Pose:
    """rigid transform (scale 1) minimizing sum ||gt - (R est + t)||²

    Raises:
        DegenerateError: fewer than 3 points or collinear points
    """
    src = np.asarray(est_positions, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(gt_positions, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise ValueError("position lists differ in length")
    if len(src) < 3:
        raise DegenerateError(f"degenerate geometry: {len(src)} points, need 3")
    mu_src, mu_dst = src.mean(axis=0), dst.mean(axis=0)
    src_c, dst_c = src - mu_src, dst - mu_dst
    scale = max(np.abs(src_c).max(), np.abs(dst_c).max(), 1e-300)
    for centered in (src_c, dst_c):
        singular = np.linalg.svd(centered, compute_uv=False)
        if singular[1] <= 1e-9 * scale * np.sqrt(len(src)):
            raise DegenerateError("degenerate geometry: positions are collinear")
    covariance = dst_c.T @ src_c / len(src)
    u, _, vt = np.linalg.svd(covariance)
    correction = np.eye(3)
    correction[2, 2] = np.sign(np.linalg.det(u @ vt)) or 1.0
    rotation = u @ correction @ vt
    return Se3Pose.from_rt(rotation, mu_dst - rotation @ mu_src)


def ate_errors(est: Trajectory, gt: Trajectory, max_diff: float = DEFAULT_MAX_DIFF
               ) -> tuple[np.ndarray, np.ndarray]:
    """timestamps and position errors of the associated poses after alignment"""
    ei, gi = associate_trajectories(est, gt, max_diff)
    est_pos, gt_pos = est.positions[ei], gt.positions[gi]
    alignment = umeyama_se3(est_pos, gt_pos)
    errors = np.linalg.norm(alignment.apply(est_pos) - gt_pos, axis=1)
    return est.timestamps[ei], errors


def ate_rmse(est: Trajectory, gt: Trajectory, max_diff: float = DEFAULT_MAX_DIFF) -> float:
    _, errors = ate_errors(est, gt, max_diff)
    return float(np.sqrt(np.mean(errors ** 2)))


def rpe_errors(est: Trajectory, gt: Trajectory, delta: float = DEFAULT_RPE_DELTA,
               max_diff: float = DEFAULT_MAX_DIFF
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """per-interval relative pose errors over pose pairs `delta` seconds apart

    Returns:
        start timestamps, translation errors in m/s and rotation errors in deg/s

    Raises:
        DataError: no pose pair is `delta` seconds apart
    """
    if not delta > 0:
        raise ValueError(f"RPE interval must be positive, got {delta}")
    ei, gi = associate_trajectories(est, gt, max_diff)
    stamps = est.timestamps[ei]
    targets = stamps + delta
    # nearest of the two neighbours around each target time
    pos = np.searchsorted(stamps, targets)
    lo, hi = np.clip(pos - 1, 0, len(stamps) - 1), np.clip(pos, 0, len(stamps) - 1)
    j = np.where(np.abs(stamps[lo] - targets) <= np.abs(stamps[hi] - targets), lo, hi)
    starts, trans, rot = [], [], []
    for i in range(len(stamps)):
        k = j[i]
        if k <= i or abs(stamps[k] - targets[i]) > max_diff:
            continue
        est_rel = est.pose(ei[i]).inverse() @ est.pose(ei[k])
        gt_rel = gt.pose(gi[i]).inverse() @ gt.pose(gi[k])
        error = gt_rel.inverse() @ est_rel
        starts.append(stamps[i])
        trans.append(np.linalg.norm(error.translation) / delta)
        rot.append(np.degrees(float(quaternion_angle(error.quaternion))) / delta)
    if not starts:
        raise DataError(f"no pose pairs {delta} s apart for RPE")
    return np.array(starts), np.array(trans), np.array(rot)


def rpe(est: Trajectory, gt: Trajectory, delta: float = DEFAULT_RPE_DELTA,
        max_diff: float = DEFAULT_MAX_DIFF) -> tuple[float, float]:
    """(translation RMSE in m/s, rotation RMSE in deg/s)"""
    _, trans, rot = rpe_errors(est, gt, delta, max_diff)
    return float(np.sqrt(np.mean(trans ** 2))), float(np.sqrt(np.mean(rot ** 2)))


def evaluate(est: Trajectory, gt: Trajectory, delta: float = DEFAULT_RPE_DELTA,
             max_diff: float = DEFAULT_MAX_DIFF) -> MetricReport:
    ts, ate = ate_errors(est, gt, max_diff)
    _, trans, rot = rpe_errors(est, gt, delta, max_diff)
    report = MetricReport(ate_rmse=float(np.sqrt(np.mean(ate ** 2))),
                          rpe_trans_rmse=float(np.sqrt(np.mean(trans ** 2))),
                          rpe_rot_rmse=float(np.sqrt(np.mean(rot ** 2))),
                          pairs_used=len(ts), rpe_pairs=len(trans))
    logger.info("ATE %.6f m, RPE %.6f m/s %.6f deg/s over %d poses", report.ate_rmse,
                report.rpe_trans_rmse, report.rpe_rot_rmse, report.pairs_used)
    return report


def improvement(baseline: MetricReport, candidate: MetricReport) -> dict[str, float]:
    """relative improvement in percent, (baseline - candidate) / baseline * 100, per metric

    A zero baseline metric reports 0.

    >>> a = MetricReport(ate_rmse=2.0, rpe_trans_rmse=0.1, rpe_rot_rmse=0.0, pairs_used=5)
    >>> b = MetricReport(ate_rmse=0.5, rpe_trans_rmse=0.1, rpe_rot_rmse=0.0, pairs_used=5)
    >>> improvement(a, b)
    {'ate_rmse': 75.0, 'rpe_trans_rmse': 0.0, 'rpe_rot_rmse': 0.0}
    """
    out = {}
    for name in ("ate_rmse", "rpe_trans_rmse", "rpe_rot_rmse"):
        base, cand = getattr(baseline, name), getattr(candidate, name)
        out[name] = 0.0 if base == 0 else (base - cand) / base * 100.0
    return out
