"""Joint and geometry error metrics."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import DegenerateJointError
from .geom import PRISMATIC, REVOLUTE, JointParams, RigidMotion, decompose_joint

logger = logging.getLogger(__name__)


def metric_axis_angle(est: JointParams, gt: JointParams) -> float:
    """Angle between the two axis directions in degrees, ignoring sign."""
    c = abs(float(np.dot(est.axis_dir, gt.axis_dir)))
    return math.degrees(math.acos(min(c, 1.0)))


def metric_axis_pos(est: JointParams, gt: JointParams) -> float | None:
    """Distance between the two axis lines in meters; ``None`` when either joint is prismatic."""
    if est.kind != REVOLUTE or gt.kind != REVOLUTE:
        return None
    a, b = est.axis_dir, gt.axis_dir
    oa = np.zeros(3) if est.axis_origin is None else est.axis_origin
    ob = np.zeros(3) if gt.axis_origin is None else gt.axis_origin
    w = ob - oa
    n = np.cross(a, b)
    nn = float(np.linalg.norm(n))
    if nn < 1e-8:
        return float(np.linalg.norm(w - np.dot(w, a) * a))
    return abs(float(np.dot(w, n))) / nn


def metric_part_motion(est: JointParams, gt: JointParams) -> float | None:
    """Magnitude error in degrees (revolute) or meters (prismatic); ``None`` flags a type error."""
    if est.kind != gt.kind:
        return None
    d = abs(est.magnitude - gt.magnitude)
    return math.degrees(d) if gt.kind == REVOLUTE else d


def chamfer(A: np.ndarray, B: np.ndarray, root: bool = False) -> float:
    """Symmetric Chamfer distance, reported x1000.

    Sum of the two directional means of squared nearest-neighbor distances
    (``root=True`` uses plain distances instead). Empty input gives ``inf``.
    """
    A = np.asarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 3)
    if len(A) == 0 or len(B) == 0:
        logger.warning("chamfer on an empty point set")
        return math.inf
    dab, _ = cKDTree(B).query(A)
    dba, _ = cKDTree(A).query(B)
    if root:
        return 1000.0 * float(dab.mean() + dba.mean())
    return 1000.0 * float(np.mean(dab ** 2) + np.mean(dba ** 2))


def estimated_joint(motion: RigidMotion, locked: bool) -> JointParams | None:
    """Joint of one motion basis; locked bases are read as prismatic."""
    try:
        return decompose_joint(motion, PRISMATIC if locked else REVOLUTE)
    except DegenerateJointError:
        return None


def match_parts(est_labels: np.ndarray, gt_labels: np.ndarray, n_est: int, n_gt: int) -> dict:
    """Hungarian matching of GT parts to estimated parts on the label contingency table."""
    C = np.zeros((n_gt, n_est))
    np.add.at(C, (gt_labels, est_labels), 1)
    r, c = linear_sum_assignment(C, maximize=True)
    return {int(i): int(j) for i, j in zip(r, c) if C[i, j] > 0}
