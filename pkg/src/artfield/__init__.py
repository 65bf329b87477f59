"""Articulated Gaussian motion fields for part-level articulation recovery."""

from .geom import (Camera, JointParams, Primitive, RigidMotion, apply_motion, backproject,
                   compose_joint, decompose_joint, project, quat_to_rotmat)
from .motionfield import (MotionBasis, MotionField, detect_prismatic, hard_assign, init_weights,
                          soft_blend, softmax)

__version__ = "0.1.0"
