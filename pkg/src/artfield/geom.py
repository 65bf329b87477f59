"""Camera model, rigid-motion algebra, primitive transforms and joint decomposition.

Quaternions are stored scalar-first, ``(w, x, y, z)``. Cameras use a
world-to-camera extrinsic matrix and pixel coordinates ``(u, v)`` with the
center of pixel ``(row i, col j)`` at ``u = j, v = i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateJointError, InvalidInputError

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

# Default revolute/prismatic split when no hint is given.
PRISMATIC_THRESHOLD_DEG = 0.5


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n == 0.0:
        raise InvalidInputError(f"quaternion has zero or non-finite norm: {q}")
    return q / n


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a quaternion (renormalized internally)."""
    w, x, y, z = _as_quat(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quats_to_rotmats(qs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`quat_to_rotmat` for an ``(N, 4)`` array."""
    qs = np.asarray(qs, dtype=np.float64)
    n = np.linalg.norm(qs, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise InvalidInputError("zero-norm quaternion")
    w, x, y, z = np.moveaxis(qs / n, -1, 0)
    R = np.empty(qs.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_quat_jacobian(q) -> np.ndarray:
    """``dR/dq`` as a ``(4, 3, 3)`` array, including the normalization of ``q``."""
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    w, x, y, z = q / n
    dw = 2 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    dx = 2 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dy = 2 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]])
    dz = 2 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]])
    d_unit = np.stack([dw, dx, dy, dz])
    qh = q / n
    proj = (np.eye(4) - np.outer(qh, qh)) / n
    return np.einsum("lab,lk->kab", d_unit, proj)


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = np.asarray(a, dtype=np.float64)
    bw, bx, by, bz = np.asarray(b, dtype=np.float64)
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise InvalidInputError("zero rotation axis")
    h = 0.5 * angle
    return np.concatenate([[math.cos(h)], math.sin(h) * axis / n])


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    """Quaternion (w >= 0) of a rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quat_angle(q) -> float:
    """Rotation angle of ``q`` in radians, in ``[0, pi]``."""
    q = _as_quat(q)
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), abs(float(q[0])))


@dataclass(frozen=True)
class RigidMotion:
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", _as_quat(self.q))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> RigidMotion:
        return cls()

    @classmethod
    def from_matrix(cls, R: np.ndarray, t) -> RigidMotion:
        return cls(rotmat_to_quat(R), t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_rotmat(self.q)

    @property
    def angle(self) -> float:
        return quat_angle(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def inverse(self) -> RigidMotion:
        qi = quat_conj(self.q)
        return RigidMotion(qi, -(quat_to_rotmat(qi) @ self.t))

    def compose(self, other: RigidMotion) -> RigidMotion:
        """``self ∘ other``: apply ``other`` first."""
        return RigidMotion(quat_mul(self.q, other.q), self.R @ other.t + self.t)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T


@dataclass(frozen=True)
class Primitive:
    """One Gaussian: center, orientation, per-axis scale, opacity, color, part logits."""

    center: np.ndarray
    rot: np.ndarray
    scale: np.ndarray
    opacity: float
    color: np.ndarray
    logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rot", _as_quat(self.rot))
        scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        if np.any(scale <= 0):
            raise InvalidInputError(f"scale must be positive, got {scale}")
        object.__setattr__(self, "scale", scale)
        if not 0.0 <= float(self.opacity) <= 1.0:
            raise InvalidInputError(f"opacity out of [0, 1]: {self.opacity}")
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))
        object.__setattr__(self, "logits", np.asarray(self.logits, dtype=np.float64).reshape(-1))

    def covariance(self) -> np.ndarray:
        R = quat_to_rotmat(self.rot)
        S = np.diag(self.scale)
        return R @ S @ S.T @ R.T


def apply_motion(p: Primitive, m: RigidMotion) -> Primitive:
    """Rigidly move a primitive: the center is transformed and the orientation is
    pre-multiplied, which rotates the covariance as ``R Σ Rᵀ``."""
    if np.array_equal(m.q, [1.0, 0.0, 0.0, 0.0]) and not np.any(m.t):
        return p
    return replace(p, center=m.R @ p.center + m.t, rot=quat_mul(m.q, p.rot))


@dataclass(frozen=True)
class Camera:
    K: np.ndarray
    E: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        E = np.asarray(self.E, dtype=np.float64).reshape(4, 4)
        if K[0, 0] <= 0 or K[1, 1] <= 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise InvalidInputError("intrinsics must be upper triangular with positive focal lengths")
        Rw = E[:3, :3]
        if np.max(np.abs(Rw @ Rw.T - np.eye(3))) > 1e-6:
            raise InvalidInputError("extrinsic rotation block is not orthonormal")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def look_at(cls, eye, target, up, fov_deg: float, width: int, height: int) -> Camera:
        """Pinhole camera at ``eye`` looking at ``target`` (camera +z forward, +y down)."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        E = np.eye(4)
        E[:3, :3] = R
        E[:3, 3] = -R @ eye
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
        K = np.array([[f, 0, (width - 1) / 2], [0, f, (height - 1) / 2], [0, 0, 1.0]])
        return cls(K, E, width, height)

    @property
    def center(self) -> np.ndarray:
        return -self.E[:3, :3].T @ self.E[:3, 3]

    def to_camera(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.E[:3, :3].T + self.E[:3, 3]

    def project_points(self, X: np.ndarray):
        """Vectorized projection; returns ``(uv, z)``. Points with ``z <= 1e-6`` get NaN pixels."""
        Xc = self.to_camera(np.atleast_2d(X))
        z = Xc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.K[0, 0] * Xc[:, 0] / z + self.K[0, 1] * Xc[:, 1] / z + self.K[0, 2]
            v = self.K[1, 1] * Xc[:, 1] / z + self.K[1, 2]
        uv = np.stack([u, v], axis=1)
        uv[z <= 1e-6] = np.nan
        return uv, z

    def backproject_points(self, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
        uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        depth = np.asarray(depth, dtype=np.float64).reshape(-1)
        ones = np.ones(len(uv))
        rays = np.linalg.solve(self.K, np.stack([uv[:, 0], uv[:, 1], ones])).T
        Xc = rays * depth[:, None]
        R, t = self.E[:3, :3], self.E[:3, 3]
        return (Xc - t) @ R


def project(c: Camera, x):
    """Project a world point. Returns ``(pixel, depth)`` or ``None`` when behind the camera."""
    uv, z = c.project_points(np.asarray(x, dtype=np.float64).reshape(1, 3))
    if not z[0] > 1e-6:
        return None
    return uv[0], float(z[0])


def backproject(c: Camera, pixel, depth: float) -> np.ndarray:
    if not depth > 0:
        raise InvalidInputError(f"depth must be positive, got {depth}")
    return c.backproject_points(np.asarray(pixel, dtype=np.float64).reshape(1, 2), [depth])[0]


@dataclass(frozen=True)
class JointParams:
    kind: str
    axis_dir: np.ndarray
    axis_origin: np.ndarray | None
    magnitude: float

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise InvalidInputError(f"unknown joint kind {self.kind!r}")
        a = np.asarray(self.axis_dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(a)
        if n == 0:
            raise InvalidInputError("zero joint axis")
        object.__setattr__(self, "axis_dir", a / n)
        if self.kind == PRISMATIC:
            object.__setattr__(self, "axis_origin", None)
        elif self.axis_origin is not None:
            object.__setattr__(self, "axis_origin", np.asarray(self.axis_origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "magnitude", float(self.magnitude))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axis_dir": self.axis_dir.tolist(),
            "axis_origin": None if self.axis_origin is None else self.axis_origin.tolist(),
            "magnitude": self.magnitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointParams:
        return cls(d["kind"], d["axis_dir"], d.get("axis_origin"), d["magnitude"])


def compose_joint(j: JointParams) -> RigidMotion:
    """Rigid motion produced by moving joint ``j`` by its magnitude."""
    if j.kind == PRISMATIC:
        return RigidMotion(np.array([1.0, 0, 0, 0]), j.magnitude * j.axis_dir)
    q = quat_from_axis_angle(j.axis_dir, j.magnitude)
    o = np.zeros(3) if j.axis_origin is None else j.axis_origin
    return RigidMotion(q, o - quat_to_rotmat(q) @ o)


def decompose_joint(m: RigidMotion, kind_hint: str | None = None,
                    prismatic_threshold_deg: float = PRISMATIC_THRESHOLD_DEG) -> JointParams:
    """Read a rigid motion as a 1-DoF joint.

    Revolute axes come out with a non-negative magnitude (the axis is flipped
    to match) and the axis origin is the point on the axis closest to the
    world origin.
    """
    q = m.q if m.q[0] >= 0 else -m.q
    vn = float(np.linalg.norm(q[1:]))
    theta = 2.0 * math.atan2(vn, float(q[0]))
    tn = float(np.linalg.norm(m.t))
    if theta < 1e-6 and tn < 1e-9:
        raise DegenerateJointError("near-identity motion has no joint axis")
    if kind_hint is None:
        kind = REVOLUTE if theta > math.radians(prismatic_threshold_deg) else PRISMATIC
    else:
        kind = kind_hint
    if kind == PRISMATIC:
        if tn < 1e-9:
            raise DegenerateJointError("prismatic joint with zero translation")
        return JointParams(PRISMATIC, m.t / tn, None, tn)
    if theta < 1e-6:
        raise DegenerateJointError("revolute joint with zero rotation")
    axis = q[1:] / vn
    A = np.eye(3) - quat_to_rotmat(q)
    U, s, Vt = np.linalg.svd(A)
    # A has rank 2; its null space is the rotation axis.
    s_inv = np.array([1 / s[0], 1 / s[1], 0.0])
    origin = Vt.T @ (s_inv * (U.T @ m.t))
    origin = origin - axis * float(origin @ axis)
    return JointParams(REVOLUTE, axis, origin, theta)
