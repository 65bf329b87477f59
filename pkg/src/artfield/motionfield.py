"""Global motion bases with per-primitive soft blending and hard assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geom import RigidMotion, quat_angle

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class MotionBasis:
    motion: RigidMotion = field(default_factory=RigidMotion.identity)
    prismatic_locked: bool = False

    def __post_init__(self):
        if self.prismatic_locked and not np.array_equal(self.motion.q, IDENTITY_Q):
            raise InvalidInputError("a prismatic-locked basis must carry the identity rotation")


@dataclass(frozen=True)
class MotionField:
    """``bases[0]`` is the static part and stays the identity."""

    bases: tuple[MotionBasis, ...]

    def __post_init__(self):
        bases = tuple(self.bases)
        if len(bases) < 2:
            raise InvalidInputError("a motion field needs at least two parts")
        b0 = bases[0].motion
        if not (np.array_equal(b0.q, IDENTITY_Q) and not np.any(b0.t)):
            raise InvalidInputError("basis 0 (static part) must be the identity")
        object.__setattr__(self, "bases", bases)

    @classmethod
    def identity(cls, n_parts: int) -> MotionField:
        return cls(tuple(MotionBasis() for _ in range(n_parts)))

    @property
    def n_parts(self) -> int:
        return len(self.bases)

    def rotations(self) -> np.ndarray:
        return np.stack([b.motion.R for b in self.bases])

    def translations(self) -> np.ndarray:
        return np.stack([b.motion.t for b in self.bases])

    def quats(self) -> np.ndarray:
        return np.stack([b.motion.q for b in self.bases])

    def locked(self) -> np.ndarray:
        return np.array([b.prismatic_locked for b in self.bases])

    @classmethod
    def from_arrays(cls, quats, trans, locked=None) -> MotionField:
        quats = np.asarray(quats, dtype=np.float64)
        trans = np.asarray(trans, dtype=np.float64)
        if locked is None:
            locked = np.zeros(len(quats), dtype=bool)
        return cls(tuple(
            MotionBasis(RigidMotion(q, t), bool(lk)) for q, t, lk in zip(quats, trans, locked)
        ))

    def to_dict(self) -> dict:
        return {
            "quats": self.quats().tolist(),
            "trans": self.translations().tolist(),
            "locked": self.locked().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> MotionField:
        return cls.from_arrays(d["quats"], d["trans"], d["locked"])


def soft_blend(logits, field: MotionField, temperature: float = 1.0):
    """Probability-weighted sum of basis rotations and translations.

    The blended matrix is returned as is; it is generally not a rotation.
    """
    w = softmax(logits, temperature)
    return np.einsum("j,jab->ab", w, field.rotations()), w @ field.translations()


def blend_arrays(W: np.ndarray, Rs: np.ndarray, Ts: np.ndarray):
    """Batched blend for ``(P, N)`` weights: returns ``(P, 3, 3)`` and ``(P, 3)``."""
    return np.einsum("pj,jab->pab", W, Rs), W @ Ts


def hard_assign(logits) -> int | np.ndarray:
    """Index of the most probable part (lowest index on ties)."""
    logits = np.asarray(logits)
    j = np.argmax(logits, axis=-1)
    return int(j) if logits.ndim == 1 else j


def init_weights(label: int, n_parts: int) -> np.ndarray:
    """One-hot logits for a part label; the effective weights are their softmax."""
    if n_parts < 1 or not 0 <= label < n_parts:
        raise InvalidInputError(f"label {label} out of range for {n_parts} parts")
    logits = np.zeros(n_parts)
    logits[label] = 1.0
    return logits


def detect_prismatic(field: MotionField, step: int, eps_deg: float = 15.0) -> MotionField:
    """Lock every moving basis whose rotation stayed under ``eps_deg``.

    Locked bases get the identity rotation; their translation is kept.
    ``step`` is only informational.
    """
    eps = math.radians(eps_deg)
    bases = [field.bases[0]]
    for b in field.bases[1:]:
        if b.prismatic_locked or quat_angle(b.motion.q) < eps:
            bases.append(MotionBasis(RigidMotion(IDENTITY_Q, b.motion.t), True))
        else:
            bases.append(b)
    return MotionField(tuple(bases))
