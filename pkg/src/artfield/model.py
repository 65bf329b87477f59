"""Trainable scene state: canonical primitives plus a motion field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import Primitive, quats_to_rotmats
from .motionfield import IDENTITY_Q, MotionField, blend_arrays, softmax


@dataclass
class SceneModel:
    centers: np.ndarray
    colors: np.ndarray
    logits: np.ndarray
    scales: np.ndarray
    opacity: np.ndarray
    quats: np.ndarray
    trans: np.ndarray
    locked: np.ndarray
    knn: np.ndarray
    canonical_state: int = 0
    temperature: float = 1.0

    @classmethod
    def create(cls, centers, colors, logits, scales, opacity: float, knn_k: int,
               canonical_state: int = 0, temperature: float = 1.0) -> SceneModel:
        centers = np.asarray(centers, dtype=np.float64)
        n_parts = np.asarray(logits).shape[1]
        return cls(centers, np.asarray(colors, dtype=np.float64), np.asarray(logits, dtype=np.float64),
                   np.asarray(scales, dtype=np.float64), np.full(len(centers), float(opacity)),
                   np.tile(IDENTITY_Q, (n_parts, 1)), np.zeros((n_parts, 3)),
                   np.zeros(n_parts, dtype=bool), build_knn(centers, knn_k),
                   canonical_state, temperature)

    @property
    def n_points(self) -> int:
        return len(self.centers)

    @property
    def n_parts(self) -> int:
        return self.logits.shape[1]

    @property
    def field(self) -> MotionField:
        return MotionField.from_arrays(self.quats, self.trans, self.locked)

    def weights(self) -> np.ndarray:
        return softmax(self.logits, self.temperature)

    def assignment(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)

    def rotations(self) -> np.ndarray:
        return quats_to_rotmats(self.quats)

    def positions(self, state: int, mode: str = "hard") -> np.ndarray:
        """Primitive centers in ``state`` under soft blending or hard assignment."""
        if state == self.canonical_state:
            return self.centers
        Rs, Ts = self.rotations(), self.trans
        if mode == "soft":
            Rb, Tb = blend_arrays(self.weights(), Rs, Ts)
            return np.einsum("pab,pb->pa", Rb, self.centers) + Tb
        j = self.assignment()
        return np.einsum("pab,pb->pa", Rs[j], self.centers) + Ts[j]

    def primitives(self) -> list:
        return [Primitive(c, IDENTITY_Q, np.full(3, s), float(o), col, lg)
                for c, s, o, col, lg in zip(self.centers, self.scales, self.opacity,
                                            self.colors, self.logits)]

    def copy(self) -> SceneModel:
        return SceneModel(*(np.array(getattr(self, f)) for f in (
            "centers", "colors", "logits", "scales", "opacity", "quats", "trans", "locked", "knn")),
            self.canonical_state, self.temperature)


def build_knn(centers: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's ``k`` nearest other points (fewer points: all of them)."""
    n = len(centers)
    k_eff = min(k, n - 1)
    if k_eff <= 0:
        return np.zeros((n, 0), dtype=np.int64)
    _, idx = cKDTree(centers).query(centers, k=k_eff + 1)
    idx = np.asarray(idx).reshape(n, k_eff + 1)
    out = np.empty((n, k_eff), dtype=np.int64)
    for i in range(n):
        row = [j for j in idx[i] if j != i]
        out[i] = row[:k_eff]
    return out
