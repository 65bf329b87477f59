"""Cross-state correspondences: lifting to 3D and the locality outlier filter."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .frames import Frame, sample_depth

logger = logging.getLogger(__name__)

DEFAULT_R = 0.01
DEFAULT_R_PRIME = 0.02


@dataclass(frozen=True)
class MatchPair:
    pix0: np.ndarray
    pix1: np.ndarray
    p3d0: np.ndarray | None = None
    p3d1: np.ndarray | None = None
    valid: bool = True
    view0: int = 0
    view1: int = 0


class MatchSet:
    """Array-backed list of matches; indexing yields ``MatchPair`` records."""

    def __init__(self, pix0, view0, pix1, view1, p3d0=None, p3d1=None, valid=None,
                 outlier_gt=None, part_gt=None):
        self.pix0 = np.asarray(pix0, dtype=np.float64).reshape(-1, 2)
        self.pix1 = np.asarray(pix1, dtype=np.float64).reshape(-1, 2)
        n = len(self.pix0)
        if len(self.pix1) != n:
            raise InvalidInputError(f"match lists differ in length: {n} vs {len(self.pix1)}")
        self.view0 = np.broadcast_to(np.asarray(view0, dtype=np.int64), (n,)).copy()
        self.view1 = np.broadcast_to(np.asarray(view1, dtype=np.int64), (n,)).copy()
        self.p3d0 = None if p3d0 is None else np.asarray(p3d0, dtype=np.float64).reshape(n, 3)
        self.p3d1 = None if p3d1 is None else np.asarray(p3d1, dtype=np.float64).reshape(n, 3)
        self.valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        self.outlier_gt = None if outlier_gt is None else np.asarray(outlier_gt, dtype=bool)
        self.part_gt = None if part_gt is None else np.asarray(part_gt, dtype=np.int64)

    @classmethod
    def empty(cls) -> MatchSet:
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0),
                   np.zeros((0, 3)), np.zeros((0, 3)), outlier_gt=np.zeros(0, dtype=bool))

    def __len__(self) -> int:
        return len(self.pix0)

    def __getitem__(self, i: int) -> MatchPair:
        return MatchPair(self.pix0[i], self.pix1[i],
                         None if self.p3d0 is None else self.p3d0[i],
                         None if self.p3d1 is None else self.p3d1[i],
                         bool(self.valid[i]), int(self.view0[i]), int(self.view1[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> MatchSet:
        def pick(a):
            return None if a is None else a[idx]
        return MatchSet(self.pix0[idx], self.view0[idx], self.pix1[idx], self.view1[idx],
                        pick(self.p3d0), pick(self.p3d1), self.valid[idx],
                        pick(self.outlier_gt), pick(self.part_gt))

    def with_valid(self, valid) -> MatchSet:
        out = self.subset(np.arange(len(self)))
        out.valid = np.asarray(valid, dtype=bool)
        return out

    @property
    def lifted(self) -> bool:
        return self.p3d0 is not None and self.p3d1 is not None


def _lift(frame: Frame, pix: np.ndarray):
    d = sample_depth(frame.invdepth, pix)
    good = d > 0
    X = np.zeros((len(pix), 3))
    if good.any():
        X[good] = frame.camera.backproject_points(pix[good], d[good])
    return X, good


def lift_matches(pix0, pix1, frame0: Frame, frame1: Frame):
    """Back-project pixel pairs between two frames into world space.

    Returns ``(MatchSet, n_dropped)``; pairs without depth on either side are dropped.
    """
    pix0 = np.asarray(pix0, dtype=np.float64).reshape(-1, 2)
    pix1 = np.asarray(pix1, dtype=np.float64).reshape(-1, 2)
    if len(pix0) != len(pix1):
        raise InvalidInputError(f"match lists differ in length: {len(pix0)} vs {len(pix1)}")
    X0, g0 = _lift(frame0, pix0)
    X1, g1 = _lift(frame1, pix1)
    keep = g0 & g1
    n_drop = int((~keep).sum())
    if n_drop:
        logger.info("dropped %d matches without depth", n_drop)
    return MatchSet(pix0[keep], frame0.view, pix1[keep], frame1.view, X0[keep], X1[keep]), n_drop


def lift_match_set(matches: MatchSet, frames0: list, frames1: list):
    """Lift a multi-view match set; frames are looked up by view id per state."""
    by0 = {f.view: f for f in frames0}
    by1 = {f.view: f for f in frames1}
    n = len(matches)
    X0, X1 = np.zeros((n, 3)), np.zeros((n, 3))
    keep = np.zeros(n, dtype=bool)
    for v0 in np.unique(matches.view0):
        for v1 in np.unique(matches.view1[matches.view0 == v0]):
            sel = np.flatnonzero((matches.view0 == v0) & (matches.view1 == v1))
            if int(v0) not in by0 or int(v1) not in by1:
                raise InvalidInputError(f"match refers to missing view {int(v0)} or {int(v1)}")
            a, ga = _lift(by0[int(v0)], matches.pix0[sel])
            b, gb = _lift(by1[int(v1)], matches.pix1[sel])
            X0[sel], X1[sel] = a, b
            keep[sel] = ga & gb
    out = matches.subset(np.flatnonzero(keep))
    out.p3d0, out.p3d1 = X0[keep], X1[keep]
    n_drop = int((~keep).sum())
    if n_drop:
        logger.info("dropped %d matches without depth", n_drop)
    return out, n_drop


def locality_filter(matches: MatchSet, r: float = DEFAULT_R, r_prime: float = DEFAULT_R_PRIME) -> MatchSet:
    """Flag matches whose end point strays from the mean end point of their start-point neighbors.

    The neighborhood of match ``i`` holds every match (itself included) whose
    start point lies within ``r`` of its start point.
    """
    if not matches.lifted:
        raise InvalidInputError("locality_filter needs lifted matches")
    if len(matches) == 0:
        return matches.with_valid(np.zeros(0, dtype=bool))
    means, _ = kernels.radius_mean(matches.p3d0, matches.p3d1, r)
    valid = np.linalg.norm(matches.p3d1 - means, axis=1) < r_prime
    return matches.with_valid(valid)
