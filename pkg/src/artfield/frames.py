from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geom import Camera


@dataclass
class Frame:
    """One posed RGB-D observation.

    ``labels`` holds part labels (0 = background, otherwise part index + 1);
    ``depth`` is 0 exactly on background pixels.
    """

    rgb: np.ndarray
    depth: np.ndarray
    labels: np.ndarray
    camera: Camera
    state: int
    view: int
    split: str = "train"
    face_id: np.ndarray | None = field(default=None, repr=False)

    @cached_property
    def invdepth(self) -> np.ndarray:
        d = self.depth
        out = np.zeros_like(d, dtype=np.float64)
        np.divide(1.0, d, out=out, where=d > 0)
        return out

    def with_labels(self, labels: np.ndarray) -> Frame:
        return Frame(self.rgb, self.depth, labels, self.camera, self.state, self.view,
                     self.split, self.face_id)


def sample_depth(invdepth: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Depth at subpixel locations via bilinear interpolation of inverse depth.

    Falls back to the nearest pixel when the 2x2 block touches background;
    returns 0 where no depth is available.
    """
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    H, W = invdepth.shape
    u, v = uv[:, 0], uv[:, 1]
    out = np.zeros(len(uv))
    ok = np.isfinite(u) & np.isfinite(v) & (u > -0.5) & (v > -0.5) & (u < W - 0.5) & (v < H - 0.5)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return out
    uu, vv = u[idx], v[idx]
    j0 = np.clip(np.floor(uu).astype(np.intp), 0, W - 2)
    i0 = np.clip(np.floor(vv).astype(np.intp), 0, H - 2)
    a = np.clip(uu - j0, 0.0, 1.0)
    b = np.clip(vv - i0, 0.0, 1.0)
    s00, s01 = invdepth[i0, j0], invdepth[i0, j0 + 1]
    s10, s11 = invdepth[i0 + 1, j0], invdepth[i0 + 1, j0 + 1]
    s = (1 - a) * (1 - b) * s00 + a * (1 - b) * s01 + (1 - a) * b * s10 + a * b * s11
    # zero-weight corners may be background without affecting the value
    full = ((s00 > 0) | ((1 - a) * (1 - b) == 0)) & ((s01 > 0) | (a * (1 - b) == 0)) \
        & ((s10 > 0) | ((1 - a) * b == 0)) & ((s11 > 0) | (a * b == 0))
    nearest = invdepth[np.floor(vv + 0.5).astype(np.intp), np.floor(uu + 0.5).astype(np.intp)]
    s = np.where(full, s, nearest)
    good = s > 0
    out[idx[good]] = 1.0 / s[good]
    return out
