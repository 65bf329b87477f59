"""Deterministic articulated cuboid scenes with full ground truth.

Every random draw comes from a numpy ``Generator`` seeded by ``[seed, tag...]``
so each view, part and stage has its own stream and results never depend on
evaluation order.
"""

from __future__ import annotations

import colorsys
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .correspondence import MatchSet
from .errors import InvalidInputError
from .frames import Frame, sample_depth
from .geom import PRISMATIC, REVOLUTE, Camera, JointParams, RigidMotion, compose_joint

logger = logging.getLogger(__name__)

START_RANGE = (0.65, 0.75)
END_RANGE = (0.35, 0.45)

# face order: +x, -x, +y, -y, +z, -z
_FACE_AXES = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)]
_LIGHT = np.array([0.35, 0.6, 0.72]) / np.linalg.norm([0.35, 0.6, 0.72])
CHECKER_CELL = 0.05
CHECKER_MIN_FACE = 0.15


@dataclass
class JointSpec:
    kind: str
    axis_dir: list
    axis_origin: list | None
    lo: float
    hi: float


@dataclass
class PartSpec:
    name: str
    dims: list
    center: list
    color: list
    joint: JointSpec | None = None


@dataclass
class SceneSpec:
    name: str
    base: PartSpec
    parts: list
    n_views_train: int = 24
    n_views_test: int = 6
    image_size: int = 160
    fov_deg: float = 40.0
    cam_radius: tuple = (1.6, 1.9)
    cam_elev_deg: tuple = (5.0, 35.0)
    cam_azim_deg: tuple = (-50.0, 50.0)
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_parts <= 20:
            raise InvalidInputError(f"part count must be in [2, 20], got {self.n_parts}")
        for p in self.parts:
            if p.joint is None:
                raise InvalidInputError(f"movable part {p.name!r} has no joint")
            if not (np.isfinite(p.joint.lo) and np.isfinite(p.joint.hi)):
                raise InvalidInputError(f"joint limits of {p.name!r} must be finite")
            if p.joint.kind not in (REVOLUTE, PRISMATIC):
                raise InvalidInputError(f"unknown joint kind {p.joint.kind!r}")

    @property
    def n_parts(self) -> int:
        return 1 + len(self.parts)

    @property
    def all_parts(self) -> list:
        return [self.base] + list(self.parts)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        d = dict(d)

        def part(pd):
            pd = dict(pd)
            if pd.get("joint") is not None:
                pd["joint"] = JointSpec(**pd["joint"])
            return PartSpec(**pd)

        d["base"] = part(d["base"])
        d["parts"] = [part(p) for p in d["parts"]]
        for k in ("cam_radius", "cam_elev_deg", "cam_azim_deg"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# ---------------------------------------------------------------- builtins

def _palette(n: int) -> list:
    return [list(colorsys.hsv_to_rgb((0.07 + i / n) % 1.0, 0.55, 0.9)) for i in range(n)]


def _camera_range(dims, fov_deg: float) -> tuple:
    rho = 0.5 * float(np.linalg.norm(dims))
    d = rho / math.sin(math.radians(fov_deg) / 2)
    return (round(0.95 * d, 3), round(1.1 * d, 3))


def door_spec(seed: int = 0) -> SceneSpec:
    """Cabinet body with a single side-hinged door."""
    base_dims = [0.6, 0.8, 0.5]
    colors = _palette(2)
    hz = base_dims[2] / 2
    door = PartSpec("door", [0.48, 0.56, 0.02], [0.0, 0.08, hz + 0.01], colors[1],
                    JointSpec(REVOLUTE, [0, -1, 0], [-0.24, 0.08, hz], 0.0, math.pi / 2))
    return SceneSpec("door", PartSpec("base", base_dims, [0, 0, 0], colors[0]), [door],
                     cam_radius=_camera_range(base_dims, 40.0), seed=seed)


def cabinet_spec(seed: int = 0) -> SceneSpec:
    """Static body, two revolute doors on top and two drawers below."""
    W, H, D = 0.8, 1.0, 0.5
    colors = _palette(5)
    hz = D / 2
    parts = [
        PartSpec("door_left", [0.38, 0.45, 0.02], [-0.2, 0.25, hz + 0.01], colors[1],
                 JointSpec(REVOLUTE, [0, -1, 0], [-0.39, 0.25, hz], 0.0, math.pi / 2)),
        PartSpec("door_right", [0.38, 0.45, 0.02], [0.2, 0.25, hz + 0.01], colors[2],
                 JointSpec(REVOLUTE, [0, 1, 0], [0.39, 0.25, hz], 0.0, math.pi / 2)),
    ]
    for k, y in enumerate((-0.13, -0.37)):
        depth = 0.4
        parts.append(PartSpec(f"drawer_{k}", [0.76, 0.2, depth], [0.0, y, hz + 0.02 - depth / 2],
                              colors[3 + k],
                              JointSpec(PRISMATIC, [0, 0, 1], None, 0.0, 0.4 * depth)))
    return SceneSpec("cabinet5", PartSpec("base", [W, H, D], [0, 0, 0], colors[0]), parts,
                     cam_radius=_camera_range([W, H, D], 40.0), seed=seed)


def grid_spec(n_parts: int, seed: int = 0) -> SceneSpec:
    """Front grid of alternating doors and drawers on one body; ``n_parts`` counts the body."""
    n_mov = n_parts - 1
    cols = int(math.ceil(math.sqrt(n_mov)))
    rows = int(math.ceil(n_mov / cols))
    W, H, D = 0.25 * cols + 0.1, 0.25 * rows + 0.1, 0.5
    colors = _palette(n_parts)
    hz = D / 2
    parts = []
    cw, ch = (W - 0.1) / cols, (H - 0.1) / rows
    pw, ph = cw - 0.02, ch - 0.02
    for k in range(n_mov):
        r, c = divmod(k, cols)
        x = -W / 2 + 0.05 + (c + 0.5) * cw
        y = H / 2 - 0.05 - (r + 0.5) * ch
        color = colors[1 + k]
        if k % 2 == 0:
            left = c < cols / 2
            ox = x - pw / 2 if left else x + pw / 2
            joint = JointSpec(REVOLUTE, [0, -1 if left else 1, 0], [ox, y, hz], 0.0, math.pi / 2)
            parts.append(PartSpec(f"door_{k}", [pw, ph, 0.02], [x, y, hz + 0.01], color, joint))
        else:
            depth = 0.3
            joint = JointSpec(PRISMATIC, [0, 0, 1], None, 0.0, 0.4 * depth)
            parts.append(PartSpec(f"drawer_{k}", [pw, ph, depth], [x, y, hz + 0.02 - depth / 2],
                                  color, joint))
    return SceneSpec(f"grid{n_parts}", PartSpec("base", [W, H, D], [0, 0, 0], colors[0]), parts,
                     cam_radius=_camera_range([W, H, D], 40.0), seed=seed)


def static_spec(seed: int = 0) -> SceneSpec:
    """Door whose two states coincide (zero-width joint limits)."""
    spec = door_spec(seed)
    spec.name = "static"
    spec.parts[0].joint.lo = spec.parts[0].joint.hi = 0.5
    return spec


BUILTIN_SPECS = {
    "door": door_spec,
    "cabinet5": cabinet_spec,
    "grid10": lambda seed=0: grid_spec(10, seed),
    "grid20": lambda seed=0: grid_spec(20, seed),
    "static": static_spec,
}


# ---------------------------------------------------------------- states

def sample_states(spec: SceneSpec, seed: int):
    """Normalized start/end joint states drawn from the benchmark intervals."""
    rng = np.random.default_rng([seed, 7])
    n = len(spec.parts)
    s0 = rng.uniform(*START_RANGE, size=n)
    s1 = rng.uniform(*END_RANGE, size=n)
    return s0, s1


def joint_values(spec: SceneSpec, s: np.ndarray) -> np.ndarray:
    return np.array([p.joint.lo + si * (p.joint.hi - p.joint.lo) for p, si in zip(spec.parts, s)])


def joint_of(part: PartSpec, value: float) -> JointParams:
    j = part.joint
    return JointParams(j.kind, j.axis_dir, j.axis_origin, value)


def part_poses(spec: SceneSpec, values) -> list:
    """World pose of every part (base first) at the given joint values."""
    poses = [RigidMotion.identity()]
    for p, v in zip(spec.parts, values):
        poses.append(compose_joint(joint_of(p, v)) if v != 0 else RigidMotion.identity())
    return poses


def gt_motions(spec: SceneSpec, values0, values1) -> list:
    """Per-part rigid motion taking state-0 geometry to state 1."""
    p0, p1 = part_poses(spec, values0), part_poses(spec, values1)
    return [b.compose(a.inverse()) for a, b in zip(p0, p1)]


def gt_joints(spec: SceneSpec, values0, values1) -> list:
    """Ground-truth joint per movable part; magnitude is the travel between states."""
    out = []
    for p, v0, v1 in zip(spec.parts, values0, values1):
        j = p.joint
        origin = None
        if j.kind == REVOLUTE:
            a = np.asarray(j.axis_dir, dtype=np.float64)
            a = a / np.linalg.norm(a)
            o = np.asarray(j.axis_origin, dtype=np.float64)
            origin = o - a * float(o @ a)
        out.append(JointParams(j.kind, j.axis_dir, origin, abs(v1 - v0)))
    return out


# ---------------------------------------------------------------- geometry

def _box_corners(dims) -> np.ndarray:
    h = np.asarray(dims, dtype=np.float64) / 2
    return np.array([[sx * h[0], sy * h[1], sz * h[2]]
                     for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])


def _face_quads():
    """Corner indices (counter-clockwise seen from outside) for each face."""
    quads = []
    corners = _box_corners([2, 2, 2])
    for axis, sign in _FACE_AXES:
        idx = [i for i, c in enumerate(corners) if c[axis] == sign]
        pts = corners[idx]
        others = [a for a in range(3) if a != axis]
        ang = np.arctan2(pts[:, others[1]], pts[:, others[0]])
        order = [idx[i] for i in np.argsort(ang)]
        quads.append(order)
    return quads


_QUADS = _face_quads()


def scene_triangles(spec: SceneSpec, values):
    """World-space triangles with local coordinates; returns ``(verts, local, part, face)``."""
    poses = part_poses(spec, values)
    verts, local, part_of, face_of = [], [], [], []
    for k, (p, pose) in enumerate(zip(spec.all_parts, poses)):
        lc = _box_corners(p.dims)
        wc = pose.apply(lc + np.asarray(p.center, dtype=np.float64))
        for f, q in enumerate(_QUADS):
            for tri in ((q[0], q[1], q[2]), (q[0], q[2], q[3])):
                verts.append(wc[list(tri)])
                local.append(lc[list(tri)])
                part_of.append(k)
                face_of.append(f)
    return np.array(verts), np.array(local), np.array(part_of), np.array(face_of)


def _face_shading(spec: SceneSpec) -> np.ndarray:
    normals = np.zeros((6, 3))
    for f, (axis, sign) in enumerate(_FACE_AXES):
        normals[f, axis] = sign
    return 0.5 + 0.5 * np.clip(normals @ _LIGHT, 0.0, None)


def _checker(local: np.ndarray, face: np.ndarray, dims: np.ndarray) -> np.ndarray:
    """Brightness factor of the checker texture on large faces."""
    out = np.ones(len(local))
    for f, (axis, _) in enumerate(_FACE_AXES):
        sel = face == f
        if not sel.any():
            continue
        a1, a2 = [a for a in range(3) if a != axis]
        big = (dims[sel, a1] > CHECKER_MIN_FACE) & (dims[sel, a2] > CHECKER_MIN_FACE)
        cell = (np.floor(local[sel, a1] / CHECKER_CELL) + np.floor(local[sel, a2] / CHECKER_CELL))
        odd = (cell.astype(np.int64) % 2) == 1
        out[np.flatnonzero(sel)[big & odd]] = 0.8
    return out


def sample_camera(spec: SceneSpec, state: int, view: int, seed: int) -> Camera:
    rng = np.random.default_rng([seed, 1000 + state, view])
    az = math.radians(rng.uniform(*spec.cam_azim_deg))
    el = math.radians(rng.uniform(*spec.cam_elev_deg))
    r = rng.uniform(*spec.cam_radius)
    target = np.asarray(spec.base.center, dtype=np.float64) + rng.uniform(-0.02, 0.02, size=3)
    eye = target + r * np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])
    return Camera.look_at(eye, target, [0, 1, 0], spec.fov_deg, spec.image_size, spec.image_size)


def render(spec: SceneSpec, values, camera: Camera, state: int = 0, view: int = 0,
           split: str = "train") -> Frame:
    """Rasterize the scene at ``values`` from ``camera``."""
    verts, local, part_of, face_of = scene_triangles(spec, values)
    T = len(verts)
    Xc = camera.to_camera(verts.reshape(-1, 3)).reshape(T, 3, 3)
    invz = 1.0 / Xc[:, :, 2]
    uv, _ = camera.project_points(verts.reshape(-1, 3))
    uv = uv.reshape(T, 3, 2)
    depth, index, attr = kernels.rasterize(uv, invz, local, camera.height, camera.width)
    fg = index >= 0
    tri = index[fg]
    labels = np.zeros(index.shape, dtype=np.int32)
    labels[fg] = part_of[tri] + 1
    face_id = np.full(index.shape, -1, dtype=np.int32)
    face_id[fg] = part_of[tri] * 6 + face_of[tri]

    base_colors = np.array([p.color for p in spec.all_parts], dtype=np.float64)
    dims = np.array([p.dims for p in spec.all_parts], dtype=np.float64)
    shade = _face_shading(spec)
    rgb = np.zeros(index.shape + (3,))
    fac = shade[face_of[tri]] * _checker(attr[fg], face_of[tri], dims[part_of[tri]])
    rgb[fg] = base_colors[part_of[tri]] * fac[:, None]
    rgb = np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8) / 255.0
    depth = depth.astype(np.float32).astype(np.float64)
    return Frame(rgb, depth, labels, camera, state, view, split, face_id)


def render_views(spec: SceneSpec, values, state: int, seed: int,
                 n_train: int | None = None, n_test: int | None = None) -> list:
    n_train = spec.n_views_train if n_train is None else n_train
    n_test = spec.n_views_test if n_test is None else n_test
    frames = []
    for v in range(n_train + n_test):
        cam = sample_camera(spec, state, v, seed)
        frames.append(render(spec, values, cam, state, v, "train" if v < n_train else "test"))
    return frames


def validate_visibility(frames: list, n_parts: int, min_frac: float = 0.01, min_views: int = 3) -> list:
    """Movable parts that cover ``min_frac`` of the image in fewer than ``min_views`` views."""
    bad = []
    train = [f for f in frames if f.split == "train"]
    for k in range(1, n_parts):
        n_ok = sum(np.mean(f.labels == k + 1) >= min_frac for f in train)
        if n_ok < min_views:
            bad.append(k)
    return bad


# ---------------------------------------------------------------- masks

@dataclass
class MaskSet:
    """View-local part masks: 0 is background, 1..M are arbitrary per-view ids."""

    view: int
    labels: np.ndarray
    state: int
    local_to_global: dict = field(default_factory=dict)

    @property
    def n_masks(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0


def permute_labels(frames: list, dropout_rate: float = 0.0, seed: int | None = 0) -> list:
    """Independently relabel each view's parts with dense random ids.

    ``seed=None`` keeps the original order (the identity draw). Dropped masks
    become background. The ground-truth map is kept in ``local_to_global``.
    """
    out = []
    for f in frames:
        present = [int(g) for g in np.unique(f.labels) if g > 0]
        if seed is None:
            order = present
            keep = present
        else:
            rng = np.random.default_rng([seed, 3000 + f.state, f.view])
            drop = rng.random(len(present)) < dropout_rate
            keep = [g for g, d in zip(present, drop) if not d]
            order = [keep[i] for i in rng.permutation(len(keep))]
        lut = np.zeros(int(f.labels.max()) + 1, dtype=np.int32)
        mapping = {}
        for local, g in enumerate(order, start=1):
            lut[g] = local
            mapping[local] = g
        out.append(MaskSet(f.view, lut[f.labels], f.state, mapping))
    return out


# ---------------------------------------------------------------- surfaces

def _face_geometry(dims, f):
    axis, sign = _FACE_AXES[f]
    a1, a2 = [a for a in range(3) if a != axis]
    h = np.asarray(dims, dtype=np.float64) / 2
    return axis, sign, a1, a2, h


def sample_surface(spec: SceneSpec, values, n: int, rng: np.random.Generator, part: int | None = None):
    """Area-uniform samples on box surfaces at ``values``; returns ``(points, part_index)``."""
    poses = part_poses(spec, values)
    parts = range(spec.n_parts) if part is None else [part]
    faces, areas = [], []
    for k in parts:
        p = spec.all_parts[k]
        for f in range(6):
            _, _, a1, a2, h = _face_geometry(p.dims, f)
            faces.append((k, f))
            areas.append(4 * h[a1] * h[a2])
    areas = np.array(areas)
    pick = rng.choice(len(faces), size=n, p=areas / areas.sum())
    uv = rng.uniform(-1, 1, size=(n, 2))
    pts = np.zeros((n, 3))
    lab = np.zeros(n, dtype=np.int64)
    for i, fi in enumerate(np.unique(pick)):
        sel = pick == fi
        k, f = faces[fi]
        p = spec.all_parts[k]
        axis, sign, a1, a2, h = _face_geometry(p.dims, f)
        L = np.zeros((sel.sum(), 3))
        L[:, axis] = sign * h[axis]
        L[:, a1] = uv[sel, 0] * h[a1]
        L[:, a2] = uv[sel, 1] * h[a2]
        pts[sel] = poses[k].apply(L + np.asarray(p.center))
        lab[sel] = k
    return pts, lab


def visible_in_frames(points: np.ndarray, part: np.ndarray, frames: list, tol: float = 0.01) -> np.ndarray:
    """Points seen (label and depth agree within ``tol``) in at least one frame."""
    seen = np.zeros(len(points), dtype=bool)
    for f in frames:
        uv, z = f.camera.project_points(points)
        H, W = f.depth.shape
        ok = np.isfinite(uv[:, 0]) & (uv[:, 0] > -0.5) & (uv[:, 0] < W - 0.5) \
            & (uv[:, 1] > -0.5) & (uv[:, 1] < H - 0.5)
        idx = np.flatnonzero(ok & ~seen)
        if len(idx) == 0:
            continue
        r = np.floor(uv[idx, 1] + 0.5).astype(np.intp)
        c = np.floor(uv[idx, 0] + 0.5).astype(np.intp)
        good = (f.labels[r, c] == part[idx] + 1) & (np.abs(f.depth[r, c] - z[idx]) < tol)
        seen[idx[good]] = True
    return seen


def box_distances(spec: SceneSpec, values, X: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to each part's box surface, ``(P, n_parts)``."""
    poses = part_poses(spec, values)
    out = np.zeros((len(X), spec.n_parts))
    for k, (p, pose) in enumerate(zip(spec.all_parts, poses)):
        L = pose.inverse().apply(X) - np.asarray(p.center)
        q = np.abs(L) - np.asarray(p.dims) / 2
        outside = np.linalg.norm(np.maximum(q, 0), axis=1)
        inside = np.minimum(q.max(axis=1), 0)
        out[:, k] = np.abs(outside + inside)
    return out


# ---------------------------------------------------------------- correspondences

def _point_on_face(frame: Frame, X: np.ndarray, face: int, tol: float = 1e-4):
    """Subpixel projections of ``X`` lying on ``face`` with a uniform 2x2 pixel block."""
    uv, z = frame.camera.project_points(X)
    H, W = frame.depth.shape
    ok = np.isfinite(uv[:, 0]) & (uv[:, 0] >= 0) & (uv[:, 0] < W - 1) & (uv[:, 1] >= 0) & (uv[:, 1] < H - 1)
    idx = np.flatnonzero(ok)
    j0 = np.floor(uv[idx, 0]).astype(np.intp)
    i0 = np.floor(uv[idx, 1]).astype(np.intp)
    fid = frame.face_id
    same = (fid[i0, j0] == face) & (fid[i0, j0 + 1] == face) & (fid[i0 + 1, j0] == face) \
        & (fid[i0 + 1, j0 + 1] == face)
    d = sample_depth(frame.invdepth, uv[idx])
    same &= np.abs(d - z[idx]) < tol
    ok[idx] = same
    return ok, uv


def make_correspondences(spec: SceneSpec, values0, values1, frames0: list, frames1: list,
                         n_per_part: int = 100, outlier_rate: float = 0.1, seed: int = 0,
                         n_clusters: int = 4, cluster_radius: float = 0.01,
                         min_outlier_disp: float = 0.1):
    """Exact cross-state pixel matches clustered on part faces, plus flagged outliers.

    Returns ``(MatchSet, warnings)``. Matches live on training views only.
    """
    poses0 = part_poses(spec, values0)
    motions = gt_motions(spec, values0, values1)
    train0 = [f for f in frames0 if f.split == "train"]
    train1 = [f for f in frames1 if f.split == "train"]
    rows, warnings = [], []
    per_cluster = int(math.ceil(n_per_part / n_clusters))
    for k, part in enumerate(spec.all_parts):
        rng = np.random.default_rng([seed, 2000 + k])
        cand = [(vi, np.argwhere((f.labels == k + 1)[:-1, :-1])) for vi, f in enumerate(train0)]
        sizes = np.array([len(c) for _, c in cand], dtype=np.float64)
        got = []
        if sizes.sum() == 0:
            warnings.append(f"part {k} ({part.name}) is invisible in state 0; no matches")
            continue
        for _ in range(n_clusters):
            for _attempt in range(30):
                vi = int(rng.choice(len(cand), p=sizes / sizes.sum()))
                r, c = cand[vi][1][rng.integers(len(cand[vi][1]))]
                f0 = train0[vi]
                face = int(f0.face_id[r, c])
                X0 = f0.camera.backproject_points([[c, r]], [f0.depth[r, c]])[0]
                X1 = motions[k].apply(X0[None])
                vis1 = [wi for wi, f1 in enumerate(train1) if _point_on_face(f1, X1, face)[0][0]]
                if not vis1:
                    continue
                cc = f0.camera.center
                wi = min(vis1, key=lambda w: np.linalg.norm(train1[w].camera.center - cc))
                f1 = train1[wi]
                axis, sign, a1, a2, h = _face_geometry(part.dims, face % 6)
                L0 = poses0[k].inverse().apply(X0[None])[0] - np.asarray(part.center)
                m = 6 * per_cluster
                rad = cluster_radius * np.sqrt(rng.random(m))
                ang = rng.uniform(0, 2 * math.pi, m)
                L = np.tile(L0, (m, 1))
                L[:, a1] = np.clip(L0[a1] + rad * np.cos(ang), -h[a1], h[a1])
                L[:, a2] = np.clip(L0[a2] + rad * np.sin(ang), -h[a2], h[a2])
                P0 = poses0[k].apply(L + np.asarray(part.center))
                P1 = motions[k].apply(P0)
                ok0, uv0 = _point_on_face(f0, P0, face)
                ok1, uv1 = _point_on_face(f1, P1, face)
                keep = np.flatnonzero(ok0 & ok1)[:per_cluster]
                if len(keep) == 0:
                    continue
                for i in keep:
                    got.append((uv0[i, 0], uv0[i, 1], f0.view, uv1[i, 0], uv1[i, 1], f1.view, k))
                break
        if not got:
            warnings.append(f"part {k} ({part.name}): no mutually visible surface; no matches")
        rows.extend(got[:n_per_part])
    for w in warnings:
        logger.warning(w)
    if not rows:
        return MatchSet.empty(), warnings
    arr = np.array(rows, dtype=np.float64)
    outlier = np.zeros(len(arr), dtype=bool)
    n_out = int(round(outlier_rate * len(arr)))
    if n_out:
        rng = np.random.default_rng([seed, 4000])
        chosen = rng.choice(len(arr), size=n_out, replace=False)
        by_view = {f.view: f for f in train1}
        for i in chosen:
            f1 = by_view[int(arr[i, 5])]
            truth = f1.camera.backproject_points(arr[i, 3:5][None], sample_depth(f1.invdepth, arr[i, 3:5][None]))[0]
            fg = np.argwhere(f1.depth > 0)
            for _ in range(200):
                r, c = fg[rng.integers(len(fg))]
                X = f1.camera.backproject_points([[c, r]], [f1.depth[r, c]])[0]
                if np.linalg.norm(X - truth) >= min_outlier_disp:
                    arr[i, 3], arr[i, 4] = c, r
                    outlier[i] = True
                    break
    ms = MatchSet(pix0=arr[:, 0:2].copy(), view0=arr[:, 2].astype(np.int64),
                  pix1=arr[:, 3:5].copy(), view1=arr[:, 5].astype(np.int64),
                  outlier_gt=outlier)
    ms.part_gt = arr[:, 6].astype(np.int64)
    return ms, warnings


# ---------------------------------------------------------------- whole scene

@dataclass
class SynthScene:
    spec: SceneSpec
    seed: int
    s0: np.ndarray
    s1: np.ndarray
    values0: np.ndarray
    values1: np.ndarray
    frames: dict
    masks: dict
    matches: MatchSet
    warnings: list = field(default_factory=list)

    @property
    def joints(self) -> list:
        return gt_joints(self.spec, self.values0, self.values1)

    def values(self, state: int) -> np.ndarray:
        return self.values0 if state == 0 else self.values1


def generate_scene(spec: SceneSpec, seed: int | None = None, n_per_part: int = 100,
                   outlier_rate: float = 0.1, dropout_rate: float = 0.0,
                   n_train: int | None = None, n_test: int | None = None) -> SynthScene:
    seed = spec.seed if seed is None else seed
    s0, s1 = sample_states(spec, seed)
    v0, v1 = joint_values(spec, s0), joint_values(spec, s1)
    frames = {0: render_views(spec, v0, 0, seed, n_train, n_test),
              1: render_views(spec, v1, 1, seed, n_train, n_test)}
    warnings = []
    for st in (0, 1):
        for k in validate_visibility(frames[st], spec.n_parts):
            warnings.append(f"state {st}: part {k} covers >=1% of pixels in fewer than 3 training views")
    masks = {st: permute_labels(frames[st], dropout_rate, seed) for st in (0, 1)}
    matches, mw = make_correspondences(spec, v0, v1, frames[0], frames[1], n_per_part,
                                       outlier_rate, seed)
    for w in warnings:
        logger.warning(w)
    return SynthScene(spec, seed, s0, s1, v0, v1, frames, masks, matches, warnings + mw)
