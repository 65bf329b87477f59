"""Cross-view and cross-state consistency of arbitrarily labeled part masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree

from . import kernels
from .correspondence import MatchSet
from .errors import InvalidInputError
from .geom import Camera
from .synth import MaskSet

logger = logging.getLogger(__name__)

DEFAULT_K_VIEWS = 4
DEFAULT_MIN_IOU = 0.3
DEFAULT_OCCLUSION_TOL = 0.05


def reproject_mask(src_labels: np.ndarray, src_depth: np.ndarray, src_cam: Camera, dst_cam: Camera,
                   dst_depth: np.ndarray | None = None,
                   occlusion_tol: float = DEFAULT_OCCLUSION_TOL) -> np.ndarray:
    """Warp a label map into another camera through its depth.

    Masked pixels are lifted to 3D and splatted into the destination with a
    footprint matching the local magnification; the nearest point wins. With
    ``dst_depth`` given, points hidden behind the destination surface by more
    than ``occlusion_tol`` are discarded.
    """
    H, W = dst_cam.height, dst_cam.width
    rows, cols = np.nonzero((src_labels > 0) & (src_depth > 0))
    if len(rows) == 0:
        return np.zeros((H, W), dtype=np.int32)
    zs = src_depth[rows, cols]
    X = src_cam.backproject_points(np.stack([cols, rows], 1).astype(np.float64), zs)
    uv, z = dst_cam.project_points(X)
    keep = np.isfinite(uv[:, 0])
    if dst_depth is not None:
        c = np.clip(np.floor(uv[:, 0] + 0.5), 0, W - 1)
        r = np.clip(np.floor(uv[:, 1] + 0.5), 0, H - 1)
        c = np.where(keep, c, 0).astype(np.intp)
        r = np.where(keep, r, 0).astype(np.intp)
        d = dst_depth[r, c]
        keep &= (d <= 0) | (z < d + occlusion_tol)
    f_src = np.sqrt(src_cam.K[0, 0] * src_cam.K[1, 1])
    f_dst = np.sqrt(dst_cam.K[0, 0] * dst_cam.K[1, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        half = 0.5 * (f_dst / f_src) * zs / z
    half = np.where(keep & np.isfinite(half), half, 0.0)
    u = np.where(keep, uv[:, 0], np.nan)
    v = np.where(keep, uv[:, 1], np.nan)
    _, out = kernels.splat_labels(u, v, np.where(keep, z, -1.0), half,
                                  src_labels[rows, cols].astype(np.int32), H, W)
    return out


def iou_matrix(a: np.ndarray, b: np.ndarray, n_a: int | None = None, n_b: int | None = None) -> np.ndarray:
    """IoU between every label of ``a`` (rows) and of ``b`` (columns); 0 is background."""
    if a.shape != b.shape:
        raise InvalidInputError(f"label maps differ in shape: {a.shape} vs {b.shape}")
    n_a = int(a.max()) if n_a is None else n_a
    n_b = int(b.max()) if n_b is None else n_b
    joint = np.bincount(a.ravel().astype(np.int64) * (n_b + 1) + b.ravel(),
                        minlength=(n_a + 1) * (n_b + 1)).reshape(n_a + 1, n_b + 1)
    inter = joint[1:, 1:].astype(np.float64)
    area_a = joint[1:, :].sum(axis=1)
    area_b = joint[:, 1:].sum(axis=0)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def match_views(S: np.ndarray, min_iou: float = DEFAULT_MIN_IOU) -> list:
    """Maximum-weight one-to-one assignment, then drop pairs under ``min_iou``."""
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        return []
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("IoU matrix has non-finite entries")
    r, c = linear_sum_assignment(S, maximize=True)
    return [(int(i), int(j)) for i, j in zip(r, c) if S[i, j] >= min_iou]


def pair_iou(src: MaskSet, dst: MaskSet, src_depth, dst_depth, src_cam: Camera, dst_cam: Camera,
             occlusion_tol: float = DEFAULT_OCCLUSION_TOL) -> np.ndarray:
    """IoU averaged over both warping directions, rows indexed by ``src`` ids.

    Each direction is scored on co-visible pixels only: where the warped source
    landed and the target sees foreground. Surfaces one view never saw would
    otherwise inflate the union.
    """
    fwd = reproject_mask(src.labels, src_depth, src_cam, dst_cam, dst_depth, occlusion_tol)
    bwd = reproject_mask(dst.labels, dst_depth, dst_cam, src_cam, src_depth, occlusion_tol)
    both = (fwd > 0) & (dst_depth > 0)
    S1 = iou_matrix(fwd * both, dst.labels * both, src.n_masks, dst.n_masks)
    both = (bwd > 0) & (src_depth > 0)
    S2 = iou_matrix(bwd * both, src.labels * both, dst.n_masks, src.n_masks)
    return 0.5 * (S1 + S2.T)


@dataclass
class PartGraph:
    """Mask nodes ``(view, local id)`` joined by accepted matches; components are parts."""

    state: int
    nodes: list
    edges: list
    node_label: dict
    label_maps: dict = field(repr=False, default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def n_labels(self) -> int:
        return max(self.node_label.values(), default=0)

    def global_labels(self, view: int) -> np.ndarray:
        return self.label_maps[view]

    def to_json(self) -> dict:
        return {
            "state": self.state,
            "nodes": [[int(v), int(m), int(self.node_label[(v, m)])] for v, m in self.nodes],
            "edges": [[int(a[0]), int(a[1]), int(b[0]), int(b[1]), round(float(s), 6)]
                      for a, b, s in self.edges],
            "warnings": list(self.warnings),
        }


def nearest_views(centers: np.ndarray, k: int) -> list:
    d = np.linalg.norm(centers[:, None] - centers[None], axis=2)
    np.fill_diagonal(d, np.inf)
    return [list(np.argsort(row, kind="stable")[: min(k, len(row) - 1)]) for row in d]


def view_pairs(centers: np.ndarray, k: int) -> list:
    """Sorted view pairs: each view's ``k`` nearest plus a spanning tree, so the graph is connected."""
    pairs = {(min(a, b), max(a, b)) for a, row in enumerate(nearest_views(centers, k)) for b in row}
    d = np.linalg.norm(centers[:, None] - centers[None], axis=2)
    w = np.where(d > 0, d, 1e-12)  # coincident cameras still need an edge
    np.fill_diagonal(w, 0.0)
    tree = minimum_spanning_tree(w).tocoo()
    pairs.update((min(a, b), max(a, b)) for a, b in zip(tree.row.tolist(), tree.col.tolist()) if a != b)
    return sorted(pairs)


def build_part_graph(masks: list, frames: list, k_views: int = DEFAULT_K_VIEWS,
                     min_iou: float = DEFAULT_MIN_IOU, occlusion_tol: float = DEFAULT_OCCLUSION_TOL,
                     static_label: int | None = None) -> PartGraph:
    """Link view-local masks into global parts.

    ``frames`` supply depth and cameras and must align with ``masks``. Global
    ids are ordered by decreasing total pixel area, so label 1 is the largest
    (static) part unless ``static_label`` names another component (1-based,
    in area order) to move to the front.
    """
    if len(masks) != len(frames):
        raise InvalidInputError("masks and frames must align")
    if len(masks) < 2:
        raise InvalidInputError("need at least two views")
    state = masks[0].state
    warnings = []
    nodes, index, area = [], {}, []
    for vi, m in enumerate(masks):
        counts = np.bincount(m.labels.ravel(), minlength=m.n_masks + 1)
        for lid in range(1, m.n_masks + 1):
            index[(vi, lid)] = len(nodes)
            nodes.append((m.view, lid))
            area.append(int(counts[lid]))
    no_depth = [m.view for m, f in zip(masks, frames) if not np.any(f.depth > 0)]
    if no_depth:
        warnings.append(f"views without valid depth left isolated: {no_depth}")

    centers = np.stack([f.camera.center for f in frames])
    pairs = view_pairs(centers, k_views)
    edges, ei, ej = [], [], []
    view_adj = np.zeros((len(masks), len(masks)), dtype=bool)
    for a, b in pairs:
        fa, fb = frames[a], frames[b]
        if not (np.any(fa.depth > 0) and np.any(fb.depth > 0)):
            continue
        S = pair_iou(masks[a], masks[b], fa.depth, fb.depth, fa.camera, fb.camera, occlusion_tol)
        for i, j in match_views(S, min_iou):
            view_adj[a, b] = view_adj[b, a] = True
            na, nb = index[(a, i + 1)], index[(b, j + 1)]
            edges.append((nodes[na], nodes[nb], float(S[i, j])))
            ei.append(na)
            ej.append(nb)

    anchor = int(np.argmax([m.n_masks for m in masks]))
    n_groups, vcomp = connected_components(coo_matrix(view_adj), directed=False)
    if n_groups > 1:
        lost = [masks[v].view for v in range(len(masks)) if vcomp[v] != vcomp[anchor]]
        warnings.append(f"views not linked to anchor view {masks[anchor].view} by any mask match: {lost}")

    n = len(nodes)
    adj = coo_matrix((np.ones(len(ei)), (ei, ej)), shape=(n, n))
    n_comp, comp = connected_components(adj, directed=False)
    comp_area = np.bincount(comp, weights=area, minlength=n_comp) if n else np.zeros(0)
    order = sorted(range(n_comp), key=lambda c: (-comp_area[c], c))
    if static_label is not None:
        if not 1 <= static_label <= n_comp:
            raise InvalidInputError(f"static label {static_label} out of range 1..{n_comp}")
        order.insert(0, order.pop(static_label - 1))
    rank = {c: r + 1 for r, c in enumerate(order)}
    node_label = {nodes[i]: rank[comp[i]] for i in range(n)}

    for c in range(n_comp):
        members = [nodes[i] for i in np.flatnonzero(comp == c)]
        views = [v for v, _ in members]
        if len(views) != len(set(views)):
            bad = [e for e in edges if node_label[e[0]] == rank[c]]
            warnings.append(f"component {rank[c]} holds several masks of one view; "
                            f"conflicting edges: {[(e[0], e[1]) for e in bad]}")
    for w in warnings:
        logger.warning(w)

    label_maps = {}
    for vi, m in enumerate(masks):
        lut = np.zeros(m.n_masks + 1, dtype=np.int32)
        for lid in range(1, m.n_masks + 1):
            lut[lid] = node_label[(m.view, lid)]
        label_maps[m.view] = lut[m.labels]
    return PartGraph(state, nodes, edges, node_label, label_maps, warnings)


def _label_at(label_map: np.ndarray, pix: np.ndarray) -> np.ndarray:
    H, W = label_map.shape
    c = np.clip(np.floor(pix[:, 0] + 0.5), 0, W - 1).astype(np.intp)
    r = np.clip(np.floor(pix[:, 1] + 0.5), 0, H - 1).astype(np.intp)
    return label_map[r, c]


def align_states(g0: PartGraph, g1: PartGraph, matches: MatchSet):
    """Map each state-1 global label to the state-0 label with the most match votes.

    Returns ``(mapping, votes, warnings)``; ``votes[a, b]`` counts matches
    landing on state-1 label ``a`` and state-0 label ``b``.
    """
    n0, n1 = g0.n_labels, g1.n_labels
    votes = np.zeros((n1 + 1, n0 + 1), dtype=np.int64)
    for v0 in np.unique(matches.view0):
        for v1 in np.unique(matches.view1[matches.view0 == v0]):
            sel = (matches.view0 == v0) & (matches.view1 == v1)
            if int(v0) not in g0.label_maps or int(v1) not in g1.label_maps:
                continue
            l0 = _label_at(g0.label_maps[int(v0)], matches.pix0[sel])
            l1 = _label_at(g1.label_maps[int(v1)], matches.pix1[sel])
            np.add.at(votes, (l1, l0), 1)
    mapping, warnings = {}, []
    for a in range(1, n1 + 1):
        row = votes[a, 1:]
        if row.sum() == 0:
            warnings.append(f"state-1 label {a} received no correspondence votes; unmapped")
            continue
        mapping[a] = int(np.argmax(row)) + 1
    targets = list(mapping.values())
    dup = sorted({t for t in targets if targets.count(t) > 1})
    if dup:
        warnings.append(f"several state-1 labels map onto state-0 labels {dup}")
    for w in warnings:
        logger.warning(w)
    return mapping, votes, warnings


def relabel(label_map: np.ndarray, mapping: dict) -> np.ndarray:
    """Apply a label mapping; labels without an entry become background."""
    lut = np.zeros(int(label_map.max()) + 1, dtype=np.int32)
    for a, b in mapping.items():
        if a < len(lut):
            lut[a] = b
    return lut[label_map]
