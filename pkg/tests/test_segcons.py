import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from artfield import segcons, selftest, synth
from artfield.correspondence import MatchSet
from artfield.geom import Camera
from artfield.segcons import (PartGraph, align_states, build_part_graph, iou_matrix, match_views,
                              reproject_mask)
from artfield.synth import MaskSet


def test_reproject_into_same_camera_is_identity(door_scene):
    f = door_scene.frames[0][0]
    out = reproject_mask(f.labels, f.depth, f.camera, f.camera)
    valid = f.depth > 0
    assert np.array_equal(out[valid], f.labels[valid])


def test_reproject_empty_mask(door_scene):
    f = door_scene.frames[0][0]
    out = reproject_mask(np.zeros_like(f.labels), f.depth, f.camera, f.camera)
    assert out.shape == f.labels.shape and not out.any()


def test_reprojected_face_matches_direct_render():
    # closed door: its front face is seen head-on from both cameras
    spec, v = synth.door_spec(0), np.zeros(1)
    a = synth.render(spec, v, Camera.look_at([0.3, 0.2, 1.6], [0, 0, 0], [0, 1, 0], 40, 160, 160))
    b = synth.render(spec, v, Camera.look_at([-0.2, 0.35, 1.7], [0, 0, 0], [0, 1, 0], 40, 160, 160))
    front = np.bincount(a.face_id[a.labels == 2]).argmax()
    src = (a.face_id == front).astype(np.int32)
    dst = (b.face_id == front).astype(np.int32)
    assert src.sum() > 500 and dst.sum() > 500
    out = reproject_mask(src, a.depth, a.camera, b.camera, b.depth)
    assert iou_matrix(out, dst, 1, 1)[0, 0] > 0.95


def test_iou_examples():
    a = np.zeros((4, 4), dtype=np.int32)
    b = np.zeros((4, 4), dtype=np.int32)
    a[:2, :2] = 1
    b[2:, 2:] = 1
    assert iou_matrix(a, b)[0, 0] == 0.0
    assert iou_matrix(a, a)[0, 0] == 1.0
    c = np.zeros((4, 4), dtype=np.int32)
    c[:2, 1:3] = 1  # shares half of a's pixels
    assert iou_matrix(a, c)[0, 0] == pytest.approx(1 / 3, abs=1e-15)


def test_iou_transpose_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.integers(0, 4, size=(20, 20)).astype(np.int32)
        b = rng.integers(0, 5, size=(20, 20)).astype(np.int32)
        assert np.array_equal(iou_matrix(a, b), iou_matrix(b, a).T)


def test_match_views_examples():
    assert match_views(np.diag([0.9, 0.8])) == [(0, 0), (1, 1)]
    assert match_views(np.array([[0.1, 0.9], [0.8, 0.2]])) == [(0, 1), (1, 0)]
    assert match_views(np.full((3, 3), 0.2), min_iou=0.3) == []
    assert match_views(np.zeros((0, 2))) == []


def test_hungarian_matches_exhaustive_search():
    assert selftest.check_hungarian(0, 300) == 0
    rng = np.random.default_rng(1)
    for _ in range(100):
        S = rng.uniform(size=(int(rng.integers(1, 7)), int(rng.integers(1, 7))))
        got = sum(S[i, j] for i, j in match_views(S, 0.0))
        assert got == pytest.approx(selftest.brute_force_assignment(S), abs=1e-12)


def graph_ari(graph, frames) -> float:
    pred = np.concatenate([graph.global_labels(f.view)[f.labels > 0] for f in frames])
    true = np.concatenate([f.labels[f.labels > 0] for f in frames])
    return adjusted_rand_score(true, pred)


def test_permuted_views_recover_partition(three_part_scene):
    frames = three_part_scene.frames[0]
    g = build_part_graph(three_part_scene.masks[0], frames)
    assert g.n_labels == 3 and not g.warnings
    assert graph_ari(g, frames) >= 0.99


@pytest.mark.parametrize("state", [0, 1])
def test_cabinet_partition_recovered(cabinet_scene, state):
    frames = [f for f in cabinet_scene.frames[state] if f.split == "train"]
    masks = cabinet_scene.masks[state][:len(frames)]
    g = build_part_graph(masks, frames)
    assert g.n_labels == 5
    assert graph_ari(g, frames) >= 0.99
    # largest component is the static body
    body = np.concatenate([g.global_labels(f.view)[f.labels == 1] for f in frames])
    assert np.bincount(body).argmax() == 1


def test_graph_invariant_to_local_relabeling(three_part_scene):
    frames = three_part_scene.frames[0]
    a = build_part_graph(synth.permute_labels(frames, seed=11), frames)
    b = build_part_graph(synth.permute_labels(frames, seed=12), frames)
    for f in frames:
        la, lb = a.global_labels(f.view), b.global_labels(f.view)
        assert np.array_equal(la, lb)


def test_single_part_gives_one_component(three_part_scene):
    frames = three_part_scene.frames[0]
    masks = [MaskSet(f.view, (f.labels > 0).astype(np.int32), 0, {1: 1}) for f in frames]
    g = build_part_graph(masks, frames)
    assert g.n_labels == 1


def test_disjoint_views_are_reported(door_scene):
    spec, v = door_scene.spec, door_scene.values0
    front = Camera.look_at([0, 0.3, 1.8], [0, 0, 0], [0, 1, 0], 40, 160, 160)
    back = Camera.look_at([0, 0.3, -1.8], [0, 0, 0], [0, 1, 0], 40, 160, 160)
    frames = [synth.render(spec, v, front, view=0), synth.render(spec, v, back, view=1)]
    masks = synth.permute_labels(frames, seed=0)
    g = build_part_graph(masks, frames, k_views=1)
    assert g.n_labels == sum(m.n_masks for m in masks)
    assert any("not linked" in w for w in g.warnings)
    body = [g.global_labels(f.view)[f.labels == 1] for f in frames]
    assert len(set(np.unique(body[0])) | set(np.unique(body[1]))) == 2


def test_view_without_depth_is_isolated(three_part_scene):
    frames = list(three_part_scene.frames[0])
    masks = list(three_part_scene.masks[0])
    f = frames[3]
    frames[3] = synth.Frame(f.rgb, np.zeros_like(f.depth), f.labels, f.camera, f.state, f.view)
    g = build_part_graph(masks, frames)
    assert any("without valid depth" in w for w in g.warnings)
    assert g.n_labels == 3 + masks[3].n_masks


def test_view_pairs_connect_far_clusters():
    centers = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 0, 0], [5.1, 0, 0]], dtype=float)
    pairs = segcons.view_pairs(centers, 1)
    linked = {0}
    for _ in range(5):
        linked |= {b for a, b in pairs if a in linked} | {a for a, b in pairs if b in linked}
    assert linked == set(range(5))


def toy_graph(state: int, label_map: np.ndarray) -> PartGraph:
    labels = sorted(int(x) for x in np.unique(label_map) if x > 0)
    nodes = [(0, k) for k in labels]
    return PartGraph(state, nodes, [], {n: n[1] for n in nodes}, {0: label_map})


def toy_matches(pix0, pix1) -> MatchSet:
    return MatchSet(pix0, 0, pix1, 0)


def test_align_all_matches_on_one_part():
    m = np.zeros((10, 10), dtype=np.int32)
    m[:, :5], m[:, 5:] = 1, 2
    pix = np.array([[7.0, r] for r in range(10)])
    mapping, votes, warnings = align_states(toy_graph(0, m), toy_graph(1, m), toy_matches(pix, pix))
    assert mapping == {2: 2}
    assert any("label 1" in w for w in warnings)


def test_align_majority_vote():
    m0 = np.zeros((10, 10), dtype=np.int32)
    m0[:, :5], m0[:, 5:] = 1, 2
    m1 = np.ones((10, 10), dtype=np.int32)
    pix1 = np.array([[2.0, 2.0]] * 43)
    pix0 = np.array([[1.0, 1.0]] * 40 + [[8.0, 8.0]] * 3)
    mapping, votes, _ = align_states(toy_graph(0, m0), toy_graph(1, m1), toy_matches(pix0, pix1))
    assert mapping == {1: 1} and votes[1, 1] == 40 and votes[1, 2] == 3


def test_align_cabinet_states(cabinet_scene):
    graphs = {}
    for st in (0, 1):
        frames = [f for f in cabinet_scene.frames[st] if f.split == "train"]
        graphs[st] = (build_part_graph(cabinet_scene.masks[st][:len(frames)], frames), frames)

    def to_gt(g, frames):
        pred = np.concatenate([g.global_labels(f.view)[f.labels > 0] for f in frames])
        true = np.concatenate([f.labels[f.labels > 0] for f in frames])
        return {k: int(np.bincount(true[pred == k]).argmax()) for k in range(1, g.n_labels + 1)}

    gt0, gt1 = to_gt(*graphs[0]), to_gt(*graphs[1])
    ms = cabinet_scene.matches
    assert len(ms) == 500 and ms.outlier_gt.sum() == 50
    mapping, _, warnings = align_states(graphs[0][0], graphs[1][0], ms)
    assert not warnings
    assert {a: gt0[b] for a, b in mapping.items()} == gt1
