import numpy as np
import pytest

from artfield import synth
from artfield.correspondence import lift_match_set
from artfield.errors import InvalidInputError
from artfield.geom import REVOLUTE


def test_states_lie_in_benchmark_intervals():
    for seed in range(20):
        s0, s1 = synth.sample_states(synth.grid_spec(20, seed), seed)
        assert np.all((s0 >= 0.65) & (s0 <= 0.75)) and np.all((s1 >= 0.35) & (s1 <= 0.45))


def test_states_are_seed_deterministic():
    spec = synth.cabinet_spec(0)
    a, b = synth.sample_states(spec, 5), synth.sample_states(spec, 5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], synth.sample_states(spec, 6)[0])


def test_degenerate_limits_give_equal_states():
    spec = synth.static_spec(0)
    s0, s1 = synth.sample_states(spec, 0)
    assert np.array_equal(synth.joint_values(spec, s0), synth.joint_values(spec, s1))


def test_generation_is_deterministic():
    a = synth.generate_scene(synth.door_spec(0), n_train=3, n_test=0, n_per_part=20)
    b = synth.generate_scene(synth.door_spec(0), n_train=3, n_test=0, n_per_part=20)
    for fa, fb in zip(a.frames[1], b.frames[1]):
        assert np.array_equal(fa.rgb, fb.rgb) and np.array_equal(fa.depth, fb.depth)
    assert np.array_equal(a.matches.pix1, b.matches.pix1)
    assert all(np.array_equal(x.labels, y.labels) for x, y in zip(a.masks[0], b.masks[0]))


def test_default_view_counts(door_scene):
    spec = door_scene.spec
    for st in (0, 1):
        frames = door_scene.frames[st]
        assert sum(f.split == "train" for f in frames) == 24
        assert sum(f.split == "test" for f in frames) == 6
        assert all(f.rgb.shape == (160, 160, 3) for f in frames)
    assert spec.image_size == 160


def test_gt_joints_follow_the_spec(cabinet_scene):
    joints = cabinet_scene.joints
    assert [j.kind for j in joints] == ["revolute", "revolute", "prismatic", "prismatic"]
    for j, p, v0, v1 in zip(joints, cabinet_scene.spec.parts, cabinet_scene.values0, cabinet_scene.values1):
        assert np.isclose(j.magnitude, abs(v1 - v0))
        if j.kind == REVOLUTE:
            assert abs(j.axis_origin @ j.axis_dir) < 1e-12


def test_motions_map_state0_surface_to_state1(cabinet_scene):
    spec = cabinet_scene.spec
    rng = np.random.default_rng(0)
    X0, part = synth.sample_surface(spec, cabinet_scene.values0, 2000, rng)
    motions = synth.gt_motions(spec, cabinet_scene.values0, cabinet_scene.values1)
    X1 = np.stack([motions[k].apply(x[None])[0] for x, k in zip(X0, part)])
    d = synth.box_distances(spec, cabinet_scene.values1, X1)
    assert d[np.arange(len(X1)), part].max() < 1e-9


def test_identity_permutation_draw(door_scene):
    masks = synth.permute_labels(door_scene.frames[0][:5], seed=None)
    for m, f in zip(masks, door_scene.frames[0]):
        assert np.array_equal(m.labels, f.labels)


def test_permutation_is_recorded(cabinet_scene):
    for m, f in zip(cabinet_scene.masks[0], cabinet_scene.frames[0]):
        lut = np.zeros(m.n_masks + 1, dtype=np.int64)
        for local, g in m.local_to_global.items():
            lut[local] = g
        assert np.array_equal(lut[m.labels], f.labels)


def test_full_dropout_empties_masks(door_scene):
    for m in synth.permute_labels(door_scene.frames[0], dropout_rate=1.0, seed=1):
        assert not m.labels.any() and m.n_masks == 0


def test_inlier_matches_follow_gt_motion(cabinet_scene):
    ms = cabinet_scene.matches
    lifted, n_drop = lift_match_set(ms, cabinet_scene.frames[0], cabinet_scene.frames[1])
    assert n_drop == 0
    motions = synth.gt_motions(cabinet_scene.spec, cabinet_scene.values0, cabinet_scene.values1)
    inl = np.flatnonzero(~lifted.outlier_gt)
    err = [np.linalg.norm(motions[lifted.part_gt[i]].apply(lifted.p3d0[i][None])[0] - lifted.p3d1[i])
           for i in inl]
    assert max(err) < 1e-6
    for i in np.flatnonzero(lifted.outlier_gt):
        true_end = motions[lifted.part_gt[i]].apply(lifted.p3d0[i][None])[0]
        assert np.linalg.norm(true_end - lifted.p3d1[i]) > 0.09


@pytest.mark.parametrize("rate", [0.0, 0.1, 0.25])
def test_outlier_flag_count(door_scene, rate):
    spec = door_scene.spec
    ms, _ = synth.make_correspondences(spec, door_scene.values0, door_scene.values1,
                                       door_scene.frames[0], door_scene.frames[1], 50, rate, 0)
    assert ms.outlier_gt.sum() == round(rate * len(ms))
    assert len(ms) == 2 * 50


def test_spec_validation():
    spec = synth.door_spec(0).to_dict()
    spec["parts"] = []
    with pytest.raises(InvalidInputError):
        synth.SceneSpec.from_dict(spec)
    spec = synth.door_spec(0).to_dict()
    spec["parts"][0]["joint"]["kind"] = "screw"
    with pytest.raises(InvalidInputError):
        synth.SceneSpec.from_dict(spec)


def test_spec_dict_round_trip():
    spec = synth.cabinet_spec(2)
    assert synth.SceneSpec.from_dict(spec.to_dict()) == spec


def test_builtin_part_counts():
    counts = {name: f(0).n_parts for name, f in synth.BUILTIN_SPECS.items()}
    assert counts == {"door": 2, "cabinet5": 5, "grid10": 10, "grid20": 20, "static": 2}
