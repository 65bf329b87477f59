import numpy as np
import pytest

from artfield import _pykernels as py
from artfield import kernels, selftest, synth

try:
    from artfield import _ckernels as cy
except ImportError:
    cy = None

needs_compiled = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def close(a, b) -> bool:
    if isinstance(a, tuple):
        return all(close(x, y) for x, y in zip(a, b))
    return np.asarray(a).shape == np.asarray(b).shape and np.allclose(a, b, rtol=1e-9, atol=1e-9)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
    if cy is not None:
        assert kernels.BACKEND == "cython"


@needs_compiled
def test_rasterize_backends_agree():
    rng = np.random.default_rng(0)
    uv = rng.uniform(-5, 45, size=(30, 3, 2))
    invz = rng.uniform(0.5, 2.0, size=(30, 3))
    attr = rng.normal(size=(30, 3, 2))
    assert close(py.rasterize(uv, invz, attr, 40, 40), cy.rasterize(uv, invz, attr, 40, 40))


@needs_compiled
def test_splat_backends_agree():
    rng = np.random.default_rng(1)
    n = 400
    args = (rng.uniform(-2, 42, n), rng.uniform(-2, 42, n), rng.uniform(0.5, 3, n),
            rng.uniform(0, 2, n), rng.integers(1, 5, n).astype(np.int32), 40, 40)
    assert close(py.splat_labels(*args), cy.splat_labels(*args))


def test_radius_mean_matches_brute_force():
    rng = np.random.default_rng(2)
    P = rng.uniform(0, 0.1, size=(300, 3))
    Q = rng.normal(size=(300, 3))
    d = np.linalg.norm(P[:, None] - P[None], axis=2)
    nb = d < 0.02
    want = (nb @ Q) / nb.sum(1, keepdims=True)
    for impl in [py] + ([cy] if cy is not None else []):
        means, counts = impl.radius_mean(P, Q, 0.02)
        assert np.array_equal(counts, nb.sum(1)) and np.allclose(means, want, atol=1e-12)


@needs_compiled
def test_frame_terms_backends_agree(door_scene):
    f = door_scene.frames[0][0]
    rng = np.random.default_rng(3)
    fg = np.argwhere(f.depth > 0)[::7]
    X = f.camera.backproject_points(fg[:, ::-1].astype(float), f.depth[fg[:, 0], fg[:, 1]])
    # off the pixel centers and off the image colors, away from kinks of the L1 residual
    X = X + 1e-3 * rng.normal(size=X.shape)
    C = np.clip(f.rgb[fg[:, 0], fg[:, 1]] + 0.01 * rng.normal(size=X.shape), 0, 1)
    for front_only in (False, True):
        args = (X, C, f.camera.K, f.camera.E, f.invdepth, np.ascontiguousarray(f.rgb), f.labels,
                0.8, 0.5, 0.01, front_only)
        a, b = py.frame_terms(*args), cy.frame_terms(*args)
        assert close(a, b)
        assert a[3].sum() > 0.5 * len(X)


def test_render_background_is_empty(door_scene):
    for f in door_scene.frames[0][:4]:
        bg = f.labels == 0
        assert bg.any() and np.all(f.depth[bg] == 0) and np.all(f.depth[~bg] > 0)


def test_rendered_depth_matches_ray_box_oracle():
    assert selftest.check_raybox(0, 1000) < 1e-5
    assert selftest.check_raybox(3, 1000) < 1e-5


def test_ray_box_oracle_on_cabinet():
    spec = synth.cabinet_spec(1)
    s0, _ = synth.sample_states(spec, 1)
    v = synth.joint_values(spec, s0)
    cam = synth.sample_camera(spec, 0, 2, 1)
    f = synth.render(spec, v, cam)
    fg = np.argwhere(f.depth > 0)[::5][:1000]
    z = selftest.raybox_depth(spec, v, cam, fg[:, ::-1].astype(float))
    assert np.abs(z - f.depth[fg[:, 0], fg[:, 1]]).max() < 1e-5
