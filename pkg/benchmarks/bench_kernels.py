"""Compiled vs numpy kernels on inputs taken from a synthetic cabinet scene.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time of each kernel under both backends and the speedup.
Outputs of the two backends are also compared so a fast but wrong build shows up.
"""

import argparse
import timeit

import numpy as np

from artfield import _pykernels as py
from artfield import synth
from artfield.trainer import init_model
from artfield.config import TrainConfig

try:
    from artfield import _ckernels as cy
except ImportError:
    cy = None


def make_cases():
    spec = synth.cabinet_spec(0)
    s0, _ = synth.sample_states(spec, 0)
    v = synth.joint_values(spec, s0)
    cam = synth.sample_camera(spec, 0, 0, 0)
    frame = synth.render(spec, v, cam)

    verts, local, _, _ = synth.scene_triangles(spec, v)
    T = len(verts)
    Xc = cam.to_camera(verts.reshape(-1, 3)).reshape(T, 3, 3)
    uv, _ = cam.project_points(verts.reshape(-1, 3))
    raster = (uv.reshape(T, 3, 2), 1.0 / Xc[:, :, 2], local, cam.height, cam.width)

    model = init_model([frame], spec.n_parts, TrainConfig(n_points=5000), 0)
    X = model.centers
    uvp, z = cam.project_points(X)
    splat = (uvp[:, 0], uvp[:, 1], z, np.full(len(X), 0.75), model.assignment().astype(np.int32) + 1,
             cam.height, cam.width)

    rng = np.random.default_rng(0)
    P = rng.uniform(0, 0.3, size=(2000, 3))
    radius = (P, P + 0.01 * rng.normal(size=P.shape), 0.02)

    # initial primitives sit exactly on pixel centers with image colors, where the
    # residual has kinks and either backend may pick a different subgradient
    Xj = X + 1e-4 * rng.normal(size=X.shape)
    Cj = np.clip(model.colors + 1e-3 * rng.normal(size=X.shape), 0, 1)
    terms = (Xj, Cj, cam.K, cam.E, frame.invdepth, np.ascontiguousarray(frame.rgb),
             frame.labels, 0.8, 0.5, 0.01, False)
    return {"rasterize": raster, "splat_labels": splat, "radius_mean": radius, "frame_terms": terms}


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-9, atol=1e-9)
    return bool(np.isclose(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = make_cases()
    print(f"{'kernel':<14}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}  match")
    for name, inputs in cases.items():
        t_py = min(timeit.repeat(lambda: getattr(py, name)(*inputs), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:<14}{1e3 * t_py:>10.2f}{'n/a':>11}{'':>9}  -")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(cy, name)(*inputs), number=1, repeat=args.repeat))
        ok = same(getattr(py, name)(*inputs), getattr(cy, name)(*inputs))
        print(f"{name:<14}{1e3 * t_py:>10.2f}{1e3 * t_cy:>11.2f}{t_py / t_cy:>8.1f}x  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
