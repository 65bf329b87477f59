"""Finite-difference and oracle checks runnable from an installed package."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import gradcheck, kernels, synth
from .geom import Camera


def raybox_depth(spec: synth.SceneSpec, values, camera: Camera, pixels: np.ndarray) -> np.ndarray:
    """Camera-z depth of the first box hit along each pixel ray (0 on a miss), by slab tests."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    eye = camera.center
    d_cam = np.c_[pixels, np.ones(len(pixels))] @ np.linalg.inv(camera.K).T
    d_world = d_cam @ camera.E[:3, :3]
    best = np.full(len(pixels), np.inf)
    for p, pose in zip(spec.all_parts, synth.part_poses(spec, values)):
        Rinv = pose.R.T
        o = Rinv @ (eye - pose.t) - np.asarray(p.center)
        d = d_world @ Rinv.T
        h = np.asarray(p.dims) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h - o) / d
            t2 = (h - o) / d
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (tmax >= tmin) & (tmin > 0)
        best = np.where(hit & (tmin < best), tmin, best)
    # rays are scaled so that their camera-z component is 1, hence t is depth
    return np.where(np.isfinite(best), best, 0.0)


def brute_force_assignment(S: np.ndarray) -> float:
    """Best total score of a one-to-one assignment by enumerating permutations."""
    n, m = S.shape
    if n > m:
        return brute_force_assignment(S.T)
    return max(sum(S[i, c] for i, c in enumerate(cols)) for cols in itertools.permutations(range(m), n))


def check_raybox(seed: int = 0, n_pixels: int = 1000) -> float:
    """Largest rendered-vs-analytic depth gap on foreground pixels of a door view."""
    spec = synth.door_spec(seed)
    s0, _ = synth.sample_states(spec, seed)
    v = synth.joint_values(spec, s0)
    cam = synth.sample_camera(spec, 0, 0, seed)
    f = synth.render(spec, v, cam)
    rng = np.random.default_rng([seed, 31])
    fg = np.argwhere(f.depth > 0)
    pick = fg[rng.choice(len(fg), size=min(n_pixels, len(fg)), replace=False)]
    pix = np.stack([pick[:, 1], pick[:, 0]], 1).astype(np.float64)
    oracle = raybox_depth(spec, v, cam, pix)
    return float(np.max(np.abs(oracle - f.depth[pick[:, 0], pick[:, 1]])))


def check_hungarian(seed: int = 0, n_trials: int = 200) -> int:
    """Number of random matrices (up to 6x6) where the solver misses the brute-force optimum."""
    rng = np.random.default_rng([seed, 32])
    bad = 0
    for _ in range(n_trials):
        S = rng.uniform(size=(int(rng.integers(1, 7)), int(rng.integers(1, 7))))
        r, c = linear_sum_assignment(S, maximize=True)
        if not math.isclose(S[r, c].sum(), brute_force_assignment(S), rel_tol=0, abs_tol=1e-12):
            bad += 1
    return bad


def run(n_instances: int = 50, seed: int = 0) -> list:
    """``(name, passed, detail)`` rows."""
    rows = []
    for name, err in gradcheck.run_all(n_instances, seed).items():
        rows.append((f"gradient/{name}", err < gradcheck.DEFAULT_TOL, f"max rel err {err:.2e}"))
    gap = check_raybox(seed)
    # depth maps are stored as float32
    rows.append(("oracle/ray-box depth", gap < 1e-5, f"max |dz| {gap:.2e} m"))
    bad = check_hungarian(seed)
    rows.append(("oracle/hungarian", bad == 0, f"{bad} mismatches"))
    rows.append(("backend", True, kernels.BACKEND))
    return rows
