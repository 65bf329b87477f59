"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is unavailable or ``ARTFIELD_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import numpy as np


def rasterize(tri_uv, tri_invz, tri_attr, height, width):
    """Z-buffer triangles given in pixel space with per-vertex inverse depth.

    Attributes are interpolated perspective-correctly. Returns
    ``(depth, tri_index, attr)``; background has depth 0 and index -1.
    """
    tri_uv = np.ascontiguousarray(tri_uv, dtype=np.float64)
    tri_invz = np.ascontiguousarray(tri_invz, dtype=np.float64)
    tri_attr = np.ascontiguousarray(tri_attr, dtype=np.float64)
    n_attr = tri_attr.shape[2]
    zbuf = np.full((height, width), np.inf)
    index = np.full((height, width), -1, dtype=np.int32)
    attr = np.zeros((height, width, n_attr))
    for t in range(len(tri_uv)):
        (x0, y0), (x1, y1), (x2, y2) = tri_uv[t]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0 or not np.all(tri_invz[t] > 0):
            continue
        c0 = max(int(np.ceil(min(x0, x1, x2))), 0)
        c1 = min(int(np.floor(max(x0, x1, x2))), width - 1)
        r0 = max(int(np.ceil(min(y0, y1, y2))), 0)
        r1 = min(int(np.floor(max(y0, y1, y2))), height - 1)
        if c0 > c1 or r0 > r1:
            continue
        px, py = np.meshgrid(np.arange(c0, c1 + 1, dtype=np.float64),
                             np.arange(r0, r1 + 1, dtype=np.float64))
        b0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
        b1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
        b2 = 1.0 - b0 - b1
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not inside.any():
            continue
        iz = b0 * tri_invz[t, 0] + b1 * tri_invz[t, 1] + b2 * tri_invz[t, 2]
        z = 1.0 / iz
        rows = py.astype(np.intp)
        cols = px.astype(np.intp)
        closer = inside & (z < zbuf[rows, cols])
        if not closer.any():
            continue
        rr, cc = rows[closer], cols[closer]
        zbuf[rr, cc] = z[closer]
        index[rr, cc] = t
        w0, w1, w2 = (b0[closer] * tri_invz[t, 0], b1[closer] * tri_invz[t, 1],
                      b2[closer] * tri_invz[t, 2])
        a = (w0[:, None] * tri_attr[t, 0] + w1[:, None] * tri_attr[t, 1]
             + w2[:, None] * tri_attr[t, 2]) / iz[closer][:, None]
        attr[rr, cc] = a
    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    return depth, index, attr


def splat_labels(u, v, z, half, labels, height, width):
    """Nearest-wins splat of labeled points with square footprints of half-size ``half``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    half = np.asarray(half, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int32)
    zbuf = np.full((height, width), np.inf)
    out = np.zeros((height, width), dtype=np.int32)
    ok = np.isfinite(u) & np.isfinite(v) & (z > 1e-6)
    for i in np.flatnonzero(ok):
        nc, nr = int(np.floor(u[i] + 0.5)), int(np.floor(v[i] + 0.5))
        c0 = min(int(np.ceil(u[i] - half[i])), nc)
        c1 = max(int(np.floor(u[i] + half[i])), nc)
        r0 = min(int(np.ceil(v[i] - half[i])), nr)
        r1 = max(int(np.floor(v[i] + half[i])), nr)
        c0, c1 = max(c0, 0), min(c1, width - 1)
        r0, r1 = max(r0, 0), min(r1, height - 1)
        if c0 > c1 or r0 > r1:
            continue
        block = zbuf[r0:r1 + 1, c0:c1 + 1]
        closer = z[i] < block
        block[closer] = z[i]
        out[r0:r1 + 1, c0:c1 + 1][closer] = labels[i]
    return zbuf, out


def radius_mean(P, Q, r):
    """For each ``P[i]``, mean of ``Q[j]`` over all ``j`` with ``|P[j] - P[i]| < r``.

    Returns ``(means, counts)``; every point is its own neighbor.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    n = len(P)
    cells = np.floor(P / r).astype(np.int64)
    buckets: dict[tuple, list] = {}
    for i, c in enumerate(map(tuple, cells)):
        buckets.setdefault(c, []).append(i)
    buckets = {k: np.array(v) for k, v in buckets.items()}
    means = np.zeros((n, 3))
    counts = np.zeros(n, dtype=np.int64)
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    for i in range(n):
        cx, cy, cz = cells[i]
        cand = [buckets[k] for k in ((cx + a, cy + b, cz + c) for a, b, c in offsets) if k in buckets]
        cand = np.sort(np.concatenate(cand))
        d2 = np.sum((P[cand] - P[i]) ** 2, axis=1)
        nb = cand[d2 < r * r]
        counts[i] = len(nb)
        means[i] = Q[nb].sum(axis=0) / len(nb)
    return means, counts


def frame_terms(X, colors, K, E, invdepth, rgb, labels, w_color, w_depth, delta_vis, front_only):
    """Point-projective color/depth residuals of primitives against one frame.

    ``invdepth`` holds ``1/D`` on foreground pixels and 0 on background. A
    primitive is visible when its projection has four foreground neighbors and
    passes the depth test (``|z - D| < delta`` or, with ``front_only``,
    ``z - D < delta``). Depth is sampled by bilinear interpolation of inverse
    depth, which is exact on planar surfaces.

    Returns ``(value, gX, gC, visible, label, sem_visible)``: per-point loss
    value and its gradients w.r.t. the point and its color, the rgbd visibility
    mask, the label at the nearest pixel and the two-sided visibility mask used
    for segmentation.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    H, W = invdepth.shape
    R, t = E[:3, :3], E[:3, 3]
    Xc = X @ R.T + t
    z = Xc[:, 2]
    fx, s, cx = K[0, 0], K[0, 1], K[0, 2]
    fy, cy = K[1, 1], K[1, 2]
    value = np.zeros(n)
    gX = np.zeros((n, 3))
    gC = np.zeros((n, 3))
    visible = np.zeros(n, dtype=np.uint8)
    sem_visible = np.zeros(n, dtype=np.uint8)
    label = np.zeros(n, dtype=np.int32)

    front = z > 1e-6
    zs = np.where(front, z, 1.0)
    u = fx * Xc[:, 0] / zs + s * Xc[:, 1] / zs + cx
    v = fy * Xc[:, 1] / zs + cy
    inb = front & (u >= 0) & (u < W - 1) & (v >= 0) & (v < H - 1)
    idx = np.flatnonzero(inb)
    if len(idx) == 0:
        return value, gX, gC, visible, label, sem_visible
    ui, vi = u[idx], v[idx]
    j0 = np.floor(ui).astype(np.intp)
    i0 = np.floor(vi).astype(np.intp)
    a = ui - j0
    b = vi - i0
    s00 = invdepth[i0, j0]
    s01 = invdepth[i0, j0 + 1]
    s10 = invdepth[i0 + 1, j0]
    s11 = invdepth[i0 + 1, j0 + 1]
    fg = (s00 > 0) & (s01 > 0) & (s10 > 0) & (s11 > 0)
    sb = (1 - a) * (1 - b) * s00 + a * (1 - b) * s01 + (1 - a) * b * s10 + a * b * s11
    Dt = np.where(fg, 1.0 / np.where(fg, sb, 1.0), 0.0)
    res = z[idx] - Dt
    two = fg & (np.abs(res) < delta_vis)
    vis = fg & (res < delta_vis) if front_only else two
    lab = labels[np.floor(vi + 0.5).astype(np.intp), np.floor(ui + 0.5).astype(np.intp)]
    semv = two & (lab > 0)
    sem_visible[idx] = semv
    label[idx] = np.where(semv, lab, 0)
    k = np.flatnonzero(vis)
    if len(k) == 0:
        return value, gX, gC, visible, label, sem_visible
    p = idx[k]
    visible[p] = 1
    a, b, i0, j0 = a[k], b[k], i0[k], j0[k]
    zz, xc, yc = z[p], Xc[p, 0], Xc[p, 1]

    ds_da = (1 - b) * (s01[k] - s00[k]) + b * (s11[k] - s10[k])
    ds_db = (1 - a) * (s10[k] - s00[k]) + a * (s11[k] - s01[k])
    Dk = Dt[k]
    dD_da = -Dk * Dk * ds_da
    dD_db = -Dk * Dk * ds_db
    r = res[k]
    sr = np.sign(r)
    value[p] = w_depth * np.abs(r)
    # d(u, v)/d(camera point)
    du = np.stack([fx / zz, s / zz, -(fx * xc + s * yc) / (zz * zz)], axis=1)
    dv = np.stack([np.zeros_like(zz), fy / zz, -fy * yc / (zz * zz)], axis=1)
    dz = np.zeros((len(k), 3))
    dz[:, 2] = 1.0
    g_cam = (w_depth * sr)[:, None] * (dz - dD_da[:, None] * du - dD_db[:, None] * dv)

    c00 = rgb[i0, j0]
    c01 = rgb[i0, j0 + 1]
    c10 = rgb[i0 + 1, j0]
    c11 = rgb[i0 + 1, j0 + 1]
    aa, bb = a[:, None], b[:, None]
    I = (1 - aa) * (1 - bb) * c00 + aa * (1 - bb) * c01 + (1 - aa) * bb * c10 + aa * bb * c11
    dI_da = (1 - bb) * (c01 - c00) + bb * (c11 - c10)
    dI_db = (1 - aa) * (c10 - c00) + aa * (c11 - c01)
    e = colors[p] - I
    se = np.sign(e)
    value[p] += w_color * np.abs(e).sum(axis=1)
    gC[p] = w_color * se
    ga = -w_color * np.sum(se * dI_da, axis=1)
    gb = -w_color * np.sum(se * dI_db, axis=1)
    g_cam += ga[:, None] * du + gb[:, None] * dv
    gX[p] = g_cam @ R
    return value, gX, gC, visible, label, sem_visible
