# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``artfield._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs, INFINITY

cnp.import_array()


def rasterize(tri_uv, tri_invz, tri_attr, int height, int width):
    cdef double[:, :, ::1] uv = np.ascontiguousarray(tri_uv, dtype=np.float64)
    cdef double[:, ::1] iz = np.ascontiguousarray(tri_invz, dtype=np.float64)
    cdef double[:, :, ::1] at = np.ascontiguousarray(tri_attr, dtype=np.float64)
    cdef Py_ssize_t n_tri = uv.shape[0], n_attr = at.shape[2]
    zbuf_arr = np.full((height, width), np.inf)
    index_arr = np.full((height, width), -1, dtype=np.int32)
    attr_arr = np.zeros((height, width, n_attr))
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef int[:, ::1] index = index_arr
    cdef double[:, :, ::1] attr = attr_arr
    cdef Py_ssize_t t, r, c, k
    cdef double x0, y0, x1, y1, x2, y2, area, b0, b1, b2, izp, z, px, py
    cdef int c0, c1, r0, r1
    for t in range(n_tri):
        x0 = uv[t, 0, 0]; y0 = uv[t, 0, 1]
        x1 = uv[t, 1, 0]; y1 = uv[t, 1, 1]
        x2 = uv[t, 2, 0]; y2 = uv[t, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0 or iz[t, 0] <= 0 or iz[t, 1] <= 0 or iz[t, 2] <= 0:
            continue
        c0 = <int>ceil(min(x0, min(x1, x2)))
        c1 = <int>floor(max(x0, max(x1, x2)))
        r0 = <int>ceil(min(y0, min(y1, y2)))
        r1 = <int>floor(max(y0, max(y1, y2)))
        if c0 < 0: c0 = 0
        if r0 < 0: r0 = 0
        if c1 > width - 1: c1 = width - 1
        if r1 > height - 1: r1 = height - 1
        for r in range(r0, r1 + 1):
            py = <double>r
            for c in range(c0, c1 + 1):
                px = <double>c
                b0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
                b1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
                b2 = 1.0 - b0 - b1
                if b0 < 0 or b1 < 0 or b2 < 0:
                    continue
                izp = b0 * iz[t, 0] + b1 * iz[t, 1] + b2 * iz[t, 2]
                z = 1.0 / izp
                if z < zbuf[r, c]:
                    zbuf[r, c] = z
                    index[r, c] = <int>t
                    for k in range(n_attr):
                        attr[r, c, k] = (b0 * iz[t, 0] * at[t, 0, k] + b1 * iz[t, 1] * at[t, 1, k]
                                         + b2 * iz[t, 2] * at[t, 2, k]) / izp
    depth = np.where(np.isfinite(zbuf_arr), zbuf_arr, 0.0)
    return depth, index_arr, attr_arr


def splat_labels(u, v, z, half, labels, int height, int width):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] hh = np.ascontiguousarray(half, dtype=np.float64)
    cdef int[::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    zbuf_arr = np.full((height, width), np.inf)
    out_arr = np.zeros((height, width), dtype=np.int32)
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef int[:, ::1] out = out_arr
    cdef Py_ssize_t i, r, c, n = uu.shape[0]
    cdef int nc, nr, c0, c1, r0, r1
    for i in range(n):
        if not (uu[i] == uu[i] and vv[i] == vv[i]) or not zz[i] > 1e-6:
            continue
        if fabs(uu[i]) > 1e9 or fabs(vv[i]) > 1e9:
            continue
        nc = <int>floor(uu[i] + 0.5)
        nr = <int>floor(vv[i] + 0.5)
        c0 = min(<int>ceil(uu[i] - hh[i]), nc)
        c1 = max(<int>floor(uu[i] + hh[i]), nc)
        r0 = min(<int>ceil(vv[i] - hh[i]), nr)
        r1 = max(<int>floor(vv[i] + hh[i]), nr)
        if c0 < 0: c0 = 0
        if r0 < 0: r0 = 0
        if c1 > width - 1: c1 = width - 1
        if r1 > height - 1: r1 = height - 1
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                if zz[i] < zbuf[r, c]:
                    zbuf[r, c] = zz[i]
                    out[r, c] = lab[i]
    return zbuf_arr, out_arr


def radius_mean(P, Q, double r):
    cdef double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cells_arr = np.floor(np.asarray(p) / r).astype(np.int64)
    order_arr = np.lexsort((cells_arr[:, 2], cells_arr[:, 1], cells_arr[:, 0])).astype(np.int64)
    sorted_cells_arr = np.ascontiguousarray(cells_arr[order_arr])
    cdef long long[:, ::1] cells = cells_arr
    cdef long long[::1] order = order_arr
    cdef long long[:, ::1] sc = sorted_cells_arr
    means_arr = np.zeros((n, 3))
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] means = means_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, lo, hi, mid, j, k
    cdef long long a, b, c, tx, ty, tz
    cdef double r2 = r * r, dx, dy, dz, sx, sy, sz
    cdef long long cnt
    for i in range(n):
        sx = 0; sy = 0; sz = 0; cnt = 0
        for a in range(-1, 2):
            for b in range(-1, 2):
                for c in range(-1, 2):
                    tx = cells[i, 0] + a; ty = cells[i, 1] + b; tz = cells[i, 2] + c
                    # lower bound of (tx, ty, tz) in the sorted cell list
                    lo = 0; hi = n
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if (sc[mid, 0] < tx or (sc[mid, 0] == tx and (sc[mid, 1] < ty or
                                (sc[mid, 1] == ty and sc[mid, 2] < tz)))):
                            lo = mid + 1
                        else:
                            hi = mid
                    k = lo
                    while k < n and sc[k, 0] == tx and sc[k, 1] == ty and sc[k, 2] == tz:
                        j = order[k]
                        dx = p[j, 0] - p[i, 0]; dy = p[j, 1] - p[i, 1]; dz = p[j, 2] - p[i, 2]
                        if dx * dx + dy * dy + dz * dz < r2:
                            sx += q[j, 0]; sy += q[j, 1]; sz += q[j, 2]
                            cnt += 1
                        k += 1
        counts[i] = cnt
        means[i, 0] = sx / cnt; means[i, 1] = sy / cnt; means[i, 2] = sz / cnt
    return means_arr, counts_arr


cdef inline double _sign(double x) nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def frame_terms(X, colors, K, E, invdepth, rgb, labels, double w_color, double w_depth,
                double delta_vis, bint front_only):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] col = np.ascontiguousarray(colors, dtype=np.float64)
    cdef double[:, ::1] Km = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[:, ::1] Em = np.ascontiguousarray(E, dtype=np.float64)
    cdef double[:, ::1] invd = np.ascontiguousarray(invdepth, dtype=np.float64)
    cdef double[:, :, ::1] img = np.ascontiguousarray(rgb, dtype=np.float64)
    cdef int[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef Py_ssize_t n = x.shape[0], H = invd.shape[0], W = invd.shape[1]
    value_arr = np.zeros(n)
    gX_arr = np.zeros((n, 3))
    gC_arr = np.zeros((n, 3))
    vis_arr = np.zeros(n, dtype=np.uint8)
    label_arr = np.zeros(n, dtype=np.int32)
    semv_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] value = value_arr
    cdef double[:, ::1] gX = gX_arr
    cdef double[:, ::1] gC = gC_arr
    cdef unsigned char[::1] vis = vis_arr
    cdef int[::1] label = label_arr
    cdef unsigned char[::1] semv = semv_arr
    cdef double fx = Km[0, 0], sk = Km[0, 1], cx = Km[0, 2], fy = Km[1, 1], cy = Km[1, 2]
    cdef Py_ssize_t i, i0, j0, ch
    cdef int lb
    cdef double xc, yc, zc, u, v, a, b, s00, s01, s10, s11, sb, Dt, res, sr
    cdef double ds_da, ds_db, dD_da, dD_db, I, dI_da, dI_db, e, se, ga, gb
    cdef double du0, du1, du2, dv1, dv2, g0, g1, g2
    cdef bint two, ok
    for i in range(n):
        xc = Em[0, 0] * x[i, 0] + Em[0, 1] * x[i, 1] + Em[0, 2] * x[i, 2] + Em[0, 3]
        yc = Em[1, 0] * x[i, 0] + Em[1, 1] * x[i, 1] + Em[1, 2] * x[i, 2] + Em[1, 3]
        zc = Em[2, 0] * x[i, 0] + Em[2, 1] * x[i, 1] + Em[2, 2] * x[i, 2] + Em[2, 3]
        if not zc > 1e-6:
            continue
        u = fx * xc / zc + sk * yc / zc + cx
        v = fy * yc / zc + cy
        if not (u >= 0 and u < W - 1 and v >= 0 and v < H - 1):
            continue
        j0 = <Py_ssize_t>floor(u)
        i0 = <Py_ssize_t>floor(v)
        a = u - j0
        b = v - i0
        s00 = invd[i0, j0]; s01 = invd[i0, j0 + 1]
        s10 = invd[i0 + 1, j0]; s11 = invd[i0 + 1, j0 + 1]
        if not (s00 > 0 and s01 > 0 and s10 > 0 and s11 > 0):
            continue
        sb = (1 - a) * (1 - b) * s00 + a * (1 - b) * s01 + (1 - a) * b * s10 + a * b * s11
        Dt = 1.0 / sb
        res = zc - Dt
        two = fabs(res) < delta_vis
        if front_only:
            ok = res < delta_vis
        else:
            ok = two
        lb = lab[<Py_ssize_t>floor(v + 0.5), <Py_ssize_t>floor(u + 0.5)]
        if two and lb > 0:
            semv[i] = 1
            label[i] = lb
        if not ok:
            continue
        vis[i] = 1
        ds_da = (1 - b) * (s01 - s00) + b * (s11 - s10)
        ds_db = (1 - a) * (s10 - s00) + a * (s11 - s01)
        dD_da = -Dt * Dt * ds_da
        dD_db = -Dt * Dt * ds_db
        sr = _sign(res)
        value[i] = w_depth * fabs(res)
        du0 = fx / zc; du1 = sk / zc; du2 = -(fx * xc + sk * yc) / (zc * zc)
        dv1 = fy / zc; dv2 = -fy * yc / (zc * zc)
        g0 = w_depth * sr * (-dD_da * du0)
        g1 = w_depth * sr * (-dD_da * du1 - dD_db * dv1)
        g2 = w_depth * sr * (1.0 - dD_da * du2 - dD_db * dv2)
        ga = 0
        gb = 0
        for ch in range(3):
            I = ((1 - a) * (1 - b) * img[i0, j0, ch] + a * (1 - b) * img[i0, j0 + 1, ch]
                 + (1 - a) * b * img[i0 + 1, j0, ch] + a * b * img[i0 + 1, j0 + 1, ch])
            dI_da = (1 - b) * (img[i0, j0 + 1, ch] - img[i0, j0, ch]) + b * (img[i0 + 1, j0 + 1, ch] - img[i0 + 1, j0, ch])
            dI_db = (1 - a) * (img[i0 + 1, j0, ch] - img[i0, j0, ch]) + a * (img[i0 + 1, j0 + 1, ch] - img[i0, j0 + 1, ch])
            e = col[i, ch] - I
            se = _sign(e)
            value[i] += w_color * fabs(e)
            gC[i, ch] = w_color * se
            ga -= w_color * se * dI_da
            gb -= w_color * se * dI_db
        g0 += ga * du0
        g1 += ga * du1 + gb * dv1
        g2 += ga * du2 + gb * dv2
        gX[i, 0] = g0 * Em[0, 0] + g1 * Em[1, 0] + g2 * Em[2, 0]
        gX[i, 1] = g0 * Em[0, 1] + g1 * Em[1, 1] + g2 * Em[2, 1]
        gX[i, 2] = g0 * Em[0, 2] + g1 * Em[1, 2] + g2 * Em[2, 2]
    return value_arr, gX_arr, gC_arr, vis_arr, label_arr, semv_arr
