"""Numba-jitted implementations of the hot kernels.

Same signatures and semantics as ``_numpy.py``; explicit loops compile to
tight machine code, which is what makes desk-scale training and the latency
benchmark practical.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col_batch(xp, kh, kw, sh, sw, ho, wo):
    b, c, hp, wp = xp.shape
    cols = np.empty((b, c * kh * kw, ho * wo), dtype=xp.dtype)
    for n in range(b):
        row = 0
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    col = 0
                    for oy in range(ho):
                        iy = oy * sh + i
                        for ox in range(wo):
                            cols[n, row, col] = xp[n, ci, iy, ox * sw + j]
                            col += 1
                    row += 1
    return cols


@njit(cache=True)
def col2im_batch(cols, c, hp, wp, kh, kw, sh, sw, ho, wo):
    b = cols.shape[0]
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for n in range(b):
        row = 0
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    col = 0
                    for oy in range(ho):
                        iy = oy * sh + i
                        for ox in range(wo):
                            out[n, ci, iy, ox * sw + j] += cols[n, row, col]
                            col += 1
                    row += 1
    return out


@njit(cache=True)
def maxpool2_forward(x):
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    y = np.empty((b, c, ho, wo), dtype=x.dtype)
    idx = np.empty((b, c, ho, wo), dtype=np.int64)
    for n in range(b):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    iy = oy * 2
                    ix = ox * 2
                    best = x[n, ci, iy, ix]
                    bi = iy * w + ix
                    # strict > keeps the first max in row-major scan
                    v = x[n, ci, iy, ix + 1]
                    if v > best:
                        best = v
                        bi = iy * w + ix + 1
                    v = x[n, ci, iy + 1, ix]
                    if v > best:
                        best = v
                        bi = (iy + 1) * w + ix
                    v = x[n, ci, iy + 1, ix + 1]
                    if v > best:
                        best = v
                        bi = (iy + 1) * w + ix + 1
                    y[n, ci, oy, ox] = best
                    idx[n, ci, oy, ox] = bi
    return y, idx


@njit(cache=True)
def maxpool2_backward(gy, idx, h, w):
    b, c, ho, wo = gy.shape
    gx = np.zeros((b, c, h * w), dtype=gy.dtype)
    for n in range(b):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    gx[n, ci, idx[n, ci, oy, ox]] += gy[n, ci, oy, ox]
    return gx.reshape(b, c, h, w)


@njit(cache=True)
def nn_brute(a, b):
    n = a.shape[0]
    m = b.shape[0]
    d2 = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        bj = -1
        ax, ay, az = a[i, 0], a[i, 1], a[i, 2]
        for j in range(m):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                bj = j
        d2[i] = best
        idx[i] = bj
    return d2, idx


@njit(cache=True)
def kd_query_batch(pts, orig_idx, node_axis, node_split, node_left, node_right,
                   node_start, node_end, queries):
    nq = queries.shape[0]
    d2 = np.empty(nq, dtype=np.float64)
    idx = np.empty(nq, dtype=np.int64)
    stack_node = np.empty(128, dtype=np.int64)
    stack_bound = np.empty(128, dtype=np.float64)
    for qi in range(nq):
        q0, q1, q2 = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        best = np.inf
        best_i = np.int64(-1)
        sp = 0
        stack_node[0] = 0
        stack_bound[0] = 0.0
        while sp >= 0:
            node = stack_node[sp]
            bound = stack_bound[sp]
            sp -= 1
            if bound >= best:
                continue
            ax = node_axis[node]
            if ax < 0:
                for k in range(node_start[node], node_end[node]):
                    dx = q0 - pts[k, 0]
                    dy = q1 - pts[k, 1]
                    dz = q2 - pts[k, 2]
                    d = dx * dx + dy * dy + dz * dz
                    oi = orig_idx[k]
                    if d < best or (d == best and oi < best_i):
                        best = d
                        best_i = oi
            else:
                if ax == 0:
                    delta = q0 - node_split[node]
                elif ax == 1:
                    delta = q1 - node_split[node]
                else:
                    delta = q2 - node_split[node]
                if delta <= 0.0:
                    near, far = node_left[node], node_right[node]
                else:
                    near, far = node_right[node], node_left[node]
                sp += 1
                stack_node[sp] = far
                stack_bound[sp] = delta * delta
                sp += 1
                stack_node[sp] = near
                stack_bound[sp] = bound
        d2[qi] = best
        idx[qi] = best_i
    return d2, idx


@njit(cache=True)
def fnv1a64(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


@njit(cache=True)
def raster_triangles(xy, z, rgb, img, zbuf):
    h, w = zbuf.shape
    for f in range(xy.shape[0]):
        x0, y0 = xy[f, 0, 0], xy[f, 0, 1]
        x1, y1 = xy[f, 1, 0], xy[f, 1, 1]
        x2, y2 = xy[f, 2, 0], xy[f, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        pxmin = max(0, int(np.floor(xmin - 0.5)))
        pxmax = min(w - 1, int(np.ceil(xmax)))
        pymin = max(0, int(np.floor(ymin - 0.5)))
        pymax = min(h - 1, int(np.ceil(ymax)))
        for py in range(pymin, pymax + 1):
            cy = py + 0.5
            for px in range(pxmin, pxmax + 1):
                cx = px + 0.5
                w0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) / area
                w1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) / area
                w2 = 1.0 - w0 - w1
                if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                    depth = w0 * z[f, 0] + w1 * z[f, 1] + w2 * z[f, 2]
                    if depth < zbuf[py, px]:
                        zbuf[py, px] = depth
                        img[0, py, px] = rgb[f, 0]
                        img[1, py, px] = rgb[f, 1]
                        img[2, py, px] = rgb[f, 2]
