"""Pure-numpy implementations of the hot kernels.

Reference backend: every function here has a numba twin in ``_numba.py``
with the same signature and (up to float summation order) the same result.
"""

import numpy as np


def im2col_batch(xp, kh, kw, sh, sw, ho, wo):
    """Gather receptive fields of a padded NCHW batch into columns.

    xp: (B, C, Hp, Wp), already zero-padded.
    Returns (B, C*kh*kw, ho*wo); column j holds the field of output pos j.
    """
    b, c, hp, wp = xp.shape
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(s0, s1, s2, s3, sh * s2, sw * s3),
        writeable=False,
    )
    return windows.reshape(b, c * kh * kw, ho * wo)


def col2im_batch(cols, c, hp, wp, kh, kw, sh, sw, ho, wo):
    """Scatter-add columns back onto a padded NCHW batch (adjoint of im2col)."""
    b = cols.shape[0]
    out = np.zeros((b, c * hp * wp), dtype=cols.dtype)
    ci, i, j = np.unravel_index(np.arange(c * kh * kw), (c, kh, kw))
    oy, ox = np.unravel_index(np.arange(ho * wo), (ho, wo))
    iy = oy[None, :] * sh + i[:, None]
    ix = ox[None, :] * sw + j[:, None]
    flat = (ci[:, None] * hp + iy) * wp + ix
    flat = flat.ravel()
    for n in range(b):
        np.add.at(out[n], flat, cols[n].ravel())
    return out.reshape(b, c, hp, wp)


def maxpool2_forward(x):
    """2x2/stride-2 max pool. Returns (y, idx) with idx flat into H*W.

    Ties go to the first element of the block in row-major scan order.
    """
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = x.reshape(b, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, ho, wo, 4)
    a = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, a[..., None], axis=-1)[..., 0]
    oy = np.arange(ho)[:, None]
    ox = np.arange(wo)[None, :]
    idx = (oy * 2 + a // 2) * w + (ox * 2 + a % 2)
    return y, idx.astype(np.int64)


def maxpool2_backward(gy, idx, h, w):
    """Route each output gradient to its stored argmax position."""
    b, c, ho, wo = gy.shape
    gx = np.zeros((b, c, h * w), dtype=gy.dtype)
    bb = np.arange(b)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    # one source per block, so plain assignment cannot collide
    gx[bb, cc, idx] = gy
    return gx.reshape(b, c, h, w)


def nn_brute(a, b):
    """For each row of a: squared distance and index of its nearest row in b.

    Ties resolve to the lowest index. O(N*M), chunked to bound memory.
    """
    n = a.shape[0]
    d2 = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    chunk = max(1, int(4e6) // max(1, b.shape[0]))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = a[lo:hi, None, :] - b[None, :, :]
        dist = (diff * diff).sum(axis=-1)
        idx[lo:hi] = dist.argmin(axis=1)
        d2[lo:hi] = dist[np.arange(hi - lo), idx[lo:hi]]
    return d2, idx


def kd_query_batch(pts, orig_idx, node_axis, node_split, node_left, node_right,
                   node_start, node_end, queries):
    """Exact nearest-neighbor queries against a flattened kd-tree.

    Returns (d2, idx) like nn_brute; idx are original point indices.
    """
    nq = queries.shape[0]
    d2 = np.empty(nq, dtype=np.float64)
    idx = np.empty(nq, dtype=np.int64)
    for qi in range(nq):
        q = queries[qi]
        best = np.inf
        best_i = -1
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound >= best:
                continue
            if node_axis[node] < 0:
                lo, hi = node_start[node], node_end[node]
                seg = pts[lo:hi]
                diff = seg - q
                dist = (diff * diff).sum(axis=-1)
                for k in range(hi - lo):
                    d = dist[k]
                    oi = orig_idx[lo + k]
                    if d < best or (d == best and oi < best_i):
                        best = d
                        best_i = oi
            else:
                delta = q[node_axis[node]] - node_split[node]
                if delta <= 0.0:
                    near, far = node_left[node], node_right[node]
                else:
                    near, far = node_right[node], node_left[node]
                stack.append((far, delta * delta))
                stack.append((near, bound))
        d2[qi] = best
        idx[qi] = best_i
    return d2, idx


def fnv1a64(data):
    """FNV-1a 64-bit hash of a uint8 array."""
    h = 0xCBF29CE484222325
    for byte in data.tobytes():
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(h)


def raster_triangles(xy, z, rgb, img, zbuf):
    """Depth-buffered flat-shaded triangle fill, in place.

    xy: (F,3,2) pixel coords, z: (F,3) view depth (smaller = nearer),
    rgb: (F,3) face color, img: (3,H,W), zbuf: (H,W).
    """
    h, w = zbuf.shape
    for f in range(xy.shape[0]):
        x0, y0 = xy[f, 0]
        x1, y1 = xy[f, 1]
        x2, y2 = xy[f, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        pxmin = max(0, int(np.floor(min(x0, x1, x2) - 0.5)))
        pxmax = min(w - 1, int(np.ceil(max(x0, x1, x2))))
        pymin = max(0, int(np.floor(min(y0, y1, y2) - 0.5)))
        pymax = min(h - 1, int(np.ceil(max(y0, y1, y2))))
        if pxmin > pxmax or pymin > pymax:
            continue
        cx = np.arange(pxmin, pxmax + 1) + 0.5
        cy = (np.arange(pymin, pymax + 1) + 0.5)[:, None]
        w0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) / area
        w1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        depth = w0 * z[f, 0] + w1 * z[f, 1] + w2 * z[f, 2]
        zwin = zbuf[pymin:pymax + 1, pxmin:pxmax + 1]
        hit = inside & (depth < zwin)
        zwin[hit] = depth[hit]
        for ch in range(3):
            img[ch, pymin:pymax + 1, pxmin:pxmax + 1][hit] = rgb[f, ch]
