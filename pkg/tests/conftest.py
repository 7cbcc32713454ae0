"""Shared test oracles: naive reference implementations kept deliberately
independent of the package's own kernels."""

import numpy as np
import pytest


def matmul_oracle(a, b):
    """Triple-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


def conv2d_oracle(x, w, b, stride, pad):
    """Nested-loop cross-correlation with zero padding (floor output size)."""
    bs, ci, h, wd = x.shape
    co, ci2, kh, kw = w.shape
    assert ci == ci2
    sh, sw = stride
    ph, pw = pad
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    y = np.zeros((bs, co, ho, wo), dtype=np.float64)
    for n in range(bs):
        for o in range(co):
            for oy in range(ho):
                for ox in range(wo):
                    s = 0.0
                    for c in range(ci):
                        for i in range(kh):
                            for j in range(kw):
                                s += float(xp[n, c, oy * sh + i, ox * sw + j]) \
                                    * float(w[o, c, i, j])
                    y[n, o, oy, ox] = s + (float(b[o]) if b is not None else 0.0)
    return y


def chamfer_oracle(x, y):
    """Direct double-loop Chamfer loss."""
    total = 0.0
    for p in x:
        total += min(float(((p - q) ** 2).sum()) for q in y)
    for q in y:
        total += min(float(((q - p) ** 2).sum()) for p in x)
    return total


def scalar_adam_oracle(w0, grad_fn, lr, steps, beta1=0.9, beta2=0.999,
                       eps=1e-8, weight_decay=0.0):
    """Textbook scalar Adam trajectory."""
    w = float(w0)
    m = v = 0.0
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(w) + weight_decay * w
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
        traj.append(w)
    return traj


def finite_diff_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function w.r.t. array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(analytic, numeric):
    """Elementwise |a - n| / max(1, |a|, |n|), reduced to the worst entry."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))


@pytest.fixture(scope="session")
def tiny_model_config():
    import fi2p
    return fi2p.ModelConfig(image_size=32, channel_plan=(4, 4, 8, 8, 8),
                            decoder_deconv_channels=(8, 4), fc_hidden=24,
                            point_count=8)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Small two-category dataset shared by train/bench/cli tests."""
    from fi2p.data import make_dataset
    out = tmp_path_factory.mktemp("toyset")
    manifest = make_dataset(["box", "torus"], per_category_count=24,
                            image_size=32, point_count=64, seed=11,
                            out_dir=out)
    return manifest
