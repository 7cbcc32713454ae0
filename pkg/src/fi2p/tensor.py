"""Dense-tensor conventions and the shape kernels everything else builds on.

Tensors are plain C-order (row-major) numpy arrays of float32 or float64.
4-D tensors are read as (batch, channels, height, width). All functions are
pure; nothing here mutates its inputs.
"""

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError

DEFAULT_DTYPE = np.float32


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays.

    Delegates to BLAS; results are reproducible for identical inputs within
    one process / thread configuration.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape}"
        )
    return a @ b


def conv_out_size(size: int, k: int, s: int, p: int) -> int:
    """Output extent of a strided window sweep (floor convention)."""
    out = (size + 2 * p - k) // s + 1
    if out < 1:
        raise ConfigError(
            f"window geometry gives empty output: size={size} kernel={k} "
            f"stride={s} pad={p}"
        )
    return out


def _check_geometry(c, h, w, kernel, stride, pad):
    kh, kw = kernel
    sh, sw = stride
    ph, pw = pad
    if min(kh, kw, sh, sw) < 1 or min(ph, pw) < 0:
        raise ConfigError(
            f"bad window geometry: kernel={kernel} stride={stride} pad={pad}"
        )
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w, kw, sw, pw)
    return kh, kw, sh, sw, ph, pw, ho, wo


def im2col(x: np.ndarray, kernel, stride, pad) -> np.ndarray:
    """Unfold a (C,H,W) tensor into a (C*kh*kw) x (Ho*Wo) matrix.

    Column j is the flattened receptive field of output position j
    (row-major over the output grid); padding contributes zeros.
    """
    if x.ndim != 3:
        raise ShapeError(f"im2col expects (C,H,W), got shape {x.shape}")
    c, h, w = x.shape
    kh, kw, sh, sw, ph, pw, ho, wo = _check_geometry(c, h, w, kernel, stride, pad)
    xp = np.pad(x[None], ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return kernels.im2col_batch(np.ascontiguousarray(xp), kh, kw, sh, sw, ho, wo)[0]


def col2im(cols: np.ndarray, out_shape, kernel, stride, pad) -> np.ndarray:
    """Adjoint of im2col: scatter columns back to (C,H,W), summing overlaps.

    Not an inverse; each input cell receives the sum of every window that
    covered it.
    """
    if cols.ndim != 2:
        raise ShapeError(f"col2im expects a 2-D column matrix, got {cols.shape}")
    c, h, w = out_shape
    kh, kw, sh, sw, ph, pw, ho, wo = _check_geometry(c, h, w, kernel, stride, pad)
    if cols.shape != (c * kh * kw, ho * wo):
        raise ConfigError(
            f"column matrix {cols.shape} inconsistent with geometry "
            f"{(c * kh * kw, ho * wo)}"
        )
    hp, wp = h + 2 * ph, w + 2 * pw
    out = kernels.col2im_batch(
        np.ascontiguousarray(cols[None]), c, hp, wp, kh, kw, sh, sw, ho, wo
    )[0]
    if ph or pw:
        out = out[:, ph:hp - ph, pw:wp - pw]
    return np.ascontiguousarray(out)
