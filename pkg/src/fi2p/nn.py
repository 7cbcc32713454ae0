"""Layer forward/backward passes, weight init, and the Adam update.

Everything is a pure function: forwards return (output, cache) and the
matching backward consumes that cache. Gradients are exact analytic
derivatives of the forward maps (finite-difference checked in the tests).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .tensor import conv_out_size

LAYER_KINDS = ("conv", "deconv", "maxpool", "fc", "relu", "tanh", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer.

    conv/deconv carry channel counts and window geometry, fc carries feature
    counts, and the activation / pooling / flatten kinds need nothing else.
    """
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    in_features: int = 0
    out_features: int = 0
    kernel: tuple = (0, 0)
    stride: tuple = (1, 1)
    pad: tuple = (0, 0)
    has_bias: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind == "maxpool":
            # fixed 2x2 window, stride 2
            object.__setattr__(self, "kernel", (2, 2))
            object.__setattr__(self, "stride", (2, 2))

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "deconv", "fc")


@dataclass
class AdamState:
    """Per-parameter optimizer state (first/second moments, step count)."""
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            first_moment=np.zeros_like(param),
            second_moment=np.zeros_like(param),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def _pad_nchw(x, ph, pw):
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def conv2d_forward(x, spec: LayerSpec, w, b=None):
    """Cross-correlate an NCHW batch with a (C_out, C_in, kh, kw) kernel.

    Returns (y, cache); y has shape (B, C_out, Ho, Wo) with zero padding and
    the floor output-size convention.
    """
    if spec.kind != "conv":
        raise ConfigError(f"conv2d_forward got spec kind {spec.kind!r}")
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"conv input {x.shape} does not match in_channels={spec.in_channels}"
        )
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    bsz, c, h, w_in = x.shape
    if w.shape != (spec.out_channels, c, kh, kw):
        raise ShapeError(
            f"conv weight {w.shape} does not match "
            f"{(spec.out_channels, c, kh, kw)}"
        )
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w_in, kw, sw, pw)
    xp = _pad_nchw(x, ph, pw)
    cols = kernels.im2col_batch(xp, kh, kw, sh, sw, ho, wo)
    wmat = w.reshape(spec.out_channels, c * kh * kw)
    y = np.matmul(wmat, cols)  # (B, C_out, Ho*Wo) via broadcasting
    if spec.has_bias and b is not None:
        y = y + b[:, None]
    y = y.reshape(bsz, spec.out_channels, ho, wo)
    cache = (cols, x.shape, ho, wo)
    return y, cache


def conv2d_backward(grad_y, cache, spec: LayerSpec, w):
    """Gradients of conv2d_forward w.r.t. input, weight, and bias."""
    cols, x_shape, ho, wo = cache
    bsz, c, h, w_in = x_shape
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    if grad_y.shape != (bsz, spec.out_channels, ho, wo):
        raise ShapeError(
            f"grad_y {grad_y.shape} does not match forward output "
            f"{(bsz, spec.out_channels, ho, wo)}"
        )
    gy = grad_y.reshape(bsz, spec.out_channels, ho * wo)
    grad_w = np.einsum("boj,bkj->ok", gy, cols).reshape(w.shape)
    grad_b = grad_y.sum(axis=(0, 2, 3)) if spec.has_bias else None
    wmat = w.reshape(spec.out_channels, c * kh * kw)
    grad_cols = np.matmul(wmat.T, gy)
    hp, wp = h + 2 * ph, w_in + 2 * pw
    gx = kernels.col2im_batch(
        np.ascontiguousarray(grad_cols), c, hp, wp, kh, kw, sh, sw, ho, wo
    )
    if ph or pw:
        gx = np.ascontiguousarray(gx[:, :, ph:hp - ph, pw:wp - pw])
    return gx, grad_w, grad_b


def deconv_out_size(size: int, k: int, s: int, p: int) -> int:
    out = (size - 1) * s - 2 * p + k
    if out < 1:
        raise ConfigError(
            f"deconv geometry gives empty output: size={size} kernel={k} "
            f"stride={s} pad={p}"
        )
    return out


def deconv2d_forward(x, spec: LayerSpec, w, b=None):
    """Transposed convolution: the adjoint of conv2d_forward.

    Weight layout is (C_in, C_out, kh, kw); output spatial size is
    (H-1)*stride - 2*pad + kernel.
    """
    if spec.kind != "deconv":
        raise ConfigError(f"deconv2d_forward got spec kind {spec.kind!r}")
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"deconv input {x.shape} does not match in_channels={spec.in_channels}"
        )
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    bsz, a, h, w_in = x.shape
    if w.shape != (a, spec.out_channels, kh, kw):
        raise ShapeError(
            f"deconv weight {w.shape} does not match "
            f"{(a, spec.out_channels, kh, kw)}"
        )
    ho = deconv_out_size(h, kh, sh, ph)
    wo = deconv_out_size(w_in, kw, sw, pw)
    wmat = w.reshape(a, spec.out_channels * kh * kw)
    x_mat = x.reshape(bsz, a, h * w_in)
    cols = np.matmul(wmat.T, x_mat)  # (B, C_out*kh*kw, H*W)
    hp, wp = ho + 2 * ph, wo + 2 * pw
    y = kernels.col2im_batch(
        np.ascontiguousarray(cols), spec.out_channels, hp, wp, kh, kw, sh, sw,
        h, w_in,
    )
    if ph or pw:
        y = np.ascontiguousarray(y[:, :, ph:hp - ph, pw:wp - pw])
    if spec.has_bias and b is not None:
        y = y + b[None, :, None, None]
    cache = (x, ho, wo)
    return y, cache


def deconv2d_backward(grad_y, cache, spec: LayerSpec, w):
    """Gradients of deconv2d_forward; grad_x is a plain convolution of grad_y."""
    x, ho, wo = cache
    bsz, a, h, w_in = x.shape
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    if grad_y.shape != (bsz, spec.out_channels, ho, wo):
        raise ShapeError(
            f"grad_y {grad_y.shape} does not match forward output "
            f"{(bsz, spec.out_channels, ho, wo)}"
        )
    gyp = _pad_nchw(grad_y, ph, pw)
    gy_cols = kernels.im2col_batch(gyp, kh, kw, sh, sw, h, w_in)
    wmat = w.reshape(a, spec.out_channels * kh * kw)
    gx = np.matmul(wmat, gy_cols).reshape(x.shape)
    x_mat = x.reshape(bsz, a, h * w_in)
    grad_w = np.einsum("ban,bkn->ak", x_mat, gy_cols).reshape(w.shape)
    grad_b = grad_y.sum(axis=(0, 2, 3)) if spec.has_bias else None
    return gx, grad_w, grad_b


def maxpool2d_forward(x):
    """2x2 stride-2 max pooling; ties go to the first block element."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects NCHW, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ConfigError(f"maxpool needs even spatial dims, got {x.shape}")
    y, idx = kernels.maxpool2_forward(np.ascontiguousarray(x))
    cache = (idx, x.shape[2], x.shape[3])
    return y, cache


def maxpool2d_backward(grad_y, cache):
    idx, h, w = cache
    if grad_y.shape[:2] != idx.shape[:2] or grad_y.shape[2:] != idx.shape[2:]:
        raise ShapeError(f"grad_y {grad_y.shape} does not match pool cache")
    return kernels.maxpool2_backward(np.ascontiguousarray(grad_y), idx, h, w)


def fc_forward(x, w, b=None):
    """Affine map y = x @ w.T + b with w of shape (n_out, n_in)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"fc shapes incompatible: x {x.shape}, w {w.shape}")
    y = x @ w.T
    if b is not None:
        y = y + b
    return y, x


def fc_backward(grad_y, cache, w):
    x = cache
    if grad_y.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(
            f"grad_y {grad_y.shape} does not match {(x.shape[0], w.shape[0])}"
        )
    grad_x = grad_y @ w
    grad_w = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def relu(x):
    """Half-wave rectifier max(x, 0). Cache is the output mask."""
    y = np.maximum(x, 0)
    return y, x > 0


def relu_backward(grad_y, cache):
    # derivative at exactly 0 is defined as 0
    return grad_y * cache


def tanh_op(x):
    """Elementwise tanh with outputs kept strictly inside (-1, 1).

    Saturated values are nudged one ulp toward zero so the open-interval
    output contract holds for arbitrarily large finite inputs.
    """
    y = np.tanh(x)
    lim = np.nextafter(x.dtype.type(1), x.dtype.type(0))
    y = np.clip(y, -lim, lim)
    return y, y


def tanh_backward(grad_y, cache):
    y = cache
    return grad_y * (1 - y * y)


def xavier_init(fan_in: int, fan_out: int, rng: np.random.Generator,
                shape=None, dtype=np.float64) -> np.ndarray:
    """Uniform samples on (-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigError(f"fan_in/fan_out must be positive, got {fan_in}, {fan_out}")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_out, fan_in)
    return rng.uniform(-a, a, size=shape).astype(dtype)


def adam_step(param, grad, state: AdamState, lr: float, weight_decay: float = 0.0):
    """One Adam update with bias correction.

    Weight decay couples in as an L2 gradient term (grad + wd * param)
    before the moment updates. Returns (new_param, new_state); inputs are
    not mutated.
    """
    if param.shape != grad.shape or param.shape != state.first_moment.shape:
        raise ShapeError(
            f"adam shapes differ: param {param.shape}, grad {grad.shape}, "
            f"moment {state.first_moment.shape}"
        )
    g = grad + weight_decay * param if weight_decay else grad
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1 - state.beta2) * (g * g)
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    return new_param.astype(param.dtype, copy=False), new_state


def layer_cost(spec: LayerSpec, input_shape):
    """(parameter count, multiply-add operation count) for one layer.

    Convention: one output accumulated from f inputs costs f multiplies and
    f - 1 adds (2f - 1 ops), plus one add if a bias is present. A 2x1
    single-channel kernel therefore costs 3 ops per output pixel.
    """
    if spec.kind == "conv":
        c, h, w = input_shape
        kh, kw = spec.kernel
        ho = conv_out_size(h, kh, spec.stride[0], spec.pad[0])
        wo = conv_out_size(w, kw, spec.stride[1], spec.pad[1])
        fan = spec.in_channels * kh * kw
        params = spec.out_channels * fan + (spec.out_channels if spec.has_bias else 0)
        per_out = 2 * fan - 1 + (1 if spec.has_bias else 0)
        return params, ho * wo * spec.out_channels * per_out
    if spec.kind == "deconv":
        c, h, w = input_shape
        kh, kw = spec.kernel
        fan = spec.out_channels * kh * kw
        params = spec.in_channels * fan + (spec.out_channels if spec.has_bias else 0)
        # same multiply-add count as the adjoint convolution
        per_out = 2 * fan - 1 + (1 if spec.has_bias else 0)
        return params, h * w * spec.in_channels * per_out
    if spec.kind == "fc":
        params = spec.out_features * spec.in_features
        if spec.has_bias:
            params += spec.out_features
        per_out = 2 * spec.in_features - 1 + (1 if spec.has_bias else 0)
        return params, spec.out_features * per_out
    if spec.kind == "maxpool":
        c, h, w = input_shape
        return 0, (h // 2) * (w // 2) * c * 3  # 3 compares per 2x2 block
    if spec.kind in ("relu", "tanh"):
        return 0, int(np.prod(input_shape))
    if spec.kind == "flatten":
        return 0, 0
    raise ConfigError(f"layer_cost does not know kind {spec.kind!r}")
