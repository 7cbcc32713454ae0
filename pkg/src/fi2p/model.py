"""Encoder/decoder assembly, end-to-end passes, and checkpoint files.

The encoder stacks strided (or pooled) 3x3 convolutions down to a compact
feature map; the decoder runs two transposed convolutions on that map, then
two fully-connected layers, and squashes the 3*P outputs through tanh into
P points in (-1,1)^3.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels, nn
from .errors import CheckpointError, ConfigError, ShapeError

CHECKPOINT_MAGIC = b"FI2P"
CHECKPOINT_VERSION = 1

VARIANTS = ("stride", "maxpool")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; `scale` shrinks it for desk-scale runs."""
    variant: str = "stride"
    image_size: int = 256
    in_channels: int = 3
    channel_plan: tuple = (16, 32, 64, 128, 256)
    decoder_deconv_channels: tuple = (128, 64)
    fc_hidden: int = 2048
    point_count: int = 1024
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(self, "channel_plan", tuple(self.channel_plan))
        object.__setattr__(self, "decoder_deconv_channels",
                           tuple(self.decoder_deconv_channels))
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")
        if self.point_count < 1:
            raise ConfigError(f"point_count must be >= 1, got {self.point_count}")
        if len(self.channel_plan) < 1 or len(self.decoder_deconv_channels) < 1:
            raise ConfigError("channel plans must be nonempty")
        s = self.eff_image_size
        if s % (2 ** self.num_encoder_layers) != 0:
            raise ConfigError(
                f"image size {s} not divisible by 2^{self.num_encoder_layers}"
            )

    @property
    def num_encoder_layers(self) -> int:
        return len(self.channel_plan)

    @property
    def eff_image_size(self) -> int:
        # floor of 32 keeps the five halvings valid at any scale
        return max(32, self.image_size // self.scale)

    @property
    def eff_channel_plan(self) -> tuple:
        return tuple(max(4, c // self.scale) for c in self.channel_plan)

    @property
    def eff_fc_hidden(self) -> int:
        return max(1, self.fc_hidden // self.scale)

    def encoder_output_shape(self) -> tuple:
        """(channels, height, width) of the feature map Z."""
        s = self.eff_image_size // (2 ** self.num_encoder_layers)
        return (self.eff_channel_plan[-1], s, s)

    def feature_size(self) -> int:
        c, h, w = self.encoder_output_shape()
        return c * h * w

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ParamEntry:
    name: str
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class ModelParams:
    """Ordered weight set; entry order matches build_layer_specs."""
    entries: list = field(default_factory=list)

    @property
    def dtype(self):
        return self.entries[0].weight.dtype

    def copy(self) -> "ModelParams":
        return ModelParams([
            ParamEntry(e.name, e.weight.copy(),
                       None if e.bias is None else e.bias.copy())
            for e in self.entries
        ])


def build_layer_specs(config: ModelConfig):
    """Layer sequence for a config. Returns (specs, encoder_length)."""
    specs = []
    s = config.eff_image_size
    c_prev = config.in_channels
    for c_out in config.eff_channel_plan:
        stride = 2 if config.variant == "stride" else 1
        specs.append(nn.LayerSpec("conv", in_channels=c_prev, out_channels=c_out,
                                  kernel=(3, 3), stride=(stride, stride),
                                  pad=(1, 1)))
        specs.append(nn.LayerSpec("relu"))
        if config.variant == "maxpool":
            specs.append(nn.LayerSpec("maxpool"))
        c_prev = c_out
        s //= 2
    encoder_len = len(specs)
    for c_out in config.decoder_deconv_channels:
        specs.append(nn.LayerSpec("deconv", in_channels=c_prev, out_channels=c_out,
                                  kernel=(3, 3), stride=(1, 1), pad=(1, 1)))
        specs.append(nn.LayerSpec("relu"))
        c_prev = c_out
    specs.append(nn.LayerSpec("flatten"))
    flat = c_prev * s * s
    specs.append(nn.LayerSpec("fc", in_features=flat,
                              out_features=config.eff_fc_hidden))
    # no activation between the two fc layers; tanh after the last one only
    specs.append(nn.LayerSpec("fc", in_features=config.eff_fc_hidden,
                              out_features=3 * config.point_count))
    specs.append(nn.LayerSpec("tanh"))
    return specs, encoder_len


def build_model(config: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> ModelParams:
    """Xavier-initialize every weight; biases start at zero."""
    if np.dtype(dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"dtype must be float32 or float64, got {dtype}")
    specs, _ = build_layer_specs(config)
    entries = []
    conv_i = deconv_i = fc_i = 0
    for spec in specs:
        if spec.kind == "conv":
            conv_i += 1
            kh, kw = spec.kernel
            w = nn.xavier_init(spec.in_channels * kh * kw,
                               spec.out_channels * kh * kw, rng,
                               shape=(spec.out_channels, spec.in_channels, kh, kw),
                               dtype=dtype)
            b = np.zeros(spec.out_channels, dtype=dtype)
            entries.append(ParamEntry(f"enc_conv{conv_i}", w, b))
        elif spec.kind == "deconv":
            deconv_i += 1
            kh, kw = spec.kernel
            w = nn.xavier_init(spec.in_channels * kh * kw,
                               spec.out_channels * kh * kw, rng,
                               shape=(spec.in_channels, spec.out_channels, kh, kw),
                               dtype=dtype)
            b = np.zeros(spec.out_channels, dtype=dtype)
            entries.append(ParamEntry(f"dec_deconv{deconv_i}", w, b))
        elif spec.kind == "fc":
            fc_i += 1
            w = nn.xavier_init(spec.in_features, spec.out_features, rng,
                               dtype=dtype)
            b = np.zeros(spec.out_features, dtype=dtype)
            entries.append(ParamEntry(f"dec_fc{fc_i}", w, b))
    return ModelParams(entries)


def forward(params: ModelParams, config: ModelConfig, image: np.ndarray,
            return_cache: bool = False):
    """Run the full model on an NCHW image batch.

    Returns (cloud, features) where cloud is (B, P, 3) with every coordinate
    strictly inside (-1, 1); with return_cache=True a cache list for
    backward() is appended.
    """
    s = config.eff_image_size
    if image.ndim != 4 or image.shape[1:] != (config.in_channels, s, s):
        raise ShapeError(
            f"image shape {image.shape} does not match "
            f"(B, {config.in_channels}, {s}, {s})"
        )
    specs, encoder_len = build_layer_specs(config)
    x = np.ascontiguousarray(image, dtype=params.dtype)
    caches = []
    features = None
    pi = 0
    for li, spec in enumerate(specs):
        if spec.kind == "conv":
            e = params.entries[pi]
            pi += 1
            x, c = nn.conv2d_forward(x, spec, e.weight, e.bias)
        elif spec.kind == "deconv":
            e = params.entries[pi]
            pi += 1
            x, c = nn.deconv2d_forward(x, spec, e.weight, e.bias)
        elif spec.kind == "fc":
            e = params.entries[pi]
            pi += 1
            x, c = nn.fc_forward(x, e.weight, e.bias)
        elif spec.kind == "relu":
            x, c = nn.relu(x)
        elif spec.kind == "tanh":
            x, c = nn.tanh_op(x)
        elif spec.kind == "maxpool":
            x, c = nn.maxpool2d_forward(x)
        elif spec.kind == "flatten":
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        caches.append(c)
        if li == encoder_len - 1:
            features = x
    cloud = x.reshape(x.shape[0], config.point_count, 3)
    if return_cache:
        return cloud, features, caches
    return cloud, features


def backward(params: ModelParams, config: ModelConfig, caches,
             grad_cloud: np.ndarray):
    """Chain-rule through the whole model.

    Returns a list of (grad_weight, grad_bias) aligned one-to-one with
    params.entries.
    """
    specs, _ = build_layer_specs(config)
    if not isinstance(caches, list) or len(caches) != len(specs):
        raise ShapeError(
            "caches do not match this config; pass the list from "
            "forward(..., return_cache=True)"
        )
    g = np.ascontiguousarray(grad_cloud, dtype=params.dtype)
    g = g.reshape(g.shape[0], -1)
    grads = [None] * len(params.entries)
    pi = len(params.entries)
    for li in range(len(specs) - 1, -1, -1):
        spec = specs[li]
        c = caches[li]
        if spec.kind == "conv":
            pi -= 1
            g, gw, gb = nn.conv2d_backward(g, c, spec, params.entries[pi].weight)
            grads[pi] = (gw, gb)
        elif spec.kind == "deconv":
            pi -= 1
            g, gw, gb = nn.deconv2d_backward(g, c, spec, params.entries[pi].weight)
            grads[pi] = (gw, gb)
        elif spec.kind == "fc":
            pi -= 1
            g, gw, gb = nn.fc_backward(g, c, params.entries[pi].weight)
            grads[pi] = (gw, gb)
        elif spec.kind == "relu":
            g = nn.relu_backward(g, c)
        elif spec.kind == "tanh":
            g = nn.tanh_backward(g, c)
        elif spec.kind == "maxpool":
            g = nn.maxpool2d_backward(g, c)
        elif spec.kind == "flatten":
            g = g.reshape(c)
    return grads


def _param_shapes(config: ModelConfig):
    """(name, weight shape, bias shape) per entry, in ModelParams order."""
    specs, _ = build_layer_specs(config)
    out = []
    conv_i = deconv_i = fc_i = 0
    for spec in specs:
        if spec.kind == "conv":
            conv_i += 1
            out.append((f"enc_conv{conv_i}",
                        (spec.out_channels, spec.in_channels) + spec.kernel,
                        (spec.out_channels,)))
        elif spec.kind == "deconv":
            deconv_i += 1
            out.append((f"dec_deconv{deconv_i}",
                        (spec.in_channels, spec.out_channels) + spec.kernel,
                        (spec.out_channels,)))
        elif spec.kind == "fc":
            fc_i += 1
            out.append((f"dec_fc{fc_i}",
                        (spec.out_features, spec.in_features),
                        (spec.out_features,)))
    return out


def total_params(params: ModelParams) -> int:
    n = 0
    for e in params.entries:
        n += e.weight.size
        if e.bias is not None:
            n += e.bias.size
    return n


def serialize_checkpoint(params: ModelParams, config: ModelConfig) -> bytes:
    """Checkpoint wire format.

    magic "FI2P" | version u32 | config-JSON (u32 length prefix, UTF-8) |
    element width u8 | per-layer raw little-endian arrays (weight then bias,
    entry order) | FNV-1a 64-bit checksum of everything before it.
    """
    cfg_json = json.dumps(config.to_dict(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    width = params.dtype.itemsize
    le = np.dtype(f"<f{width}")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(cfg_json)),
        cfg_json,
        struct.pack("<B", width),
    ]
    for e in params.entries:
        parts.append(np.ascontiguousarray(e.weight, dtype=le).tobytes())
        if e.bias is not None:
            parts.append(np.ascontiguousarray(e.bias, dtype=le).tobytes())
    body = b"".join(parts)
    checksum = kernels.fnv1a64(np.frombuffer(body, dtype=np.uint8))
    return body + struct.pack("<Q", int(checksum))


def checkpoint_bytes(params: ModelParams, config: ModelConfig) -> int:
    """Exact on-disk size of save_checkpoint's output."""
    return len(serialize_checkpoint(params, config))


def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    blob = serialize_checkpoint(params, config)
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path, dtype=None):
    """Read a checkpoint back as (params, config).

    With dtype given, the file's element width must match it exactly;
    dtype=None accepts whatever width the file declares.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 + 4 + 4 + 1 + 8:
        raise CheckpointError(f"{path}: truncated checkpoint (only {len(blob)} bytes)")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes {blob[:4]!r}")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    cfg_len = struct.unpack_from("<I", blob, 8)[0]
    off = 12 + cfg_len
    if len(blob) < off + 1 + 8:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        cfg_dict = json.loads(blob[12:off].decode("utf-8"))
        config = ModelConfig.from_dict(cfg_dict)
    except (ValueError, ConfigError) as exc:
        raise CheckpointError(f"{path}: bad embedded config: {exc}") from exc
    width = blob[off]
    off += 1
    if width not in (4, 8):
        raise CheckpointError(f"{path}: unsupported element width {width}")
    if dtype is not None and np.dtype(dtype).itemsize != width:
        raise CheckpointError(
            f"{path}: element width mismatch: file holds {width}-byte floats, "
            f"expected {np.dtype(dtype).itemsize}-byte"
        )
    le = np.dtype(f"<f{width}")
    native = le.newbyteorder("=")
    shapes = _param_shapes(config)
    expected = off + 8
    for _, w_shape, b_shape in shapes:
        expected += (int(np.prod(w_shape)) + int(np.prod(b_shape))) * width
    if len(blob) != expected:
        raise CheckpointError(
            f"{path}: size mismatch: {len(blob)} bytes, expected {expected} "
            "(truncated or corrupt)"
        )
    stored = struct.unpack_from("<Q", blob, len(blob) - 8)[0]
    actual = int(kernels.fnv1a64(np.frombuffer(blob[:-8], dtype=np.uint8)))
    if stored != actual:
        raise CheckpointError(
            f"{path}: checksum mismatch (stored {stored:#x}, computed {actual:#x})"
        )
    entries = []
    for name, w_shape, b_shape in shapes:
        wn = int(np.prod(w_shape))
        w = np.frombuffer(blob, dtype=le, count=wn, offset=off)
        w = w.reshape(w_shape).astype(native, copy=True)
        off += wn * width
        bn = int(np.prod(b_shape))
        b = np.frombuffer(blob, dtype=le, count=bn, offset=off).astype(native,
                                                                       copy=True)
        off += bn * width
        entries.append(ParamEntry(name, w, b))
    return ModelParams(entries), config
