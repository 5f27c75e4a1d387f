"""Toy Vision-Transformer surrogates that expose every block's tokens.

Architecture: non-overlapping patch embedding, prepended CLS token, learned
positional embeddings, then ``depth`` pre-norm blocks
(LN -> multi-head self-attention -> residual, LN -> GELU MLP -> residual).
The output of every block is tapped as (CLS vector, P x d patch matrix).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from praf import tensor as tn
from praf.errors import ConfigError, DimensionError, ImageIOError

PARAM_STD = 0.02
MLP_RATIO = 4
LN_EPS = 1e-5

_MAGIC = b"PRAF"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 64
    patch_size: int = 8
    depth: int = 4
    embed_dim: int = 64
    num_heads: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("image_size", "patch_size", "depth", "embed_dim", "num_heads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"patch_size {self.patch_size} does not divide image_size {self.image_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"num_heads {self.num_heads} does not divide embed_dim {self.embed_dim}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")

    @property
    def grid(self):
        return self.image_size // self.patch_size

    @property
    def num_patches(self):
        return self.grid**2

    @property
    def head_dim(self):
        return self.embed_dim // self.num_heads


@dataclass
class LayerTaps:
    """Per-block outputs; index 0 holds layer 1."""

    cls: list
    patches: list

    def __len__(self):
        return len(self.cls)

    def layer(self, l):
        """(cls, patches) of 1-based layer ``l``."""
        return self.cls[l - 1], self.patches[l - 1]


def default_ensemble_configs(image_size=64, seeds=(101, 202, 303)):
    """Three encoders differing in patch size and depth, all with d=64."""
    return [
        EncoderConfig(image_size, p, depth, 64, 4, seed)
        for p, depth, seed in zip((8, 16, 8), (4, 4, 6), seeds)
    ]


def _param_shapes(cfg):
    d, k = cfg.embed_dim, cfg.patch_size**2 * 3
    hidden = MLP_RATIO * d
    shapes = {
        "patch_w": (k, d),
        "patch_b": (d,),
        "cls_token": (1, d),
        "pos_embed": (cfg.num_patches + 1, d),
    }
    for l in range(1, cfg.depth + 1):
        shapes.update({
            f"b{l}.ln1_g": (d,), f"b{l}.ln1_b": (d,),
            f"b{l}.qkv_w": (d, 3 * d), f"b{l}.qkv_b": (3 * d,),
            f"b{l}.proj_w": (d, d), f"b{l}.proj_b": (d,),
            f"b{l}.ln2_g": (d,), f"b{l}.ln2_b": (d,),
            f"b{l}.fc1_w": (d, hidden), f"b{l}.fc1_b": (hidden,),
            f"b{l}.fc2_w": (hidden, d), f"b{l}.fc2_b": (d,),
        })
    return shapes


class SurrogateEncoder:
    """Immutable toy ViT. Build with :func:`init_encoder` or :func:`load_parameters`."""

    def __init__(self, config, params):
        expected = _param_shapes(config)
        if set(params) != set(expected):
            raise ConfigError("parameter names do not match the encoder config")
        frozen = {}
        for name, shape in expected.items():
            arr = np.array(params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            arr.flags.writeable = False
            frozen[name] = arr
        self.config = config
        self.params = frozen

    def __repr__(self):
        c = self.config
        return (f"SurrogateEncoder(H={c.image_size}, p={c.patch_size}, L={c.depth}, "
                f"d={c.embed_dim}, heads={c.num_heads}, seed={c.seed})")

    def patch_tokens(self, image):
        """Flatten an H x W x 3 image into P rows of p*p*3 pixels (row-major grid)."""
        c = self.config
        image = tn.as_tensor(image)
        if image.shape != (c.image_size, c.image_size, 3):
            raise DimensionError(
                f"encoder expects a {c.image_size}x{c.image_size}x3 image, got {image.shape}")
        g, p = c.grid, c.patch_size
        x = image.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4)
        return x.reshape(g * g, p * p * 3)

    def patch_embed(self, image):
        """Layer-0 patch embeddings, before the CLS token and positional encoding."""
        w = self.params
        return tn.matmul(self.patch_tokens(image), w["patch_w"]) + w["patch_b"]

    def _block(self, x, l):
        w = self.params
        c = self.config
        T = x.shape[0]
        h, dh, d = c.num_heads, c.head_dim, c.embed_dim

        y = tn.layer_norm(x, w[f"b{l}.ln1_g"], w[f"b{l}.ln1_b"], LN_EPS)
        qkv = tn.matmul(y, w[f"b{l}.qkv_w"]) + w[f"b{l}.qkv_b"]
        qkv = qkv.reshape(T, 3, h, dh).transpose(1, 2, 0, 3)  # (3, h, T, dh)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = tn.softmax(tn.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh)))
        o = tn.matmul(att, v).transpose(1, 0, 2).reshape(T, d)
        x = x + (tn.matmul(o, w[f"b{l}.proj_w"]) + w[f"b{l}.proj_b"])

        y = tn.layer_norm(x, w[f"b{l}.ln2_g"], w[f"b{l}.ln2_b"], LN_EPS)
        y = tn.gelu(tn.matmul(y, w[f"b{l}.fc1_w"]) + w[f"b{l}.fc1_b"])
        return x + (tn.matmul(y, w[f"b{l}.fc2_w"]) + w[f"b{l}.fc2_b"])

    def encode_with_taps(self, image, depth=None):
        """Forward pass recording every block output.

        ``depth`` stops after that many blocks (taps for the remaining layers
        are omitted); by default all ``config.depth`` blocks run.
        """
        w = self.params
        x = tn.concat([tn.Tensor(w["cls_token"]), self.patch_embed(image)], axis=0)
        x = x + w["pos_embed"]
        cls, patches = [], []
        for l in range(1, (depth or self.config.depth) + 1):
            x = self._block(x, l)
            cls.append(x[0])
            patches.append(x[1:])
        return LayerTaps(cls, patches)


def init_encoder(config):
    """Seeded N(0, 0.02) weights; layer-norm affine starts at (1, 0)."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(("ln1_g", "ln2_g")):
            params[name] = np.ones(shape)
        elif name.endswith(("ln1_b", "ln2_b")):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, PARAM_STD, size=shape)
    return SurrogateEncoder(config, params)


def encode_with_taps(encoder, image):
    return encoder.encode_with_taps(image)


def build_ensemble(configs):
    configs = list(configs)
    if not configs:
        raise ConfigError("an ensemble needs at least one encoder config")
    sizes = {c.image_size for c in configs}
    if len(sizes) != 1:
        raise ConfigError(f"ensemble members must share image_size, got {sorted(sizes)}")
    return [init_encoder(c) for c in configs]


# ---------------------------------------------------------------------------
# parameter dump / load
#
# little-endian: b"PRAF", u32 version, u32 config fields (6 x u64), u32 count,
# then per array: u32 name length, utf-8 name, u32 ndim, ndim x u32 dims,
# float64 payload.
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = ("image_size", "patch_size", "depth", "embed_dim", "num_heads", "seed")


def dump_parameters(encoder, path):
    cfg = encoder.config
    chunks = [_MAGIC, struct.pack("<I", _FORMAT_VERSION),
              struct.pack("<6Q", *(getattr(cfg, f) for f in _CONFIG_FIELDS)),
              struct.pack("<I", len(encoder.params))]
    for name, arr in encoder.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_parameters(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc
    if buf[:4] != _MAGIC:
        raise ImageIOError(f"{path}: not a praf parameter file")
    try:
        (version,) = struct.unpack_from("<I", buf, 4)
        if version != _FORMAT_VERSION:
            raise ImageIOError(f"{path}: unsupported format version {version}")
        values = struct.unpack_from("<6Q", buf, 8)
        cfg = EncoderConfig(**dict(zip(_CONFIG_FIELDS, values)))
        (count,) = struct.unpack_from("<I", buf, 56)
        pos = 60
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            name = buf[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (ndim,) = struct.unpack_from("<I", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 4)
            pos += 4 + 4 * ndim
            size = int(np.prod(shape)) * 8
            if pos + size > len(buf):
                raise ImageIOError(f"{path}: truncated array {name}")
            params[name] = np.frombuffer(buf, dtype="<f8", count=size // 8, offset=pos).reshape(shape)
            pos += size
    except struct.error as exc:
        raise ImageIOError(f"{path}: corrupt parameter file ({exc})") from exc
    return SurrogateEncoder(cfg, params)
