"""Stage schedule and coarse-to-fine target synthesis.

Stage targets are produced by a nearest-neighbour down-resize to R x R
followed by a nearest-neighbour up-resize back to H x H, so they only ever
contain pixel values already present in the target image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from praf.errors import ConfigError, ContractError

INTERPOLATIONS = ("nearest", "bilinear", "bicubic")


@dataclass(frozen=True)
class StageSchedule:
    T: int
    M: int
    resolutions: tuple

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolutions)
        object.__setattr__(self, "resolutions", res)
        if self.M < 1 or self.T < self.M:
            raise ConfigError(f"need T >= M >= 1, got T={self.T}, M={self.M}")
        if len(res) != self.M:
            raise ConfigError(f"{self.M} stages but {len(res)} resolutions")
        if any(r < 1 for r in res) or any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError(f"resolutions must be positive and strictly ascending: {res}")

    @property
    def image_size(self):
        return self.resolutions[-1]

    @classmethod
    def default(cls, image_size=64, T=300, M=3):
        """Resolutions H/4, H/2, H (M=3) or evenly spaced fractions of H otherwise."""
        if M == 3 and image_size % 4 == 0:
            res = (image_size // 4, image_size // 2, image_size)
        else:
            res = tuple(max(1, round(image_size * (m + 1) / M)) for m in range(M))
        return cls(T, M, res)


def stage_index(t, schedule):
    """1-based stage of 1-based iteration ``t``: min(floor((t-1)M/T) + 1, M)."""
    T, M = schedule.T, schedule.M
    if not 1 <= t <= T:
        raise ContractError(f"iteration {t} outside [1, {T}]")
    return min((t - 1) * M // T + 1, M)


def nearest_indices(in_size, out_size):
    """Source index per output index under pixel-centre mapping floor((i+0.5)*in/out)."""
    if out_size < 1 or in_size < 1:
        raise ContractError(f"sizes must be >= 1, got in={in_size}, out={out_size}")
    i = np.arange(out_size)
    # exact integer form of floor((i + 0.5) * in / out)
    idx = ((2 * i + 1) * in_size) // (2 * out_size)
    return np.minimum(idx, in_size - 1)


def nearest_resize(image, out_size):
    image = np.asarray(image)
    rows = nearest_indices(image.shape[0], out_size)
    cols = nearest_indices(image.shape[1], out_size)
    return image[rows[:, None], cols[None, :]]


def _pil_resize(image, out_size, method):
    from PIL import Image

    resample = {"bilinear": Image.BILINEAR, "bicubic": Image.BICUBIC}[method]
    chans = [
        np.asarray(Image.fromarray(np.ascontiguousarray(image[..., c], dtype=np.float32), mode="F")
                   .resize((out_size, out_size), resample), dtype=np.float64)
        for c in range(image.shape[2])
    ]
    return np.clip(np.stack(chans, axis=-1), 0.0, 1.0)


def resize(image, out_size, method="nearest"):
    if method == "nearest":
        return nearest_resize(image, out_size)
    if method not in INTERPOLATIONS:
        raise ConfigError(f"unknown interpolation {method!r}; choose from {INTERPOLATIONS}")
    return _pil_resize(np.asarray(image, dtype=np.float64), out_size, method)


def synthesize_stage_target(x_tgt, R, H=None, down="nearest", up="nearest"):
    """Down-resize ``x_tgt`` to R x R and back up to H x H.

    ``down``/``up`` other than "nearest" exist only to replicate the
    interpolation ablation; the nearest/nearest pair is the default.
    """
    x_tgt = np.asarray(x_tgt, dtype=np.float64)
    H = x_tgt.shape[0] if H is None else H
    if R > H:
        raise ConfigError(f"stage resolution {R} exceeds image size {H}")
    if R < 1:
        raise ConfigError(f"stage resolution must be >= 1, got {R}")
    return resize(resize(x_tgt, R, down), H, up)
