"""8-bit RGB PNG reading and writing.

Images live in memory as H x W x 3 float64 arrays in [0, 1]. Loading maps a
byte ``u`` to ``u / 255``; saving stores ``round(v * 255)``.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np
from PIL import Image, UnidentifiedImageError

from praf.errors import ImageIOError


def load_image(path):
    path = os.fspath(path)
    try:
        with Image.open(path) as img:
            img.load()
            fmt, mode = img.format, img.mode
            if fmt != "PNG":
                raise ImageIOError(f"{path}: expected a PNG file, got {fmt}")
            if mode in ("I", "I;16", "I;16B", "I;16L") or img.info.get("bitdepth", 8) > 8:
                raise ImageIOError(f"{path}: unsupported format: only 8-bit PNG is accepted (mode {mode})")
            if mode == "RGBA":
                img = img.convert("RGB")
            elif mode != "RGB":
                raise ImageIOError(f"{path}: expected an RGB image, got mode {mode}")
            arr = np.asarray(img, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise ImageIOError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageIOError(f"{path}: cannot decode image ({exc})") from exc
    return arr.astype(np.float64) / 255.0


def quantize(image):
    """float image in [0, 1] -> uint8, round-half-up of v * 255."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageIOError(f"expected an H x W x 3 image, got shape {image.shape}")
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(image, path):
    """Write atomically (temp file + rename) so a failed save leaves no partial file."""
    path = os.fspath(path)
    data = quantize(image)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".praf-", suffix=".png", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            Image.fromarray(data, mode="RGB").save(fh, format="PNG")
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ImageIOError(f"{path}: cannot write image ({exc})") from exc
