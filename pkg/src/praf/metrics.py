"""PSNR and SSIM for images in [0, 1]."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from praf.errors import DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA = np.array([0.299, 0.587, 0.114])


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / MSE) over all pixels and channels; ``inf`` when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img, w):
    img = sliding_window_view(img, w.size, axis=0) @ w
    return sliding_window_view(img, w.size, axis=1) @ w


def to_luma(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image @ LUMA
    return image


def ssim_map(a, b, data_range=1.0):
    a, b = to_luma(a), to_luma(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise DimensionError(f"ssim: image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range=1.0):
    """Mean SSIM on the Rec. 601 luma channel (11x11 Gaussian window, sigma 1.5)."""
    return float(ssim_map(a, b, data_range).mean())


@dataclass
class QualityReport:
    pairs: list = field(default_factory=list)  # dicts: clean, adversarial, psnr_db, ssim

    def add(self, clean, adversarial, a, b):
        entry = {"clean": str(clean), "adversarial": str(adversarial),
                 "psnr_db": psnr(a, b), "ssim": ssim(a, b)}
        self.pairs.append(entry)
        return entry

    def summary(self):
        finite = [p["psnr_db"] for p in self.pairs if math.isfinite(p["psnr_db"])]
        return {
            "count": len(self.pairs),
            "mean_psnr_db": float(np.mean(finite)) if finite else math.inf,
            "mean_ssim": float(np.mean([p["ssim"] for p in self.pairs])) if self.pairs else None,
        }

    def to_dict(self):
        def enc(v):
            return "inf" if isinstance(v, float) and math.isinf(v) else v

        return {"pairs": [{k: enc(v) for k, v in p.items()} for p in self.pairs],
                "summary": {k: enc(v) for k, v in self.summary().items()}}
