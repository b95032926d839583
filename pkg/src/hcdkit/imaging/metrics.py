"""Y-channel quality metrics.

Luma follows BT.601 studio swing: Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255
for R, G, B in [0, 1], so Y spans [16/255, 235/255].
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image

PSNR_CAP = 100.0

_Y = np.array([65.481, 128.553, 24.966]) / 255.0
_CB = np.array([-37.797, -74.203, 112.0]) / 255.0
_CR = np.array([112.0, -93.786, -18.214]) / 255.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def rgb_to_y_array(rgb: np.ndarray, axis: int = -1) -> np.ndarray:
    """Luma of an RGB array; the channel axis ``axis`` is dropped."""
    rgb = np.moveaxis(np.asarray(rgb, dtype=np.float64), axis, -1)
    if rgb.shape[-1] != 3:
        raise ValueError("expected 3 channels")
    return rgb[..., 0] * _Y[0] + rgb[..., 1] * _Y[1] + rgb[..., 2] * _Y[2] + 16.0 / 255.0


def rgb_to_y(img: Image) -> Image:
    if img.colorspace != "RGB":
        raise ValueError(f"rgb_to_y needs an RGB image, got {img.colorspace}")
    return Image(np.clip(rgb_to_y_array(img.pixels), 16.0 / 255.0, 235.0 / 255.0), "Gray")


def rgb_to_ycbcr(img: Image) -> Image:
    if img.colorspace != "RGB":
        raise ValueError(f"rgb_to_ycbcr needs an RGB image, got {img.colorspace}")
    px = img.pixels
    ycc = np.stack(
        [
            rgb_to_y_array(px),
            px @ _CB + 128.0 / 255.0,
            px @ _CR + 128.0 / 255.0,
        ],
        axis=-1,
    )
    return Image(np.clip(ycc, 0.0, 1.0), "YCbCr")


def _gray(a) -> np.ndarray:
    if isinstance(a, Image):
        if a.colorspace == "RGB":
            a = rgb_to_y(a)
        return a.pixels[:, :, 0]
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D luma array, got shape {a.shape}")
    return a


def _shaved(a, b, shave: int):
    a, b = _gray(a), _gray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if shave:
        a, b = a[shave:-shave, shave:-shave], b[shave:-shave, shave:-shave]
    return a, b


def psnr(a, b, *, shave: int = 0, cap: float = PSNR_CAP) -> float:
    """PSNR in dB with peak 1.0; identical inputs return ``cap``.

    RGB images are reduced to luma first; arrays are taken as luma already.
    """
    a, b = _shaved(a, b, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, *, shave: int = 0) -> np.ndarray:
    a, b = _shaved(a, b, shave)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, *, shave: int = 0) -> float:
    """Mean single-scale SSIM over all valid 11x11 Gaussian windows."""
    return float(np.mean(ssim_map(a, b, shave=shave)))
