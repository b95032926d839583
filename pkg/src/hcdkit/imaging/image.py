from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import as_tensor

COLORSPACES = {"RGB": 3, "YCbCr": 3, "Gray": 1}


@dataclass(frozen=True, eq=False)
class Image:
    """Decoded raster, pixels as float64 (H, W, C) in [0, 1]."""

    pixels: np.ndarray
    colorspace: str = "RGB"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ValueError(f"pixels must be (H, W, C), got shape {px.shape}")
        if self.colorspace not in COLORSPACES:
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if px.shape[2] != COLORSPACES[self.colorspace]:
            raise ValueError(
                f"{self.colorspace} needs {COLORSPACES[self.colorspace]} channels, got {px.shape[2]}"
            )
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_tensor(self) -> np.ndarray:
        """(1, C, H, W) tensor view of the pixels."""
        return as_tensor(self.pixels.transpose(2, 0, 1), copy=True)

    @classmethod
    def from_tensor(cls, t: np.ndarray, colorspace: str | None = None, *, clip: bool = False) -> "Image":
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 4:
            if t.shape[0] != 1:
                raise ValueError("from_tensor expects a batch of one")
            t = t[0]
        if t.ndim != 3:
            raise ValueError(f"expected (C, H, W) or (1, C, H, W), got {t.shape}")
        if colorspace is None:
            colorspace = "Gray" if t.shape[0] == 1 else "RGB"
        px = t.transpose(1, 2, 0)
        if clip:
            px = np.clip(px, 0.0, 1.0)
        return cls(np.ascontiguousarray(px), colorspace)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.colorspace == other.colorspace and np.array_equal(self.pixels, other.pixels)


def crop_to_multiple(img: Image, scale: int) -> Image:
    """Top-left crop so both dimensions are multiples of ``scale``."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    h = img.height - img.height % scale
    w = img.width - img.width % scale
    if h == 0 or w == 0:
        raise ValueError(f"{img.height}x{img.width} image is smaller than scale {scale}")
    if (h, w) == (img.height, img.width):
        return img
    return Image(img.pixels[:h, :w], img.colorspace)
