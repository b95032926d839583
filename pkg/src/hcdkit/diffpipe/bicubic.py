"""Separable bicubic resampling with an exact adjoint.

Downscaling uses the antialiased (kernel stretched by the scale factor)
convention of MATLAB ``imresize``: output pixel ``i`` sits at input coordinate
``(i + 0.5) * s - 0.5`` and gathers taps within ``2 s`` pixels, each weighted by
``cubic((u - j) / s)``. Out-of-range taps are folded onto the nearest edge
pixel (edge replication). Each weight row is normalised to sum to one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    inner = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    outer = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, inner, np.where(x < 2.0, outer, 0.0))


@lru_cache(maxsize=64)
def _rows(n_in: int, n_out: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    s = n_in / n_out
    stretch = max(s, 1.0)  # antialias only when shrinking
    centers = (np.arange(n_out) + 0.5) * s - 0.5
    taps = int(np.ceil(4.0 * stretch)) + 2
    first = np.floor(centers - 2.0 * stretch).astype(np.int64)
    idx = first[:, None] + np.arange(taps)[None, :]
    w = cubic((centers[:, None] - idx) / stretch, a)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    idx.setflags(write=False)
    w.setflags(write=False)
    return idx, w


@lru_cache(maxsize=64)
def _matrix(n_in: int, n_out: int, a: float) -> np.ndarray:
    idx, w = _rows(n_in, n_out, a)
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.repeat(np.arange(n_out), idx.shape[1]), idx.ravel()), w.ravel())
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class BicubicOp:
    """Fixed bicubic downscaler ``g`` (linear, edge-replicate, a = -0.5)."""

    scale: int
    a: float = -0.5
    kind: str = field(default="bicubic", init=False)

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 2:
            raise ValueError("scale must be an integer >= 2")

    def weight_rows(self, n_in: int):
        """(source indices, weights) per output pixel along one axis."""
        self._check(n_in)
        return _rows(n_in, n_in // self.scale, self.a)

    def matrix(self, n_in: int) -> np.ndarray:
        self._check(n_in)
        return _matrix(n_in, n_in // self.scale, self.a)

    def _check(self, n: int):
        if n % self.scale:
            raise ValueError(f"extent {n} is not divisible by scale {self.scale}")

    def down(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        mh, mw = self.matrix(y.shape[-2]), self.matrix(y.shape[-1])
        return np.ascontiguousarray(mh @ y @ mw.T)

    def adjoint(self, v: np.ndarray, hr_shape: tuple[int, int] | None = None) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        h, w = hr_shape or (v.shape[-2] * self.scale, v.shape[-1] * self.scale)
        if (h // self.scale, w // self.scale) != v.shape[-2:]:
            raise ValueError(f"gradient of shape {v.shape} does not match HR {(h, w)}")
        mh, mw = self.matrix(h), self.matrix(w)
        return np.ascontiguousarray(mh.T @ v @ mw)

    def up(self, x: np.ndarray) -> np.ndarray:
        """Plain bicubic upscaling by ``scale`` (the non-learned baseline)."""
        x = np.asarray(x, dtype=np.float64)
        h, w = x.shape[-2:]
        mh = _matrix(h, h * self.scale, self.a)
        mw = _matrix(w, w * self.scale, self.a)
        return np.ascontiguousarray(mh @ x @ mw.T)

    def up_adjoint(self, v: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`up`."""
        v = np.asarray(v, dtype=np.float64)
        H, W = v.shape[-2:]
        if H % self.scale or W % self.scale:
            raise ValueError(f"dims {(H, W)} not divisible by scale {self.scale}")
        mh = _matrix(H // self.scale, H, self.a)
        mw = _matrix(W // self.scale, W, self.a)
        return np.ascontiguousarray(mh.T @ v @ mw)

    def to_dict(self) -> dict:
        return {"kind": "bicubic", "scale": int(self.scale), "a": self.a}


def bicubic_down(op: BicubicOp, y: np.ndarray) -> np.ndarray:
    return op.down(y)


def bicubic_down_adjoint(op: BicubicOp, grad_out: np.ndarray) -> np.ndarray:
    return op.adjoint(grad_out)
