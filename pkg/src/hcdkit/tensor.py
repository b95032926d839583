"""Dense (batch, channel, height, width) float64 arrays and seeded randomness.

Tensors are plain ``numpy.ndarray`` objects; the helpers here enforce the
rank-4 / float64 / finite contract at module boundaries.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "NonFiniteError",
    "Rng",
    "as_tensor",
    "check_finite",
    "elementwise",
    "l2_norm",
    "clamp",
    "random_uniform",
]


class NonFiniteError(FloatingPointError):
    """Raised when a public operation would produce NaN or Inf."""


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{what} contains non-finite values")
    return t


def as_tensor(data, *, copy: bool = False) -> np.ndarray:
    """Return ``data`` as a C-contiguous float64 rank-4 array.

    Lower-rank input is promoted by prepending unit axes, so an (H, W) array
    becomes (1, 1, H, W).
    """
    t = np.array(data, dtype=np.float64, order="C") if copy else np.asarray(data, dtype=np.float64)
    if t.ndim > 4:
        raise ValueError(f"expected at most 4 dimensions, got shape {t.shape}")
    while t.ndim < 4:
        t = t[np.newaxis]
    return check_finite(np.ascontiguousarray(t))


_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}") from None
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(a, b)
    return check_finite(out, f"result of {op}")


def l2_norm(t: np.ndarray) -> float:
    """Euclidean norm over every element."""
    t = np.asarray(t, dtype=np.float64)
    check_finite(t)
    # Rescale by the max magnitude so squaring cannot overflow.
    m = float(np.max(np.abs(t))) if t.size else 0.0
    if m == 0.0:
        return 0.0
    s = t / m
    return m * float(np.sqrt(np.dot(s.ravel(), s.ravel())))


def clamp(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError(f"clamp bounds inverted: lo={lo} > hi={hi}")
    return np.clip(np.asarray(t, dtype=np.float64), lo, hi)


class Rng:
    """Seeded counter-based generator (Philox4x64-10 via numpy).

    The stream depends only on ``seed``; numpy keeps Philox output and
    ``Generator.random`` stable across releases and platforms.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(key=seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return lo + (hi - lo) * self._gen.random(shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return scale * self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def random_uniform(rng: Rng, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """I.i.d. samples in ``[lo, hi)`` shaped as a rank-4 tensor."""
    if not lo < hi:
        raise ValueError(f"degenerate interval [{lo}, {hi})")
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ValueError(f"tensor shape must have 4 extents, got {shape}")
    out = rng.uniform(shape, lo, hi)
    # lo + (hi-lo)*u can round up to hi when u is just below 1.
    return np.where(out >= hi, np.nextafter(hi, lo), out)
