"""2-D convolution (cross-correlation) with zero 'same' padding, and its VJPs.

Stride-1 convolutions run as one GEMM per kernel tap over a flattened,
zero-padded channels-last buffer: in that layout every tap is a contiguous
row shift, so no im2col copy is needed. Rows that straddle padding produce
junk outputs which are cropped away (forward) or fed zero gradients
(backward).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class _Padded:
    """Flat (rows, C) channels-last buffer with ``p`` pixels of zero border."""

    def __init__(self, B, H, W, p, C):
        self.B, self.H, self.W, self.p = B, H, W, p
        self.Hp, self.Wp = H + 2 * p, W + 2 * p
        self.n = B * self.Hp * self.Wp
        # Tail slack so the largest tap shift stays in bounds.
        self.buf = np.zeros((self.n + 2 * p * self.Wp + 2 * p, C))

    def grid(self):
        return self.buf[: self.n].reshape(self.B, self.Hp, self.Wp, -1)

    def interior(self):
        p = self.p
        return self.grid()[:, p:p + self.H, p:p + self.W]

    def shift(self, i, j):
        s = i * self.Wp + j
        return self.buf[s:s + self.n]


def _pad_nchw(x, p):
    B, C, H, W = x.shape
    pb = _Padded(B, H, W, p, C)
    pb.interior()[...] = x.transpose(0, 2, 3, 1)
    return pb


def _check(x, w):
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv expects {w.shape[1]} input channels, got {x.shape[1]}")
    kh, kw = w.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0 or kh != kw:
        raise ValueError("kernels must be square with odd size")


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """x: (B, C, H, W), w: (O, C, k, k), b: (O,) -> (B, O, H', W')."""
    _check(x, w)
    if stride != 1:
        return _conv2d_strided(x, w, b, stride)
    k = w.shape[2]
    pb = _pad_nchw(x, k // 2)
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (k, k, C, O)
    out = np.zeros((pb.n, w.shape[0]))
    for i in range(k):
        for j in range(k):
            out += pb.shift(i, j) @ wt[i, j]
    out = out.reshape(pb.B, pb.Hp, pb.Wp, -1)[:, : pb.H, : pb.W]
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(gout: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1,
                    need_input: bool = True, need_params: bool = True):
    """Return (grad_x, grad_w, grad_b); entries not requested are None."""
    if stride != 1:
        return _conv2d_strided_backward(gout, x, w, stride, need_input, need_params)
    O, C, k, _ = w.shape
    B, _, H, W = x.shape
    p = k // 2
    # Output gradient laid out on the padded grid (junk positions stay zero).
    gp = np.zeros((B, H + 2 * p, W + 2 * p, O))
    gp[:, :H, :W] = gout.transpose(0, 2, 3, 1)
    gflat = gp.reshape(-1, O)
    gx = gw = gb = None
    if need_params:
        pb = _pad_nchw(x, p)
        gw = np.empty((k, k, C, O))
        for i in range(k):
            for j in range(k):
                gw[i, j] = pb.shift(i, j).T @ gflat
        gw = np.ascontiguousarray(gw.transpose(3, 2, 0, 1))
        gb = gout.sum(axis=(0, 2, 3))
    if need_input:
        gpb = _Padded(B, H, W, p, C)
        wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))  # (k, k, O, C)
        for i in range(k):
            for j in range(k):
                gpb.shift(i, j)[...] += gflat @ wt[i, j]
        gx = np.ascontiguousarray(gpb.interior().transpose(0, 3, 1, 2))
    return gx, gw, gb


def _windows(x, k, stride):
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    return sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]


def _conv2d_strided(x, w, b, stride):
    out = np.tensordot(_windows(x, w.shape[2], stride), w, axes=([1, 4, 5], [1, 2, 3]))
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv2d_strided_backward(gout, x, w, stride, need_input, need_params):
    k = w.shape[2]
    p = k // 2
    gx = gw = gb = None
    if need_params:
        gw = np.tensordot(gout, _windows(x, k, stride), axes=([0, 2, 3], [0, 2, 3]))
        gb = gout.sum(axis=(0, 2, 3))
    if need_input:
        B, C, H, W = x.shape
        ho, wo = gout.shape[2:]
        cols = np.tensordot(gout, w, axes=([1], [0]))  # (B, H', W', C, k, k)
        gxp = np.zeros((B, H + 2 * p, W + 2 * p, C))
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[..., i, j]
        gx = np.ascontiguousarray(gxp[:, p:p + H, p:p + W].transpose(0, 3, 1, 2))
    return gx, gw, gb


def depth_to_space(z: np.ndarray, s: int) -> np.ndarray:
    """(B, C*s*s, H, W) -> (B, C, H*s, W*s); channel c*s*s + i*s + j feeds offset (i, j)."""
    B, cs, H, W = z.shape
    if cs % (s * s):
        raise ValueError(f"{cs} channels cannot be rearranged by factor {s}")
    c = cs // (s * s)
    return z.reshape(B, c, s, s, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(B, c, H * s, W * s)


def space_to_depth(y: np.ndarray, s: int) -> np.ndarray:
    B, c, Hs, Ws = y.shape
    H, W = Hs // s, Ws // s
    return np.ascontiguousarray(
        y.reshape(B, c, H, s, W, s).transpose(0, 1, 3, 5, 2, 4).reshape(B, c * s * s, H, W)
    )
