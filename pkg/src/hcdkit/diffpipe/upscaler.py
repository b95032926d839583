from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..tensor import Rng
from .bicubic import BicubicOp
from .conv import conv2d, conv2d_backward, depth_to_space, space_to_depth

# He (fan-in) initialisation gain for ReLU networks; biases start at zero.
HE_GAIN = np.sqrt(2.0)
# With a bicubic skip the last layer starts near zero so f begins close to
# plain bicubic upscaling.
SKIP_INIT_SCALE = 0.1
SKIP_TOKEN = "+bicubic"

_LAYER_RE = re.compile(r"conv\((\d+),(\d+),(\d+)\)")
_SHUFFLE_RE = re.compile(r"pixelshuffle\((\d+)\)")


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


def format_arch(layers: list[tuple[int, int, int]], scale: int, skip: bool = False) -> str:
    parts = [f"conv({i},{o},{k})" for i, o, k in layers]
    s = " relu ".join(parts) + f" pixelshuffle({scale})"
    return s + " " + SKIP_TOKEN if skip else s


def parse_arch(arch: str) -> tuple[list[tuple[int, int, int]], int, bool]:
    """Inverse of :func:`format_arch`: ``([(in, out, k), ...], scale, skip)``."""
    tokens = arch.split()
    skip = bool(tokens) and tokens[-1] == SKIP_TOKEN
    if skip:
        tokens = tokens[:-1]
    if not tokens or not _SHUFFLE_RE.fullmatch(tokens[-1]):
        raise ValueError(f"architecture must end with pixelshuffle(s): {arch!r}")
    scale = int(_SHUFFLE_RE.fullmatch(tokens[-1]).group(1))
    body = tokens[:-1]
    convs = body[0::2]
    if any(t != "relu" for t in body[1::2]) or len(body) % 2 == 0:
        raise ValueError(f"expected conv layers separated by relu: {arch!r}")
    layers = []
    for tok in convs:
        m = _LAYER_RE.fullmatch(tok)
        if not m:
            raise ValueError(f"bad layer token {tok!r}")
        layers.append(tuple(int(v) for v in m.groups()))
    return layers, scale, skip


class UpscalerParams:
    """Conv -> ReLU -> ... -> conv -> depth-to-space upscaler ``f``.

    With ``skip`` the network output is added to plain bicubic upscaling of
    the input, so the convolutions learn a residual.
    """

    def __init__(self, layers: list[ConvLayer], scale: int, skip: bool = False):
        if not layers:
            raise ValueError("need at least one conv layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_ch != nxt.in_ch:
                raise ValueError(f"channel mismatch: {prev.out_ch} -> {nxt.in_ch}")
        for layer in layers:
            if layer.kernel % 2 == 0 or layer.weight.shape[2] != layer.weight.shape[3]:
                raise ValueError("kernels must be square with odd size")
            if layer.bias.shape != (layer.out_ch,):
                raise ValueError("bias length must equal output channels")
        if layers[-1].out_ch % (scale * scale):
            raise ValueError(f"last layer must emit a multiple of {scale * scale} channels")
        if skip and layers[-1].out_ch != layers[0].in_ch * scale * scale:
            raise ValueError("bicubic skip needs output channels equal to input channels")
        self.layers = layers
        self.scale = scale
        self.skip = bool(skip)

    @classmethod
    def init(cls, arch: str, seed: int) -> "UpscalerParams":
        spec, scale, skip = parse_arch(arch)
        rng = Rng(seed)
        layers = []
        for n, (cin, cout, k) in enumerate(spec):
            std = HE_GAIN / np.sqrt(cin * k * k)
            if skip and n == len(spec) - 1:
                std *= SKIP_INIT_SCALE
            layers.append(ConvLayer(rng.normal((cout, cin, k, k), std), np.zeros(cout)))
        return cls(layers, scale, skip)

    @classmethod
    def default_arch(cls, scale: int, channels: int = 3, width: int = 32, skip: bool = True) -> str:
        return format_arch(
            [(channels, width, 5), (width, width, 3), (width, channels * scale * scale, 3)],
            scale,
            skip,
        )

    @property
    def arch(self) -> str:
        return format_arch(
            [(l.in_ch, l.out_ch, l.kernel) for l in self.layers], self.scale, self.skip
        )

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_ch

    @property
    def max_radius(self) -> int:
        return max(l.kernel // 2 for l in self.layers)

    def copy(self) -> "UpscalerParams":
        return UpscalerParams(
            [ConvLayer(l.weight.copy(), l.bias.copy()) for l in self.layers],
            self.scale,
            self.skip,
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out += [l.weight, l.bias]
        return out

    def forward(self, x: np.ndarray):
        """Return ``(y_hat, pre_activations)``."""
        if x.shape[1] != self.in_channels:
            raise ValueError(f"upscaler expects {self.in_channels} channels, got {x.shape[1]}")
        pre = []
        h = x
        for n, layer in enumerate(self.layers):
            z = conv2d(h, layer.weight, layer.bias)
            pre.append(z)
            h = np.maximum(z, 0.0) if n < len(self.layers) - 1 else z
        y = depth_to_space(h, self.scale)
        if self.skip:
            y = y + BicubicOp(self.scale).up(x)
        return y, pre

    def backward(self, x, pre, g_out, need_params=True):
        """Reverse pass; returns ``(grad_x, [(grad_w, grad_b), ...] or None)``."""
        g = space_to_depth(g_out, self.scale)
        grads = []
        for n in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[n]
            if n < len(self.layers) - 1:
                g = g * (pre[n] > 0.0)  # ReLU subgradient at 0 is 0
            inp = x if n == 0 else np.maximum(pre[n - 1], 0.0)
            g, gw, gb = conv2d_backward(g, inp, layer.weight, need_params=need_params)
            grads.append((gw, gb))
        if self.skip and g is not None:
            g = g + BicubicOp(self.scale).up_adjoint(g_out)
        return g, (grads[::-1] if need_params else None)
