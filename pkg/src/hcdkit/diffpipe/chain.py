from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tensor import check_finite
from .bicubic import BicubicOp, cubic
from .conv import conv2d, conv2d_backward
from .upscaler import ConvLayer, UpscalerParams, parse_arch

MODEL_FORMAT = "hcdkit-model"
MODEL_VERSION = 1
CHARBONNIER_EPS = 1e-6
LOSS_KINDS = ("mse", "charbonnier")


class LearnedDownscaler:
    """Single strided conv ``g`` (affine, so its input VJP is a fixed linear map)."""

    kind = "learned"

    def __init__(self, weight: np.ndarray, bias: np.ndarray, scale: int):
        if weight.shape[0] != weight.shape[1]:
            raise ValueError("learned downscaler must keep the channel count")
        self.weight = weight
        self.bias = bias
        self.scale = scale

    @classmethod
    def from_bicubic(cls, channels: int = 3, scale: int = 2) -> "LearnedDownscaler":
        """Start from bicubic taps on a (4s+1)^2 per-channel kernel."""
        half = 2 * scale
        d = np.arange(-half, half + 1)
        row = cubic(((scale - 1) / 2.0 - d) / scale)
        row /= row.sum()
        w = np.zeros((channels, channels, d.size, d.size))
        for c in range(channels):
            w[c, c] = np.outer(row, row)
        return cls(w, np.zeros(channels), scale)

    def _check(self, y):
        if y.shape[-2] % self.scale or y.shape[-1] % self.scale:
            raise ValueError(f"HR extents {y.shape[-2:]} not divisible by scale {self.scale}")

    def down(self, y: np.ndarray) -> np.ndarray:
        self._check(y)
        return conv2d(y, self.weight, self.bias, stride=self.scale)

    def adjoint(self, v: np.ndarray, hr_shape: tuple[int, int] | None = None) -> np.ndarray:
        h, w = hr_shape or (v.shape[-2] * self.scale, v.shape[-1] * self.scale)
        ghost = np.empty((v.shape[0], self.weight.shape[1], h, w))
        gx, _, _ = conv2d_backward(v, ghost, self.weight, stride=self.scale, need_params=False)
        return gx

    def param_grads(self, y: np.ndarray, v: np.ndarray):
        _, gw, gb = conv2d_backward(v, y, self.weight, stride=self.scale, need_input=False)
        return gw, gb

    def copy(self) -> "LearnedDownscaler":
        return LearnedDownscaler(self.weight.copy(), self.bias.copy(), self.scale)

    def to_dict(self) -> dict:
        return {
            "kind": "learned",
            "scale": int(self.scale),
            "weight": _pack(self.weight),
            "bias": _pack(self.bias),
        }


@dataclass
class ActivationTape:
    """What backward needs: the network input and each conv's pre-activation."""

    x: np.ndarray
    pre: list


class ModelChain:
    """The fixed pair (g, f) sharing one scale factor."""

    def __init__(self, g, f: UpscalerParams):
        if g.scale != f.scale:
            raise ValueError(f"downscaler scale {g.scale} != upscaler scale {f.scale}")
        self.g = g
        self.f = f

    @property
    def scale(self) -> int:
        return self.f.scale

    def down(self, y: np.ndarray) -> np.ndarray:
        return self.g.down(y)

    def up(self, x: np.ndarray) -> np.ndarray:
        return self.f.forward(x)[0]

    def rescale(self, y: np.ndarray) -> np.ndarray:
        return self.up(self.down(y))

    def copy(self) -> "ModelChain":
        g = self.g.copy() if isinstance(self.g, LearnedDownscaler) else self.g
        return ModelChain(g, self.f.copy())

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "scale": int(self.scale),
            "downscaler": self.g.to_dict(),
            "upscaler": {
                "arch": self.f.arch,
                "layers": [
                    {"weight": _pack(l.weight), "bias": _pack(l.bias)} for l in self.f.layers
                ],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelChain":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not an hcdkit model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        scale = int(d["scale"])
        gd = d["downscaler"]
        if gd["kind"] == "bicubic":
            g = BicubicOp(scale, a=float(gd.get("a", -0.5)))
        elif gd["kind"] == "learned":
            g = LearnedDownscaler(_unpack(gd["weight"]), _unpack(gd["bias"]), scale)
        else:
            raise ValueError(f"unknown downscaler kind {gd['kind']!r}")
        ud = d["upscaler"]
        layers = [ConvLayer(_unpack(l["weight"]), _unpack(l["bias"])) for l in ud["layers"]]
        skip = parse_arch(ud["arch"])[2]
        f = UpscalerParams(layers, scale, skip)
        if f.arch != ud["arch"]:
            raise ValueError(f"architecture string {ud['arch']!r} does not match stored layers")
        return cls(g, f)


def _pack(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unpack(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def save_model(chain: ModelChain, path) -> None:
    path = Path(path)
    text = json.dumps(chain.to_dict(), separators=(",", ":"))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_model(path) -> ModelChain:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a valid model file ({exc})") from None
    return ModelChain.from_dict(d)


# --- losses -----------------------------------------------------------------

def _check_pair(y_hat, y_ref):
    if y_hat.shape != y_ref.shape:
        raise ValueError(f"dimension mismatch: {y_hat.shape} vs {y_ref.shape}")


def loss_and_grad(kind: str, y_hat: np.ndarray, y_ref: np.ndarray, per_image: bool = False):
    """Loss value(s) and gradient w.r.t. ``y_hat``.

    With ``per_image`` the loss is averaged within each batch element, the
    returned value has shape (B,), and the gradient is that of their sum.
    """
    _check_pair(y_hat, y_ref)
    r = y_hat - y_ref
    axes = (1, 2, 3) if per_image else None
    n = r[0].size if per_image else r.size
    if kind == "mse":
        val = np.mean(r * r, axis=axes)
        grad = (2.0 / n) * r
    elif kind == "charbonnier":
        root = np.sqrt(r * r + CHARBONNIER_EPS**2)
        val = np.mean(root, axis=axes)
        grad = r / root / n
    else:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    return val, grad


def loss(kind: str, y_hat: np.ndarray, y_ref: np.ndarray) -> float:
    return float(loss_and_grad(kind, y_hat, y_ref)[0])


# --- forward / reverse --------------------------------------------------------

def forward(chain: ModelChain, x_lr: np.ndarray):
    x_lr = np.asarray(x_lr, dtype=np.float64)
    if min(x_lr.shape[-2:]) < chain.f.max_radius:
        raise ValueError("input is smaller than the largest kernel radius")
    y_hat, pre = chain.f.forward(x_lr)
    check_finite(y_hat, "upscaler output")
    return y_hat, ActivationTape(x_lr, pre)


def grad_input(chain: ModelChain, x_lr, y_ref, loss: str = "mse", per_image: bool = False):
    """``(L(f(x), y), dL/dx)``."""
    y_hat, tape = forward(chain, x_lr)
    val, g = loss_and_grad(loss, y_hat, np.asarray(y_ref, dtype=np.float64), per_image)
    gx, _ = chain.f.backward(tape.x, tape.pre, g, need_params=False)
    return val if per_image else float(val), gx


def grad_input_full(chain: ModelChain, y_hr, y_ref, loss: str = "mse", per_image: bool = False,
                    lr_offset: np.ndarray | None = None):
    """``(L(f(g(y) [+ offset]), y_ref), dL/dy)`` via the adjoint of ``g``."""
    y_hr = np.asarray(y_hr, dtype=np.float64)
    x = chain.down(y_hr)
    if lr_offset is not None:
        x = x + lr_offset
    val, gx = grad_input(chain, x, y_ref, loss, per_image)
    return val, chain.g.adjoint(gx, y_hr.shape[-2:])


def grad_params(chain: ModelChain, x_lr, y_ref, loss: str = "mse"):
    """``(loss, [(grad_w, grad_b) per layer])`` for the upscaler."""
    y_hat, tape = forward(chain, x_lr)
    val, g = loss_and_grad(loss, y_hat, np.asarray(y_ref, dtype=np.float64))
    _, grads = chain.f.backward(tape.x, tape.pre, g, need_params=True)
    return float(val), grads
