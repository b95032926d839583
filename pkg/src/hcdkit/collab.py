"""Projected normalised-gradient perturbation of a fixed model's input.

Every batch element carries its own perturbation and its own l2 ball: norms,
step normalisation and projection are all taken per image.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .diffpipe import ModelChain, forward, grad_input, grad_input_full, loss_and_grad
from .tensor import Rng, check_finite

DEFAULT_EPSILON = 0.3
DEFAULT_ALPHA = 20.0 / 255.0
DEFAULT_ITERS = 15
STATIONARY_TOL = 1e-20
UNIFORM_INIT_SCALE = 1e-3


@dataclass(frozen=True)
class PerturbConfig:
    epsilon: float = DEFAULT_EPSILON
    alpha: float = DEFAULT_ALPHA
    iters: int = DEFAULT_ITERS
    norm: str = "l2"  # l2 | linf
    direction: str = "descend"  # descend | ascend
    radius_mode: str = "per_element_scaled"  # per_element_scaled | absolute
    pixel_clamp: bool = True
    init: str = "zero"  # zero | uniform_small
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        for name in ("epsilon", "alpha"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if int(self.iters) != self.iters or self.iters < 0:
            raise ValueError(f"iters must be a non-negative integer, got {self.iters}")
        choices = {
            "norm": ("l2", "linf"),
            "direction": ("descend", "ascend"),
            "radius_mode": ("per_element_scaled", "absolute"),
            "init": ("zero", "uniform_small"),
            "loss": ("mse", "charbonnier"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    def with_(self, **kw) -> "PerturbConfig":
        return replace(self, **kw)

    def radius(self, n_elements: int) -> float:
        """Ball radius for a perturbation with ``n_elements`` entries."""
        if self.norm == "linf" or self.radius_mode == "absolute":
            return self.epsilon
        return self.epsilon * math.sqrt(n_elements)


def _per_image_norm(t: np.ndarray, ord: str = "l2") -> np.ndarray:
    flat = t.reshape(t.shape[0], -1)
    if ord == "linf":
        return np.max(np.abs(flat), axis=1)
    return np.sqrt(np.einsum("ij,ij->i", flat, flat))


def _bcast(v: np.ndarray, like: np.ndarray) -> np.ndarray:
    return v.reshape((-1,) + (1,) * (like.ndim - 1))


def project(delta: np.ndarray, cfg: PerturbConfig) -> np.ndarray:
    """Map each image's perturbation onto its ball (identity inside it)."""
    delta = check_finite(np.asarray(delta, dtype=np.float64), "perturbation")
    if cfg.norm == "linf":
        return np.clip(delta, -cfg.epsilon, cfg.epsilon)
    r = cfg.radius(delta[0].size)
    norms = _per_image_norm(delta)
    outside = norms > r
    if not outside.any():
        return delta
    factor = np.where(outside, r / np.where(outside, norms, 1.0), 1.0)
    return np.where(_bcast(outside, delta), delta * _bcast(factor, delta), delta)


def step(delta: np.ndarray, grad: np.ndarray, cfg: PerturbConfig):
    """One normalised step then projection.

    Returns ``(new_delta, stationary)`` where ``stationary`` flags images whose
    gradient norm fell below 1e-20; those are left unchanged.
    """
    delta = np.asarray(delta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if delta.shape != grad.shape:
        raise ValueError(f"shape mismatch: {delta.shape} vs {grad.shape}")
    gnorm = _per_image_norm(grad)
    stationary = gnorm < STATIONARY_TOL
    sign = -1.0 if cfg.direction == "descend" else 1.0
    unit = grad / _bcast(np.where(stationary, 1.0, gnorm), grad)
    moved = project(delta + sign * cfg.alpha * unit, cfg)
    return np.where(_bcast(stationary, delta), delta, moved), stationary


@dataclass
class OptRun:
    """Trace of one perturbation solve; traces have shape (iters + 1, batch)."""

    loss_trace: np.ndarray
    delta_norm_trace: np.ndarray
    final_delta: np.ndarray
    final_input: np.ndarray
    radius: float
    stationary_steps: np.ndarray
    config: PerturbConfig = field(default_factory=PerturbConfig)
    domain: str = "lr"

    @property
    def iters(self) -> int:
        return self.loss_trace.shape[0] - 1

    def max_radius_excess(self) -> float:
        return float(np.max(self.delta_norm_trace) - self.radius)

    def to_dict(self, index: int | None = None) -> dict:
        sel = (lambda a: a[:, index]) if index is not None else (lambda a: a)
        return {
            "domain": self.domain,
            "iters": self.iters,
            "radius": self.radius,
            "loss_trace": np.asarray(sel(self.loss_trace)).tolist(),
            "delta_norm_trace": np.asarray(sel(self.delta_norm_trace)).tolist(),
            "stationary_steps": (
                int(self.stationary_steps[index]) if index is not None
                else self.stationary_steps.tolist()
            ),
            "config": asdict(self.config),
        }

    def to_json(self, index: int | None = None) -> str:
        return json.dumps(self.to_dict(index), sort_keys=True)


def _init_delta(shape, cfg: PerturbConfig, delta0=None) -> np.ndarray:
    if delta0 is not None:
        return project(np.array(delta0, dtype=np.float64), cfg)
    if cfg.init == "zero":
        return np.zeros(shape)
    rng = Rng(cfg.seed)
    return project(rng.uniform(shape, -UNIFORM_INIT_SCALE, UNIFORM_INIT_SCALE), cfg)


def _solve(value_and_grad, value, x0: np.ndarray, cfg: PerturbConfig, domain: str,
           delta0=None) -> OptRun:
    x0 = check_finite(np.asarray(x0, dtype=np.float64), "input")
    delta = _init_delta(x0.shape, cfg, delta0)
    norm_ord = "linf" if cfg.norm == "linf" else "l2"
    losses, norms = [], [_per_image_norm(delta, norm_ord)]
    stationary_steps = np.zeros(x0.shape[0], dtype=np.int64)
    for _ in range(cfg.iters):
        val, g = value_and_grad(x0 + delta)
        losses.append(val)
        delta, stationary = step(delta, g, cfg)
        stationary_steps += stationary
        norms.append(_per_image_norm(delta, norm_ord))
    losses.append(value(x0 + delta))
    final = x0 + delta
    if cfg.pixel_clamp:
        final = np.clip(final, 0.0, 1.0)
    return OptRun(
        loss_trace=np.array(losses),
        delta_norm_trace=np.array(norms),
        final_delta=delta,
        final_input=final,
        radius=cfg.radius(x0[0].size),
        stationary_steps=stationary_steps,
        config=cfg,
        domain=domain,
    )


def optimize_lr(chain: ModelChain, x: np.ndarray, y_ref: np.ndarray, cfg: PerturbConfig,
                delta0: np.ndarray | None = None) -> OptRun:
    """Perturb the low-resolution input so that f(x + delta) approaches y_ref."""
    y_ref = np.asarray(y_ref, dtype=np.float64)

    def value_and_grad(inp):
        return grad_input(chain, inp, y_ref, cfg.loss, per_image=True)

    def value(inp):
        return loss_and_grad(cfg.loss, forward(chain, inp)[0], y_ref, per_image=True)[0]

    return _solve(value_and_grad, value, x, cfg, "lr", delta0)


def optimize_hr(chain: ModelChain, y: np.ndarray, cfg: PerturbConfig,
                lr_offset: np.ndarray | None = None, delta0: np.ndarray | None = None) -> OptRun:
    """Perturb the high-resolution input; the target stays the unperturbed ``y``.

    ``lr_offset`` is added after downscaling (used by multi-round solves).
    """
    y = np.asarray(y, dtype=np.float64)

    def value_and_grad(inp):
        return grad_input_full(chain, inp, y, cfg.loss, per_image=True, lr_offset=lr_offset)

    def value(inp):
        x = chain.down(inp)
        if lr_offset is not None:
            x = x + lr_offset
        return loss_and_grad(cfg.loss, forward(chain, x)[0], y, per_image=True)[0]

    return _solve(value_and_grad, value, y, cfg, "hr", delta0)


def empty_run(x0: np.ndarray, cfg: PerturbConfig, domain: str, loss_value: np.ndarray) -> OptRun:
    """Record for a skipped phase: zero perturbation, unchanged input."""
    x0 = np.asarray(x0, dtype=np.float64)
    b = x0.shape[0]
    return OptRun(
        loss_trace=np.asarray(loss_value, dtype=np.float64).reshape(1, b),
        delta_norm_trace=np.zeros((1, b)),
        final_delta=np.zeros_like(x0),
        final_input=x0.copy(),
        radius=cfg.radius(x0[0].size),
        stationary_steps=np.zeros(b, dtype=np.int64),
        config=cfg.with_(iters=0),
        domain=domain,
    )
