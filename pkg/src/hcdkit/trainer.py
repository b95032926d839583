"""Toy-scale training of the upscaler on a seeded synthetic corpus.

Each patch blends a primary generator (assigned round-robin by index) with a
randomly chosen secondary texture generator (``noise``, ``edges`` or
``checker``, never the primary itself) at weight 0.2-0.45, so every patch
carries some high-frequency structure. Generator classes:

* ``noise``    Gaussian white noise low-passed with sigma in [0.8, 2] px, random
               colour mixing, min-max stretched to [0, 1].
* ``gradient`` linear ramp at a random angle between two random colours, with
               a random smooth contrast curve.
* ``edges``    2-4 random straight cuts partitioning the patch into regions of
               random flat colour.
* ``checker``  rotated checkerboard with a random period of 4-12 px and two
               random colours at least 0.25 apart in luma.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .diffpipe import BicubicOp, LearnedDownscaler, ModelChain, loss_and_grad
from .hcd import quality
from .tensor import NonFiniteError, Rng

GENERATORS = ("noise", "gradient", "edges", "checker")
TEXTURES = ("noise", "edges", "checker")
HOLDOUT_FRACTION = 0.2
GATE_DB = 0.5
MIN_CHECKER_CONTRAST = 0.25
_LUMA = np.array([0.299, 0.587, 0.114])


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) in epoch {epoch}")
        self.epoch = epoch


@dataclass
class Corpus:
    patches: np.ndarray  # (N, C, H, W) in [0, 1]
    provenance: list[str]

    def __post_init__(self):
        if self.patches.ndim != 4 or len(self.provenance) != self.patches.shape[0]:
            raise ValueError("patches must be (N, C, H, W) with one provenance entry each")
        if self.patches.min() < 0.0 or self.patches.max() > 1.0:
            raise ValueError("patches must lie in [0, 1]")

    def __len__(self):
        return self.patches.shape[0]

    def split(self, holdout_fraction: float = HOLDOUT_FRACTION):
        """(train, holdout): the last ``holdout_fraction`` of patches by index."""
        n = len(self)
        n_hold = int(round(n * holdout_fraction))
        cut = n - n_hold
        return (
            Corpus(self.patches[:cut], self.provenance[:cut]),
            Corpus(self.patches[cut:], self.provenance[cut:]),
        )


def _coords(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return yy - (size - 1) / 2.0, xx - (size - 1) / 2.0


def _gen_noise(rng: Rng, size: int) -> np.ndarray:
    sigma = rng.uniform((), 0.8, 2.0)
    base = np.stack([gaussian_filter(rng.normal((size, size)), sigma, mode="wrap") for _ in range(3)])
    mix = rng.uniform((3, 3), -1.0, 1.0) + 1.5 * np.eye(3)
    img = np.tensordot(mix, base, axes=1)
    lo = img.min(axis=(1, 2), keepdims=True)
    hi = img.max(axis=(1, 2), keepdims=True)
    return (img - lo) / (hi - lo)


def _gen_gradient(rng: Rng, size: int) -> np.ndarray:
    yy, xx = _coords(size)
    theta = rng.uniform((), 0.0, 2 * np.pi)
    t = xx * np.cos(theta) + yy * np.sin(theta)
    t = (t - t.min()) / (t.max() - t.min())
    t = t ** rng.uniform((), 0.5, 2.0)
    c0, c1 = rng.uniform((3, 1, 1)), rng.uniform((3, 1, 1))
    return c0 + (c1 - c0) * t


def _gen_edges(rng: Rng, size: int) -> np.ndarray:
    yy, xx = _coords(size)
    n_cuts = int(rng.integers(2, 5))
    label = np.zeros((size, size), dtype=np.int64)
    for k in range(n_cuts):
        theta = rng.uniform((), 0.0, 2 * np.pi)
        off = rng.uniform((), -0.35, 0.35) * size
        label |= ((xx * np.cos(theta) + yy * np.sin(theta)) > off).astype(np.int64) << k
    colors = rng.uniform((1 << n_cuts, 3))
    return colors[label].transpose(2, 0, 1)


def _two_colors(rng: Rng, min_gap: float):
    """Two random RGB colours whose luma differs by at least ``min_gap``."""
    while True:
        c0, c1 = rng.uniform((3, 1, 1)), rng.uniform((3, 1, 1))
        if abs(float(_LUMA @ (c1 - c0).ravel())) >= min_gap:
            return c0, c1


def _gen_checker(rng: Rng, size: int) -> np.ndarray:
    yy, xx = _coords(size)
    period = rng.uniform((), 4.0, 12.0)
    theta = rng.uniform((), 0.0, np.pi / 2)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    v = -xx * np.sin(theta) + yy * np.cos(theta)
    mask = (np.floor(u / period) + np.floor(v / period)) % 2
    c0, c1 = _two_colors(rng, MIN_CHECKER_CONTRAST)
    return c0 + (c1 - c0) * mask


_GEN = {
    "noise": _gen_noise,
    "gradient": _gen_gradient,
    "edges": _gen_edges,
    "checker": _gen_checker,
}


def make_synthetic_corpus(seed: int, n: int, size: int = 48, scale: int = 2) -> Corpus:
    if n < 1:
        raise ValueError("corpus needs at least one patch")
    if size % scale:
        raise ValueError(f"patch size {size} is not divisible by scale {scale}")
    rng = Rng(seed)
    patches = np.empty((n, 3, size, size))
    prov = []
    for i in range(n):
        name = GENERATORS[i % len(GENERATORS)]
        choices = [g for g in TEXTURES if g != name]
        other = choices[int(rng.integers(0, len(choices)))]
        w = rng.uniform((), 0.2, 0.45)
        img = (1.0 - w) * _GEN[name](rng, size) + w * _GEN[other](rng, size)
        patches[i] = np.clip(img, 0.0, 1.0)
        prov.append(f"synthetic:{name}+{other}:{seed}:{i}")
    return Corpus(patches, prov)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 4
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # adam | sgd
    loss: str = "mse"
    seed: int = 0
    patch_size: int = 48
    scale: int = 2
    corpus_size: int = 250
    corpus_seed: int = 0
    train_downscaler: bool = False
    augment: bool = True  # random flips / quarter turns per batch
    schedule: str = "cosine"  # constant | cosine
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.patch_size % self.scale:
            raise ValueError("patch size must be divisible by scale")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size >= 1")


@dataclass
class TrainResult:
    chain: ModelChain
    loss_curve: list[float]
    holdout_psnr: float = float("nan")
    bicubic_psnr: float = float("nan")
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def gain_db(self) -> float:
        return self.holdout_psnr - self.bicubic_psnr

    @property
    def gate_passed(self) -> bool:
        return self.gain_db >= GATE_DB


class _Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params, grads, lr):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


class _Sgd:
    def __init__(self, params, cfg: TrainConfig):
        pass

    def update(self, params, grads, lr):
        for p, g in zip(params, grads):
            p -= lr * g


def _learning_rate(cfg: TrainConfig, step: int, total: int) -> float:
    if cfg.schedule == "constant" or total <= 1:
        return cfg.learning_rate
    return 0.5 * cfg.learning_rate * (1.0 + np.cos(np.pi * step / total))


def _augment(y: np.ndarray, k: int) -> np.ndarray:
    """One of the 8 square symmetries, applied to the whole batch."""
    y = np.rot90(y, k % 4, axes=(2, 3))
    return np.ascontiguousarray(y[..., ::-1] if k >= 4 else y)


def _lr_input(chain: ModelChain, y: np.ndarray) -> np.ndarray:
    return np.clip(chain.down(y), 0.0, 1.0)


def _batch_step(chain: ModelChain, y: np.ndarray, cfg: TrainConfig):
    x_raw = chain.down(y)
    x = np.clip(x_raw, 0.0, 1.0)
    y_hat, pre = chain.f.forward(x)
    val, g = loss_and_grad(cfg.loss, y_hat, y)
    need_x = cfg.train_downscaler and isinstance(chain.g, LearnedDownscaler)
    gx, grads = chain.f.backward(x, pre, g, need_params=True)
    flat = [a for pair in grads for a in pair]
    if need_x:
        gx = gx * ((x_raw >= 0.0) & (x_raw <= 1.0))
        flat += list(chain.g.param_grads(y, gx))
    return float(val), flat


def _params(chain: ModelChain, cfg: TrainConfig):
    ps = chain.f.arrays()
    if cfg.train_downscaler and isinstance(chain.g, LearnedDownscaler):
        ps += [chain.g.weight, chain.g.bias]
    return ps


def evaluate_holdout(chain: ModelChain, patches: np.ndarray):
    """Mean Y-PSNR of f(g(y)) and of plain bicubic up-scaling of g(y)."""
    x = _lr_input(chain, patches)
    up = BicubicOp(chain.scale).up(x)
    p_model, _ = quality(chain.up(x), patches)
    p_bic, _ = quality(up, patches)
    return float(p_model.mean()), float(p_bic.mean())


def train(chain: ModelChain, corpus: Corpus, cfg: TrainConfig | None = None,
          holdout_fraction: float = HOLDOUT_FRACTION, log=None) -> TrainResult:
    """Fit the upscaler (and optionally a learned downscaler) to ``corpus``.

    The input chain is not modified; the trained copy is returned.
    """
    import time

    cfg = cfg or TrainConfig()
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    train_set, hold = corpus.split(holdout_fraction) if holdout_fraction > 0 else (corpus, None)
    if len(train_set) == 0:
        raise ValueError("no training patches left after the hold-out split")
    chain = chain.copy()
    params = _params(chain, cfg)
    opt = _Adam(params, cfg) if cfg.optimizer == "adam" else _Sgd(params, cfg)
    rng = Rng(cfg.seed)
    data = train_set.patches
    if cfg.augment and data.shape[2] != data.shape[3]:
        raise ValueError("augmentation needs square patches")
    curve = []
    steps_per_epoch = -(-len(data) // cfg.batch_size)
    n_steps = cfg.epochs * steps_per_epoch
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        with np.errstate(all="ignore"):
            for start in range(0, len(order), cfg.batch_size):
                idx = np.sort(order[start:start + cfg.batch_size])
                batch = data[idx]
                if cfg.augment:
                    batch = _augment(batch, int(rng.integers(0, 8)))
                lr = _learning_rate(cfg, epoch * steps_per_epoch + start // cfg.batch_size, n_steps)
                try:
                    val, grads = _batch_step(chain, batch, cfg)
                except NonFiniteError:
                    raise TrainingDivergedError(epoch) from None
                if not np.isfinite(val) or not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingDivergedError(epoch)
                opt.update(params, grads, lr)
                total += val * len(idx)
        curve.append(total / len(data))
        if log is not None:
            log(epoch, curve[-1])
    result = TrainResult(chain, curve, seconds=time.perf_counter() - t0)
    if hold is not None and len(hold):
        result.holdout_psnr, result.bicubic_psnr = evaluate_holdout(chain, hold.patches)
    return result
