"""Hierarchical collaborative downscaling: HR phase, downscale, LR phase, upscale."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .collab import OptRun, PerturbConfig, empty_run, optimize_hr, optimize_lr
from .diffpipe import ModelChain, forward, loss_and_grad
from .imaging.metrics import psnr, rgb_to_y_array, ssim

SCHEMES = ("hierarchical", "lr_only", "hr_only", "baseline", "adversarial_lr")
ABLATION_SCHEMES = ("baseline", "lr_only", "hr_only", "hierarchical")
TIMING_REPEATS = 3


@dataclass(frozen=True)
class HcdConfig:
    hr: PerturbConfig = field(default_factory=PerturbConfig)
    lr: PerturbConfig = field(default_factory=PerturbConfig)
    scheme: str = "hierarchical"
    rounds: int = 1  # >1 repeats HR -> LR with warm starts (exploration only)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.hr.direction != "descend":
            raise ValueError("the HR phase is always collaborative (direction=descend)")
        if self.scheme != "adversarial_lr" and self.lr.direction != "descend":
            raise ValueError(f"scheme {self.scheme!r} needs a descending LR phase; use adversarial_lr")

    @classmethod
    def make(cls, scheme: str = "hierarchical", n: int = 15, **perturb) -> "HcdConfig":
        """Shared ``PerturbConfig`` for both phases with ``N_x = N_y = n``."""
        base = PerturbConfig(iters=n, **perturb)
        return cls(hr=base, lr=base, scheme=scheme)

    def with_(self, **kw) -> "HcdConfig":
        return replace(self, **kw)

    def with_perturb(self, **kw) -> "HcdConfig":
        return replace(self, hr=self.hr.with_(**kw), lr=self.lr.with_(**kw))

    @property
    def effective(self) -> tuple[PerturbConfig, PerturbConfig]:
        """(hr, lr) configs after the scheme has zeroed the skipped phases."""
        hr, lr = self.hr, self.lr
        if self.scheme in ("lr_only", "baseline", "adversarial_lr"):
            hr = hr.with_(iters=0)
        if self.scheme in ("hr_only", "baseline"):
            lr = lr.with_(iters=0)
        if self.scheme == "adversarial_lr":
            lr = lr.with_(direction="ascend")
        return hr, lr


@dataclass
class HcdResult:
    x_out: np.ndarray
    y_recon: np.ndarray
    hr_run: OptRun
    lr_run: OptRun
    psnr_y: np.ndarray
    ssim_y: np.ndarray
    downscale_seconds: float
    upscale_seconds: float
    scheme: str = "hierarchical"

    @property
    def metrics(self) -> dict:
        return {"psnr_y": self.psnr_y, "ssim_y": self.ssim_y}

    @property
    def timing(self) -> dict:
        return {
            "downscale_phase_seconds": self.downscale_seconds,
            "upscale_seconds": self.upscale_seconds,
        }


def quality(y_recon: np.ndarray, y: np.ndarray):
    """Per-image Y-channel (PSNR, SSIM) of a reconstruction clipped to [0, 1]."""
    rec = np.clip(y_recon, 0.0, 1.0)
    if y.shape[1] == 3:
        ry, yy = rgb_to_y_array(rec, axis=1), rgb_to_y_array(y, axis=1)
    else:
        ry, yy = rec[:, 0], y[:, 0]
    p = np.array([psnr(a, b) for a, b in zip(ry, yy)])
    s = np.array([ssim(a, b) for a, b in zip(ry, yy)])
    return p, s


def _loss_of(chain, x, y, kind):
    return loss_and_grad(kind, forward(chain, x)[0], y, per_image=True)[0]


def hcd_rescale(chain: ModelChain, y: np.ndarray, cfg: HcdConfig | None = None) -> HcdResult:
    """Run the collaborative HR phase, downscale, then the LR phase; upscale once."""
    cfg = cfg or HcdConfig()
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3:
        y = y[None]
    s = chain.scale
    if y.shape[-2] % s or y.shape[-1] % s:
        raise ValueError(f"image extents {y.shape[-2:]} are not divisible by scale {s}")
    if y.min() < 0.0 or y.max() > 1.0:
        raise ValueError("HR image values must lie in [0, 1]")
    hr_cfg, lr_cfg = cfg.effective

    t0 = time.perf_counter()
    hr_run = lr_run = None
    y_hat = y
    dx = None
    for _ in range(cfg.rounds):
        if hr_cfg.iters > 0:
            prev = hr_run.final_delta if hr_run is not None else None
            hr_run = optimize_hr(chain, y, hr_cfg, lr_offset=dx, delta0=prev)
            y_hat = hr_run.final_input
        x = chain.down(y_hat)
        if lr_cfg.iters > 0:
            lr_run = optimize_lr(chain, x, y, lr_cfg, delta0=dx)
            dx = lr_run.final_delta
            x_out = lr_run.final_input
        else:
            x_out = np.clip(x, 0.0, 1.0) if lr_cfg.pixel_clamp else x
    downscale_seconds = time.perf_counter() - t0

    y_recon = None
    upscale_seconds = float("inf")
    for _ in range(TIMING_REPEATS):
        t0 = time.perf_counter()
        out = chain.up(x_out)
        upscale_seconds = min(upscale_seconds, time.perf_counter() - t0)
        y_recon = out if y_recon is None else y_recon

    if hr_run is None:
        hr_run = empty_run(y, hr_cfg, "hr", _loss_of(chain, chain.down(y), y, hr_cfg.loss))
    if lr_run is None:
        lr_run = empty_run(x_out, lr_cfg, "lr", _loss_of(chain, x_out, y, lr_cfg.loss))
    p, q = quality(y_recon, y)
    return HcdResult(x_out, y_recon, hr_run, lr_run, p, q, downscale_seconds, upscale_seconds, cfg.scheme)


# --- corpus-level runs --------------------------------------------------------

def _images(corpus):
    if isinstance(corpus, np.ndarray):
        if corpus.ndim == 3:
            corpus = corpus[None]
        return [corpus[i:i + 1] for i in range(corpus.shape[0])]
    imgs = [np.asarray(c, dtype=np.float64) for c in corpus]
    return [c[None] if c.ndim == 3 else c for c in imgs]


def run_corpus(chain: ModelChain, corpus, cfg: HcdConfig, jobs: int = 1,
               batch: int = 1) -> list[HcdResult]:
    """One ``hcd_rescale`` per image (or per ``batch`` same-sized images), in input order.

    Balls and step sizes are per image, so batching changes only speed and the
    granularity of the timing records.
    """
    imgs = _images(corpus)
    if not imgs:
        raise ValueError("empty corpus")
    if batch > 1:
        imgs = [np.concatenate(imgs[i:i + batch]) for i in range(0, len(imgs), batch)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda im: hcd_rescale(chain, im, cfg), imgs))
    return [hcd_rescale(chain, im, cfg) for im in imgs]


def summarize(results: list[HcdResult]) -> dict:
    p = np.concatenate([r.psnr_y for r in results])
    q = np.concatenate([r.ssim_y for r in results])
    down = np.array([r.downscale_seconds for r in results])
    up = np.array([r.upscale_seconds for r in results])
    return {
        "n": int(p.size),
        "psnr_mean": float(p.mean()),
        "psnr_std": float(p.std()),
        "ssim_mean": float(q.mean()),
        "ssim_std": float(q.std()),
        "downscale_seconds_mean": float(down.mean()),
        "downscale_seconds_std": float(down.std()),
        "upscale_seconds_mean": float(up.mean()),
        "upscale_seconds_std": float(up.std()),
        "upscale_seconds_median": float(np.median(up)),
    }


def ablation_schemes(chain: ModelChain, corpus, base_cfg: HcdConfig | None = None,
                     schemes=ABLATION_SCHEMES, jobs: int = 1, batch: int = 1) -> dict[str, dict]:
    """Mean/std quality per scheme, every scheme sharing ``base_cfg``'s seeds."""
    base_cfg = base_cfg or HcdConfig()
    return {
        s: summarize(run_corpus(chain, corpus, base_cfg.with_(scheme=s), jobs, batch))
        for s in schemes
    }


def iteration_sweep(chain: ModelChain, corpus, n_list, base_cfg: HcdConfig | None = None,
                    jobs: int = 1, batch: int = 1) -> list[dict]:
    """Hierarchical scheme with ``N_x = N_y = N`` for each N."""
    n_list = list(n_list)
    if not n_list or any(int(n) != n or n < 0 for n in n_list):
        raise ValueError("N list must be non-empty and non-negative")
    return param_sweep(chain, corpus, "iters", n_list, base_cfg, jobs, batch)


def param_sweep(chain: ModelChain, corpus, param: str, grid, base_cfg: HcdConfig | None = None,
                jobs: int = 1, batch: int = 1) -> list[dict]:
    """Vary one perturbation parameter (applied to both phases) over ``grid``."""
    base_cfg = base_cfg or HcdConfig()
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    rows = []
    for v in grid:
        cfg = base_cfg.with_perturb(**{param: int(v) if param == "iters" else float(v)})
        row = {"param": param, "value": v}
        row.update(summarize(run_corpus(chain, corpus, cfg, jobs, batch)))
        rows.append(row)
    return rows
