"""Command-line interface: ``hcdkit {train,hcd,sweep,eval,viz-delta,replay}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .collab import DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_ITERS
from .diffpipe import load_model, make_chain, save_model
from .hcd import SCHEMES, HcdConfig, quality, run_corpus, summarize
from .imaging import Image, ImageFormatError, crop_to_multiple, load_image, psnr, save_image, ssim
from .imaging.metrics import rgb_to_y_array
from .tensor import NonFiniteError
from .trainer import Corpus, TrainConfig, TrainingDivergedError, make_synthetic_corpus, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
JOBS_ENV = "HCDKIT_JOBS"
MANIFEST_FORMAT = "hcdkit-manifest"
MANIFEST_VERSION = 1
RESULT_SCHEMA = "hcdkit-result/1"
SWEEP_SCHEMA = "hcdkit-sweep/1"
EVAL_SCHEMA = "hcdkit-eval/1"
SWEEP_GRIDS = {
    "iterations": [1, 5, 10, 15, 20],
    # geometric, one decade centred on the defaults
    "alpha": [round(DEFAULT_ALPHA * 10 ** (k / 4), 6) for k in (-2, -1, 0, 1, 2)],
    "epsilon": [round(DEFAULT_EPSILON * 10 ** (k / 4), 6) for k in (-2, -1, 0, 1, 2)],
    "schemes": list(SCHEMES),
}
SWEEP_PARAM = {"iterations": "iters", "alpha": "alpha", "epsilon": "epsilon"}
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")
# keys that name output locations; `replay --into` rewrites them
_OUTPUT_KEYS = ("out", "out_dir", "plot_json")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- config file --------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys use - or _."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{n}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {}
    for act in parser._actions:
        if act.dest in ("help", "config") or not act.option_strings:
            continue
        actions[act.dest] = act
        for opt in act.option_strings:
            actions[opt.lstrip("-").replace("-", "_")] = act
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None:
            raise UsageError(f"unknown config key {key!r}")
        key = act.dest
        if isinstance(act, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            defaults[key] = raw.lower() in ("true", "1", "yes")
            continue
        try:
            val = act.type(raw) if act.type else raw
        except (TypeError, ValueError):
            raise UsageError(f"bad value for config key {key!r}: {raw!r}") from None
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"config key {key!r} must be one of {list(act.choices)}")
        defaults[key] = val
    parser.set_defaults(**defaults)


# --- helpers ----------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _jobs(value) -> int:
    if value is not None:
        return value
    env = os.environ.get(JOBS_ENV)
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"{JOBS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError(f"{JOBS_ENV} must be >= 1")
    return n


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(text)
    return v


def _load_rgb(path, scale: int) -> tuple[np.ndarray, dict]:
    """Load, auto-crop to a multiple of ``scale`` and return a (1, 3, H, W) tensor."""
    img = load_image(path)
    info = {"path": str(path), "height": img.height, "width": img.width}
    cropped = crop_to_multiple(img, scale)
    if (cropped.height, cropped.width) != (img.height, img.width):
        print(f"warning: {path}: cropped {img.height}x{img.width} to "
              f"{cropped.height}x{cropped.width} (multiple of {scale})", file=sys.stderr)
    info["cropped"] = [cropped.height, cropped.width]
    t = cropped.to_tensor()
    if t.shape[1] == 1:
        t = np.repeat(t, 3, axis=1)
    return t, info


def _image_of(t: np.ndarray) -> Image:
    return Image.from_tensor(np.clip(t[:1], 0.0, 1.0), colorspace="RGB")


def _perturb_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("perturbation")
    g.add_argument("--scheme", choices=SCHEMES, default="hierarchical")
    g.add_argument("--N", dest="n", type=int, default=DEFAULT_ITERS,
                   help="iterations per phase (N_x = N_y)")
    g.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    g.add_argument("--norm", choices=("l2", "linf"), default="l2")
    g.add_argument("--radius-mode", choices=("per_element_scaled", "absolute"),
                   default="per_element_scaled")
    g.add_argument("--init", choices=("zero", "uniform_small"), default="zero")
    g.add_argument("--loss", choices=("mse", "charbonnier"), default="mse")
    g.add_argument("--no-clamp", action="store_true", help="do not clamp x + delta to [0, 1]")
    g.add_argument("--rounds", type=_positive_int, default=1)
    g.add_argument("--seed", type=int, default=0)


def _hcd_config(a) -> HcdConfig:
    try:
        cfg = HcdConfig.make(
            a.scheme, a.n, epsilon=a.epsilon, alpha=a.alpha, norm=a.norm,
            radius_mode=a.radius_mode, init=a.init, loss=a.loss,
            pixel_clamp=not a.no_clamp, seed=a.seed,
        )
        return cfg.with_(rounds=a.rounds)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _corpus_args(p: argparse.ArgumentParser, size: int, seed: int) -> None:
    p.add_argument("--corpus", default="synthetic",
                   help="'synthetic' or a directory of PNG/PPM images")
    p.add_argument("--corpus-size", type=_positive_int, default=size)
    p.add_argument("--corpus-seed", type=int, default=seed)
    p.add_argument("--patch-size", type=_positive_int, default=48)


def _image_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"corpus directory not found: {d}")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no images in {d}")
    return files


def _load_corpus(a, scale: int) -> tuple[Corpus, dict[str, str]]:
    if a.patch_size % scale:
        raise UsageError(f"patch size {a.patch_size} is not divisible by scale {scale}")
    if a.corpus == "synthetic":
        return make_synthetic_corpus(a.corpus_seed, a.corpus_size, a.patch_size), {}
    files = _image_files(a.corpus)
    patches, prov, hashes = [], [], {}
    k = a.patch_size
    for f in files:
        hashes[str(f)] = _sha256(f)
        img = load_image(f)
        px = img.pixels if img.channels == 3 else np.repeat(img.pixels, 3, axis=2)
        for r in range(0, img.height - k + 1, k):
            for c in range(0, img.width - k + 1, k):
                patches.append(px[r:r + k, c:c + k].transpose(2, 0, 1))
                prov.append(f"file:{f.name}:{r},{c}")
    if not patches:
        raise DataError(f"no {k}x{k} patch fits in the images of {a.corpus}")
    patches, prov = patches[: a.corpus_size], prov[: a.corpus_size]
    return Corpus(np.stack(patches), prov), hashes


# --- commands -----------------------------------------------------------------

def cmd_train(a) -> dict:
    if a.scale is None:
        raise UsageError("train: --scale is required")
    if a.out is None:
        raise UsageError("train: --out is required")
    try:
        cfg = TrainConfig(
            epochs=a.epochs, batch_size=a.batch_size, learning_rate=a.lr, optimizer=a.optimizer,
            loss=a.loss, seed=a.seed, patch_size=a.patch_size, scale=a.scale,
            corpus_size=a.corpus_size, corpus_seed=a.corpus_seed,
            train_downscaler=a.learned_down, augment=not a.no_augment, schedule=a.schedule,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    corpus, hashes = _load_corpus(a, a.scale)
    try:
        chain = make_chain(a.scale, seed=a.seed, arch=a.arch, learned_down=a.learned_down)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = train(chain, corpus, cfg, holdout_fraction=a.holdout)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.chain, out)
    loss_csv = out.with_name(out.name + ".loss.csv")
    _write_csv(loss_csv, ["epoch", "loss"], [[i, repr(v)] for i, v in enumerate(result.loss_curve)])
    summary = {
        "schema": "hcdkit-train/1",
        "patches": len(corpus),
        "holdout_psnr_y": result.holdout_psnr,
        "bicubic_psnr_y": result.bicubic_psnr,
        "gain_db": result.gain_db,
        "final_loss": result.loss_curve[-1] if result.loss_curve else None,
    }
    summary_path = out.with_name(out.name + ".summary.json")
    _write_json(summary_path, summary)
    _write_json(out.with_name(out.name + ".timing.json"), {"train_seconds": result.seconds})
    print(f"trained {len(result.loss_curve)} epochs in {result.seconds:.1f}s; held-out Y-PSNR "
          f"{result.holdout_psnr:.3f} dB vs bicubic {result.bicubic_psnr:.3f} dB "
          f"({result.gain_db:+.3f} dB)")
    return {"inputs": hashes, "outputs": [out, loss_csv, summary_path],
            "manifest": out.with_name(out.name + ".manifest.json")}


def _result_record(res, info, lr_name, rec_name, stored_psnr, stored_ssim) -> dict:
    return {
        "schema": RESULT_SCHEMA,
        "input": info,
        "scheme": res.scheme,
        "psnr_y": float(res.psnr_y[0]),
        "ssim_y": float(res.ssim_y[0]),
        "psnr_y_stored_lr": stored_psnr,
        "ssim_y_stored_lr": stored_ssim,
        "lr_image": lr_name,
        "reconstruction": rec_name,
        "hr_run": res.hr_run.to_dict(0),
        "lr_run": res.lr_run.to_dict(0),
    }


def cmd_hcd(a) -> dict:
    cfg = _hcd_config(a)
    jobs = _jobs(a.jobs)
    chain = load_model(a.model)
    out_dir = Path(a.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = [Path(p).stem for p in a.inputs]
    if len(set(stems)) != len(stems):
        raise UsageError("input images must have distinct file names")
    tensors, infos = zip(*(_load_rgb(p, chain.scale) for p in a.inputs))
    if len({t.shape for t in tensors}) == 1:
        results = run_corpus(chain, np.concatenate(tensors), cfg, jobs)
    else:
        results = []
        for t in tensors:
            results += run_corpus(chain, t, cfg, 1)
    outputs, records = [], []
    for stem, t, info, res in zip(stems, tensors, infos, results):
        lr_path = out_dir / f"{stem}_lr.png"
        rec_path = out_dir / f"{stem}_recon.png"
        save_image(_image_of(res.x_out), lr_path, bit_depth=a.bit_depth)
        save_image(_image_of(res.y_recon), rec_path, bit_depth=a.bit_depth)
        # quality when the LR image goes through storage at the chosen bit depth
        stored = load_image(lr_path).to_tensor()
        sp, ss = quality(chain.up(stored), t)
        rec = _result_record(res, info, lr_path.name, rec_path.name, float(sp[0]), float(ss[0]))
        _write_json(out_dir / f"{stem}.json", rec)
        _write_json(out_dir / f"{stem}.timing.json", res.timing)
        records.append(rec)
        outputs += [lr_path, rec_path, out_dir / f"{stem}.json"]
        print(f"{stem}: psnr_y {rec['psnr_y']:.4f} dB  ssim_y {rec['ssim_y']:.5f}  "
              f"(downscale {res.downscale_seconds:.3f}s, upscale {res.upscale_seconds:.4f}s)")
    summary = {
        "schema": RESULT_SCHEMA,
        "scheme": cfg.scheme,
        "n": len(records),
        "psnr_y_mean": float(np.mean([r["psnr_y"] for r in records])),
        "ssim_y_mean": float(np.mean([r["ssim_y"] for r in records])),
        "images": [r["input"]["path"] for r in records],
    }
    _write_json(out_dir / "summary.json", summary)
    outputs.append(out_dir / "summary.json")
    hashes = {str(p): _sha256(p) for p in [*a.inputs, a.model]}
    return {"inputs": hashes, "outputs": outputs, "manifest": out_dir / "manifest.json"}


def cmd_sweep(a) -> dict:
    cfg = _hcd_config(a)
    jobs = _jobs(a.jobs)
    chain = load_model(a.model)
    if a.grid:
        items = [v.strip() for v in a.grid.split(",") if v.strip()]
    else:
        items = SWEEP_GRIDS[a.kind]
    if not items:
        raise UsageError("sweep grid is empty")
    try:
        if a.kind == "schemes":
            grid = [str(v) for v in items]
            bad = [v for v in grid if v not in SCHEMES]
            if bad:
                raise ValueError(f"unknown scheme(s) {bad}")
        elif a.kind == "iterations":
            grid = [int(v) for v in items]
            if any(v < 0 for v in grid):
                raise ValueError("iterations must be >= 0")
        else:
            grid = [float(v) for v in items]
            if any(not v > 0 for v in grid):
                raise ValueError(f"{a.kind} values must be positive")
    except ValueError as exc:
        raise UsageError(f"bad grid: {exc}") from None
    corpus, hashes = _load_corpus(a, chain.scale)
    rows = []
    for v in grid:
        if a.kind == "schemes":
            point = cfg.with_(scheme=v)
        else:
            point = cfg.with_perturb(**{SWEEP_PARAM[a.kind]: v})
        rows.append((v, summarize(run_corpus(chain, corpus.patches, point, jobs, a.batch))))
    out = Path(a.out)
    quality_cols = ["psnr_mean", "psnr_std", "ssim_mean", "ssim_std"]
    timing_cols = ["downscale_seconds_mean", "downscale_seconds_std",
                   "upscale_seconds_mean", "upscale_seconds_std", "upscale_seconds_median"]
    _write_csv(out, ["kind", "value", "n", *quality_cols],
               [[a.kind, v, s["n"], *(repr(s[c]) for c in quality_cols)] for v, s in rows])
    latency = out.with_name(out.stem + "_latency.csv")
    _write_csv(latency, ["kind", "value", *timing_cols],
               [[a.kind, v, *(repr(s[c]) for c in timing_cols)] for v, s in rows])
    outputs = [out]
    if a.plot_json:
        plot = {
            "schema": SWEEP_SCHEMA,
            "kind": a.kind,
            "x": list(grid),
            "psnr_y": [s["psnr_mean"] for _, s in rows],
            "psnr_y_std": [s["psnr_std"] for _, s in rows],
            "ssim_y": [s["ssim_mean"] for _, s in rows],
            "ssim_y_std": [s["ssim_std"] for _, s in rows],
        }
        _write_json(Path(a.plot_json), plot)
        outputs.append(Path(a.plot_json))
    for v, s in rows:
        print(f"{a.kind}={v}: psnr_y {s['psnr_mean']:.4f} dB  ssim_y {s['ssim_mean']:.5f}")
    hashes[str(a.model)] = _sha256(a.model)
    return {"inputs": hashes, "outputs": outputs,
            "manifest": out.with_name(out.name + ".manifest.json")}


def cmd_eval(a) -> dict:
    if len(a.images) % 2:
        raise UsageError("eval expects pairs of images (an even number of paths)")
    pairs, failed = [], 0
    for ref, test in zip(a.images[0::2], a.images[1::2]):
        entry = {"reference": ref, "test": test}
        try:
            ia, ib = load_image(ref), load_image(test)
            if (ia.height, ia.width, ia.channels) != (ib.height, ib.width, ib.channels):
                raise DataError(f"dimension mismatch: {ia.pixels.shape} vs {ib.pixels.shape}")
            ya, yb = _luma(ia), _luma(ib)
            entry["psnr_y"] = psnr(ya, yb, shave=a.shave)
            entry["ssim_y"] = ssim(_shave(ya, a.shave), _shave(yb, a.shave))
        except (DataError, ValueError, OSError) as exc:
            entry["error"] = str(exc)
            failed += 1
        pairs.append(entry)
    ok = [p for p in pairs if "error" not in p]
    report = {
        "schema": EVAL_SCHEMA,
        "shave": a.shave,
        "pairs": pairs,
        "aggregate": {
            "n": len(ok),
            "failed": failed,
            "psnr_y_mean": float(np.mean([p["psnr_y"] for p in ok])) if ok else None,
            "ssim_y_mean": float(np.mean([p["ssim_y"] for p in ok])) if ok else None,
        },
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    outputs = []
    if a.out:
        _write_text(Path(a.out), text)
        outputs.append(Path(a.out))
    else:
        sys.stdout.write(text)
    for p in pairs:
        if "error" in p:
            print(f"error: {p['reference']} vs {p['test']}: {p['error']}", file=sys.stderr)
    hashes = {}
    for path in a.images:
        if Path(path).is_file():
            hashes[str(path)] = _sha256(path)
    manifest = Path(a.out).with_name(Path(a.out).name + ".manifest.json") if a.out else None
    return {"inputs": hashes, "outputs": outputs, "manifest": manifest,
            "status": EXIT_DATA if failed else EXIT_OK}


def _luma(img: Image) -> np.ndarray:
    if img.colorspace == "RGB":
        return rgb_to_y_array(img.pixels)
    return img.pixels[..., 0]


def _shave(a: np.ndarray, n: int) -> np.ndarray:
    return a[n:a.shape[0] - n, n:a.shape[1] - n] if n else a


def cmd_viz_delta(a) -> dict:
    ia, ib = load_image(a.baseline), load_image(a.collaborative)
    if ia.pixels.shape != ib.pixels.shape:
        raise DataError(f"dimension mismatch: {ia.pixels.shape} vs {ib.pixels.shape}")
    diff = np.abs(ib.pixels - ia.pixels).mean(axis=2)
    peak = float(diff.max())
    norm = diff / peak if peak > 0 else np.zeros_like(diff)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(Image(norm[..., None], "Gray"), out)
    meta = out.with_name(out.name + ".json")
    _write_json(meta, {
        "schema": "hcdkit-delta/1",
        "baseline": a.baseline,
        "collaborative": a.collaborative,
        "statistic": "mean over channels of |collaborative - baseline|",
        "normaliser_max": peak,
        "mean_abs_delta": float(diff.mean()),
    })
    hashes = {a.baseline: _sha256(a.baseline), a.collaborative: _sha256(a.collaborative)}
    return {"inputs": hashes, "outputs": [out, meta],
            "manifest": out.with_name(out.name + ".manifest.json")}


def cmd_replay(a) -> dict:
    try:
        m = json.loads(Path(a.manifest).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {a.manifest}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{a.manifest}: not a manifest ({exc})") from None
    if m.get("format") != MANIFEST_FORMAT or m.get("version") != MANIFEST_VERSION:
        raise DataError(f"{a.manifest}: unsupported manifest format/version")
    for path, digest in m.get("inputs", {}).items():
        if not Path(path).is_file():
            raise DataError(f"input recorded in manifest is missing: {path}")
        if _sha256(path) != digest:
            raise DataError(f"input changed since the manifest was written: {path}")
    argv = [m["command"]]
    config = dict(m["config"])
    if a.into:
        into = Path(a.into)
        into.mkdir(parents=True, exist_ok=True)
        for key in _OUTPUT_KEYS:
            if config.get(key):
                config[key] = str(into if key == "out_dir" else into / Path(config[key]).name)
    argv += _config_to_argv(m["command"], config)
    return _run(argv)


# --- parser -----------------------------------------------------------------

def _build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    p = _Parser(prog="hcdkit", description="Hierarchical collaborative downscaling toolkit.")
    p.add_argument("--version", action="version", version=f"hcdkit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    subs = {}

    t = sub.add_parser("train", help="train the toy upscaler from scratch")
    t.add_argument("--config", help="flat key = value file (flags override it)")
    t.add_argument("--scale", type=int, choices=(2, 3, 4))
    t.add_argument("--out", help="model file to write")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    t.add_argument("--batch-size", type=_positive_int, default=TrainConfig.batch_size)
    t.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    t.add_argument("--schedule", choices=("constant", "cosine"), default=TrainConfig.schedule)
    t.add_argument("--no-augment", action="store_true")
    t.add_argument("--loss", choices=("mse", "charbonnier"), default="mse")
    t.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    t.add_argument("--arch", default=None, help="upscaler architecture string")
    t.add_argument("--learned-down", action="store_true",
                   help="use and train a strided-conv downscaler instead of bicubic")
    _corpus_args(t, TrainConfig.corpus_size, TrainConfig.corpus_seed)
    subs["train"] = t

    h = sub.add_parser("hcd", help="collaborative downscaling of image files")
    h.add_argument("--config")
    h.add_argument("--model", required=True)
    h.add_argument("--out-dir", required=True)
    h.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)
    h.add_argument("--jobs", type=_positive_int, default=None,
                   help=f"worker threads (default ${JOBS_ENV} or 1)")
    _perturb_args(h)
    h.add_argument("inputs", nargs="+", help="HR images (PNG/PPM/PGM)")
    subs["hcd"] = h

    s = sub.add_parser("sweep", help="scheme ablation or parameter sweep over a corpus")
    s.add_argument("--config")
    s.add_argument("--kind", choices=tuple(SWEEP_GRIDS), required=True)
    s.add_argument("--grid", default=None, help="comma-separated values (default per kind)")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True, help="CSV file")
    s.add_argument("--plot-json", default=None)
    s.add_argument("--batch", type=_positive_int, default=16,
                   help="images solved together (speed only)")
    s.add_argument("--jobs", type=_positive_int, default=None)
    _perturb_args(s)
    _corpus_args(s, 50, 1)
    subs["sweep"] = s

    e = sub.add_parser("eval", help="Y-channel PSNR/SSIM of image pairs")
    e.add_argument("--config")
    e.add_argument("--shave", type=int, default=0)
    e.add_argument("--out", default=None, help="JSON report (default stdout)")
    e.add_argument("images", nargs="+", help="reference test [reference test ...]")
    subs["eval"] = e

    v = sub.add_parser("viz-delta", help="normalised |difference| of two LR images")
    v.add_argument("--config")
    v.add_argument("baseline")
    v.add_argument("collaborative")
    v.add_argument("--out", required=True, help="grayscale PNG")
    subs["viz-delta"] = v

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("manifest")
    r.add_argument("--into", default=None, help="write outputs into this directory instead")
    subs["replay"] = r
    return p, subs


_COMMANDS = {
    "train": cmd_train,
    "hcd": cmd_hcd,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "viz-delta": cmd_viz_delta,
    "replay": cmd_replay,
}


def _config_to_argv(command: str, config: dict) -> list[str]:
    _, subs = _build_parser()
    argv, positional = [], []
    for act in subs[command]._actions:
        if act.dest in ("help", "config") or act.dest not in config:
            continue
        val = config[act.dest]
        if not act.option_strings:
            positional += [str(x) for x in (val if isinstance(val, list) else [val])]
        elif isinstance(act, argparse._StoreTrueAction):
            if val:
                argv.append(act.option_strings[-1])
        elif val is not None:
            argv += [act.option_strings[-1], repr(val) if isinstance(val, float) else str(val)]
    return argv + ["--"] + positional if positional else argv


def _parse(argv: list[str]):
    parser, subs = _build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in subs:
        _apply_config(subs[known.command], read_config(known.config))
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    return args


def _manifest(args, info: dict, started: str) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "tool": "hcdkit",
        "tool_version": __version__,
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": info.get("inputs", {}),
        "outputs": [str(p) for p in info.get("outputs", [])],
        "started": started,
        "finished": _now(),
    }


def _run(argv: list[str]) -> int:
    args = _parse(argv)
    started = _now()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        info = _COMMANDS[args.command](args)
    if args.command != "replay" and info.get("manifest") is not None:
        _write_json(Path(info["manifest"]), _manifest(args, info, started))
    return info.get("status", EXIT_OK) if args.command != "replay" else info


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("file not found") else f"file not found: {exc.filename}"
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, ImageFormatError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
