"""Command-line interface for the full pipeline.

Subcommands: synth, build-dataset, train, infer, eval-recon, eval-depth,
bench, pipeline. Configuration comes from an optional TOML/JSON file plus
flags; flags win. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical
failure. Errors are single lines prefixed with "rainlane: error:".
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .dataset import build_dataset, load_manifest, load_pairs, per_image_seed
from .errors import DatasetError, DecodeError, NumericalError, RainlaneError
from .imagecore import ImageBuffer, from_array, load_image, save_image
from .kpn import (
    DlkpnModel,
    KpnArch,
    TrainConfig,
    dlkpn_infer,
    identity_params,
    kpn_forward,
    load_checkpoint,
    save_checkpoint,
    train_layer,
)
from .metrics import (
    DEPTH_CAP_M,
    DEPTH_METRIC_NAMES,
    depth_metrics,
    load_depth_png,
    psnr,
    ssim,
)
from .rcflane import RcflaneConfig, synthesize

THREADS_ENV_VAR = "RAINLANE_THREADS"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems on exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"rainlane: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise DecodeError(f"no such config file: {path}")
    ext = os.path.splitext(path)[1].lower()
    with open(path, "rb") as fh:
        raw = fh.read()
    if ext == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except Exception as exc:
            raise DecodeError(f"cannot parse TOML config {path}: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"cannot parse JSON config {path}: {exc}") from exc


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON synthesis config file")
    p.add_argument("--beta", type=float, help="rain introduction weight")
    p.add_argument("--gamma", type=float, help="mask retention weight")
    p.add_argument("--lambda", type=float, dest="lam",
                   help="fog attenuation coefficient")
    p.add_argument("--atmos", type=float, help="atmospheric light in [0,1]")
    p.add_argument("--fog-scale", type=float, help="fog distance score at center")
    p.add_argument("--density", type=float, help="seeded noise pixel fraction")
    p.add_argument("--streak-length", type=int, help="rain streak length, pixels")
    p.add_argument("--angle", type=float, help="streak angle, degrees CCW from +x")
    p.add_argument("--noise-sigma", type=float, help="noise field std-dev")
    p.add_argument("--threshold", type=float, help="absolute noise cutoff in [0,1]")
    p.add_argument("--mask-value", type=float, help="darkening layer intensity")
    p.add_argument("--seed", type=int, help="rain layer seed")


def _config_from_args(args) -> RcflaneConfig:
    d = _load_config_file(args.config) if args.config else {}
    base = RcflaneConfig.from_dict(d).to_dict()
    overrides = {
        ("beta",): args.beta,
        ("mask", "gamma"): args.gamma,
        ("fog", "lambda"): args.lam,
        ("fog", "atmos_light"): args.atmos,
        ("fog", "fog_scale"): args.fog_scale,
        ("rain", "density"): args.density,
        ("rain", "streak_length"): args.streak_length,
        ("rain", "angle_deg"): args.angle,
        ("rain", "noise_sigma"): args.noise_sigma,
        ("rain", "threshold"): args.threshold,
        ("mask", "mask_value"): args.mask_value,
        ("rain", "seed"): args.seed,
    }
    for keys, value in overrides.items():
        if value is None:
            continue
        node = base
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
    return RcflaneConfig.from_dict(base)


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"--hidden expects comma-separated ints, got {text!r}")
    if not widths:
        raise ValueError("--hidden needs at least one width")
    return widths


def _write_table(rows: list[dict], columns: list[str], csv_path=None) -> None:
    widths = {
        c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) if rows else len(c)
        for c in columns
    }
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    print(header)
    print("-" * len(header))
    for r in rows:
        print("  ".join(_fmt(r.get(c)).ljust(widths[c]) for c in columns))
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            for r in rows:
                writer.writerow({c: _fmt(r.get(c)) for c in columns})


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    img = load_image(args.input)
    os.makedirs(args.out, exist_ok=True)
    result = synthesize(img, cfg)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    rainy_path = os.path.join(args.out, f"{stem}_rainy.png")
    save_image(result.rainy, rainy_path)
    written = [rainy_path]
    if args.emit_intermediates:
        extras = {
            "rain_layer": result.rain_layer,
            "rain_blended": result.rain_blended,
            "darkened": result.darkened,
            "transmission": from_array(result.transmission),
        }
        for tag, buf in extras.items():
            path = os.path.join(args.out, f"{stem}_{tag}.png")
            save_image(buf, path)
            written.append(path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    cfg = _config_from_args(args)
    manifest = build_dataset(
        args.src, args.out, cfg,
        split_ratio=args.split, seed=args.dataset_seed, depth_dir=args.depth_dir,
    )
    n_train = len(manifest.split_entries("train"))
    n_test = len(manifest.split_entries("test"))
    print(
        f"built {len(manifest.entries)} pairs ({n_train} train / {n_test} test) "
        f"-> {os.path.join(args.out, 'manifest.json')}"
    )
    return EXIT_OK


def _training_pairs(manifest_path, split):
    pairs = load_pairs(manifest_path, split)
    if not pairs:
        raise DatasetError(f"manifest has no entries in split {split!r}")
    # load_pairs yields (clean, rainy); training maps degraded -> clean
    return [(rainy, clean) for clean, rainy in pairs]


def cmd_train(args) -> int:
    arch = KpnArch(
        in_channels=3,
        hidden=_parse_hidden(args.hidden),
        ksize=args.ksize,
        levels=args.levels,
    )
    train_pairs = _training_pairs(args.manifest, "train")
    in_channels = train_pairs[0][0].channels
    if in_channels != arch.in_channels:
        arch = KpnArch(
            in_channels=in_channels, hidden=arch.hidden,
            ksize=arch.ksize, levels=arch.levels,
        )
    eval_pairs = []
    if args.eval_every > 0:
        eval_pairs = [
            (rainy, clean)
            for clean, rainy in load_pairs(args.manifest, args.eval_split)
        ]

    def make_callback(layer_name):
        def callback(step, loss, model):
            if (step + 1) % args.log_every == 0 or step == 0:
                print(f"{layer_name} step {step + 1}/{args.steps} loss {loss:.5f}")
            if eval_pairs and (step + 1) % args.eval_every == 0:
                scores = [
                    psnr(kpn_forward(model, rainy).restored, clean)
                    for rainy, clean in eval_pairs
                ]
                sims = [
                    ssim(kpn_forward(model, rainy).restored, clean)
                    for rainy, clean in eval_pairs
                ]
                print(
                    f"{layer_name} step {step + 1}: held-out PSNR "
                    f"{np.mean(scores):.3f} dB, SSIM {np.mean(sims):.4f}"
                )
        return callback

    cfg = TrainConfig(
        learning_rate=args.lr, steps=args.steps, batch=args.batch,
        seed=args.train_seed, crop=args.crop,
    )
    if args.layer == "both":
        layer1 = train_layer(train_pairs, cfg, arch=arch,
                             callback=make_callback("layer1"))
        mats = [
            (kpn_forward(layer1, degraded).restored, clean)
            for degraded, clean in train_pairs
        ]
        layer2 = train_layer(mats, cfg, arch=arch,
                             callback=make_callback("layer2"))
        model = DlkpnModel(layer1=layer1, layer2=layer2)
    elif args.layer == "1":
        layer1 = train_layer(train_pairs, cfg, arch=arch,
                             callback=make_callback("layer1"))
        model = DlkpnModel(layer1=layer1, layer2=identity_params(arch))
    else:
        if not args.init_from:
            raise DatasetError("--layer 2 requires --init-from CHECKPOINT")
        prior = load_checkpoint(args.init_from)
        mats = [
            (kpn_forward(prior.layer1, degraded).restored, clean)
            for degraded, clean in train_pairs
        ]
        layer2 = train_layer(mats, cfg, arch=arch,
                             callback=make_callback("layer2"))
        model = DlkpnModel(layer1=prior.layer1, layer2=layer2)
    save_checkpoint(model, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _input_images(path) -> list[str]:
    if os.path.isdir(path):
        names = sorted(
            n for n in os.listdir(path)
            if os.path.splitext(n)[1].lower() in (".png", ".ppm")
        )
        if not names:
            raise DecodeError(f"no images in directory {path}")
        return [os.path.join(path, n) for n in names]
    return [path]


def cmd_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    for path in _input_images(args.input):
        img = load_image(path)
        result = dlkpn_infer(model, img, threads=args.threads)
        stem = os.path.splitext(os.path.basename(path))[0]
        out_path = os.path.join(args.out, f"{stem}_restored.png")
        save_image(result.final, out_path)
        print(f"wrote {out_path}")
        if args.emit_mid:
            mid_path = os.path.join(args.out, f"{stem}_mid.png")
            save_image(result.mid, mid_path)
            print(f"wrote {mid_path}")
    return EXIT_OK


def _recon_pairs_from_args(args) -> list[tuple[str, str, str]]:
    """Yield (name, restored_path, clean_path) triples."""
    triples = []
    if args.pair:
        for restored, clean in args.pair:
            triples.append((os.path.basename(restored), restored, clean))
    if args.manifest:
        manifest = load_manifest(args.manifest)
        for entry in manifest.entries:
            if args.eval_split != "all" and entry.split != args.eval_split:
                continue
            stem = os.path.splitext(os.path.basename(entry.rainy_path))[0]
            if args.restored_dir:
                restored = os.path.join(args.restored_dir, f"{stem}_restored.png")
            else:
                restored = entry.rainy_path
            triples.append((stem, restored, entry.clean_path))
    if not triples:
        raise DatasetError(
            "nothing to evaluate: provide --pair RESTORED CLEAN or --manifest"
        )
    return triples


def cmd_eval_recon(args) -> int:
    rows = []
    scores = []
    for name, restored_path, clean_path in _recon_pairs_from_args(args):
        restored = load_image(restored_path)
        clean = load_image(clean_path)
        p = psnr(restored, clean)
        s = ssim(restored, clean)
        scores.append((p, s))
        rows.append({"image": name, "psnr_db": p, "ssim": s})
    rows.append({
        "image": "mean",
        "psnr_db": float(np.mean([p for p, _ in scores])),
        "ssim": float(np.mean([s for _, s in scores])),
    })
    _write_table(rows, ["image", "psnr_db", "ssim"], csv_path=args.csv)
    return EXIT_OK


def cmd_eval_depth(args) -> int:
    if not args.pair:
        raise DatasetError("nothing to evaluate: provide --pair PRED GT")
    rows = []
    acc = []
    for pred_path, gt_path in args.pair:
        pred = load_depth_png(pred_path)
        gt = load_depth_png(gt_path)
        m = depth_metrics(pred, gt, cap=args.cap)
        acc.append(m.as_row())
        row = {"image": os.path.basename(pred_path)}
        row.update(dict(zip(DEPTH_METRIC_NAMES, m.as_row())))
        rows.append(row)
    mean_row = {"image": "mean"}
    mean_row.update(dict(zip(DEPTH_METRIC_NAMES, np.mean(acc, axis=0))))
    rows.append(mean_row)
    _write_table(rows, ["image", *DEPTH_METRIC_NAMES], csv_path=args.csv)
    return EXIT_OK


@dataclass(frozen=True)
class StageStats:
    mean_ms: float
    median_ms: float
    p95_ms: float


def _stage_stats(samples_ms: list[float]) -> StageStats:
    arr = np.sort(np.asarray(samples_ms, dtype=np.float64))
    p95_idx = max(int(np.ceil(0.95 * arr.size)) - 1, 0)
    return StageStats(
        mean_ms=float(arr.mean()),
        median_ms=float(np.median(arr)),
        p95_ms=float(arr[p95_idx]),
    )


@dataclass(frozen=True)
class BenchReport:
    """Latency summary for restoring one image, per predictor stage."""

    width: int
    height: int
    channels: int
    iterations: int
    warmup: int
    threads: int
    layer1: StageStats
    layer2: StageStats
    total: StageStats

    @property
    def single_layer_ms(self) -> float:
        return self.layer1.mean_ms

    @property
    def dual_layer_ms(self) -> float:
        return self.total.mean_ms

    def rows(self) -> list[dict]:
        out = []
        for stage, stats in (
            ("layer1", self.layer1), ("layer2", self.layer2), ("total", self.total),
        ):
            out.append({
                "width": self.width, "height": self.height,
                "channels": self.channels, "iterations": self.iterations,
                "warmup": self.warmup, "threads": self.threads,
                "stage": stage, "mean_ms": stats.mean_ms,
                "median_ms": stats.median_ms, "p95_ms": stats.p95_ms,
            })
        return out


BENCH_COLUMNS = [
    "width", "height", "channels", "iterations", "warmup", "threads",
    "stage", "mean_ms", "median_ms", "p95_ms",
]


def run_bench(
    model: DlkpnModel, img: ImageBuffer, iterations: int, warmup: int,
    threads: int = 1,
) -> BenchReport:
    """Time the two predictor stages separately over repeated single-image
    restorations; warmup runs are untimed."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    for _ in range(warmup):
        dlkpn_infer(model, img, threads=threads)
    t1, t2, tt = [], [], []
    for _ in range(iterations):
        start = time.perf_counter()
        mid = kpn_forward(model.layer1, img, threads=threads).restored
        mark = time.perf_counter()
        kpn_forward(model.layer2, mid, threads=threads)
        end = time.perf_counter()
        t1.append((mark - start) * 1e3)
        t2.append((end - mark) * 1e3)
        tt.append((end - start) * 1e3)
    return BenchReport(
        width=img.width, height=img.height, channels=img.channels,
        iterations=iterations, warmup=warmup, threads=threads,
        layer1=_stage_stats(t1), layer2=_stage_stats(t2), total=_stage_stats(tt),
    )


def cmd_bench(args) -> int:
    model = load_checkpoint(args.checkpoint)
    img = load_image(args.image)
    report = run_bench(
        model, img, iterations=args.iterations, warmup=args.warmup,
        threads=args.threads,
    )
    _write_table(report.rows(), BENCH_COLUMNS, csv_path=args.csv)
    print(
        f"single-layer {report.single_layer_ms:.2f} ms vs "
        f"dual-layer {report.dual_layer_ms:.2f} ms per image"
    )
    return EXIT_OK


def _run_depth_cmd(template: str, in_path: str, out_path: str):
    tokens = [
        tok.replace("{in}", in_path).replace("{out}", out_path)
        for tok in shlex.split(template)
    ]
    return subprocess.run(tokens, capture_output=True)


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    model = load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    columns = ["image", "rainy_psnr", "rainy_ssim", "restored_psnr", "restored_ssim"]
    want_depth = args.depth_cmd is not None
    if want_depth:
        if not args.gt_depth_dir:
            raise DatasetError("--depth-cmd requires --gt-depth-dir for evaluation")
        columns += ["depth_status", *DEPTH_METRIC_NAMES]
    rows = []
    for path in _input_images(args.clean_dir):
        name = os.path.basename(path)
        stem = os.path.splitext(name)[0]
        clean = load_image(path)
        img_cfg = cfg.with_seed(per_image_seed(cfg.rain.seed, name))
        rainy = synthesize(clean, img_cfg).rainy
        restored = dlkpn_infer(model, rainy, threads=args.threads).final
        rainy_path = os.path.join(args.out, f"{stem}_rainy.png")
        restored_path = os.path.join(args.out, f"{stem}_restored.png")
        save_image(rainy, rainy_path)
        save_image(restored, restored_path)
        row = {
            "image": name,
            "rainy_psnr": psnr(rainy, clean),
            "rainy_ssim": ssim(rainy, clean),
            "restored_psnr": psnr(restored, clean),
            "restored_ssim": ssim(restored, clean),
        }
        if want_depth:
            gt_path = os.path.join(args.gt_depth_dir, f"{stem}.png")
            pred_path = os.path.join(args.out, f"{stem}_depth.png")
            if not os.path.exists(gt_path):
                row["depth_status"] = "no-gt"
            else:
                proc = _run_depth_cmd(args.depth_cmd, restored_path, pred_path)
                if proc.returncode != 0:
                    row["depth_status"] = f"exit-{proc.returncode}"
                else:
                    m = depth_metrics(
                        load_depth_png(pred_path), load_depth_png(gt_path),
                        cap=args.cap,
                    )
                    row["depth_status"] = "ok"
                    row.update(dict(zip(DEPTH_METRIC_NAMES, m.as_row())))
        rows.append(row)
    _write_table(rows, columns, csv_path=args.csv)
    means = {
        col: float(np.mean([r[col] for r in rows]))
        for col in ("rainy_psnr", "rainy_ssim", "restored_psnr", "restored_ssim")
    }
    print(
        f"mean over {len(rows)} images: rainy {means['rainy_psnr']:.3f} dB / "
        f"{means['rainy_ssim']:.4f} SSIM, restored "
        f"{means['restored_psnr']:.3f} dB / {means['restored_ssim']:.4f} SSIM"
    )
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rainlane",
        description=(
            "Synthesize rainy road images, restore them with a dual-layer "
            "per-pixel kernel filter, and evaluate the results."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a rainy image from a clean one")
    p.add_argument("--input", required=True, help="clean input image (PNG/PPM)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-intermediates", action="store_true",
                   help="also write the rain layer, blend, darkened and "
                        "transmission stages")
    _add_synth_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-dataset",
                       help="synthesize a paired rainy/clean dataset")
    p.add_argument("--src", required=True, help="directory of clean images")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--split", type=float, default=0.872,
                   help="training fraction (default 0.872)")
    p.add_argument("--dataset-seed", type=int, default=0,
                   help="master seed for rain patterns and the split shuffle")
    p.add_argument("--depth-dir",
                   help="directory of ground-truth depth PNGs to reference")
    _add_synth_flags(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the restoration model")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--layer", choices=["1", "2", "both"], default="both",
                   help="which predictor layer(s) to train")
    p.add_argument("--init-from", help="checkpoint providing layer 1 when "
                                       "training --layer 2")
    p.add_argument("--steps", type=int, default=500, help="optimizer steps")
    p.add_argument("--lr", type=float, default=3e-3, help="learning rate")
    p.add_argument("--batch", type=int, default=4, help="crops per step")
    p.add_argument("--crop", type=int, default=32, help="square crop size")
    p.add_argument("--train-seed", type=int, default=0,
                   help="seed for init and crop sampling")
    p.add_argument("--hidden", default="32,32,32",
                   help="comma-separated hidden conv widths")
    p.add_argument("--ksize", type=int, default=5,
                   help="predicted kernel size (odd)")
    p.add_argument("--levels", type=int, default=4, help="dilation levels")
    p.add_argument("--eval-every", type=int, default=100,
                   help="evaluate held-out PSNR/SSIM every N steps (0 = off)")
    p.add_argument("--eval-split", default="test",
                   help="manifest split used for held-out evaluation")
    p.add_argument("--log-every", type=int, default=50,
                   help="print the training loss every N steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="restore image(s) with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-mid", action="store_true",
                   help="also write the first-layer intermediate output")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="row bands filtered in parallel (default "
                        f"${THREADS_ENV_VAR} or 1)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval-recon", help="PSNR/SSIM of restored vs clean images")
    p.add_argument("--pair", nargs=2, action="append",
                   metavar=("RESTORED", "CLEAN"),
                   help="one restored/clean image pair (repeatable)")
    p.add_argument("--manifest", help="evaluate images listed in a manifest")
    p.add_argument("--restored-dir",
                   help="directory of <stem>_restored.png outputs; without it "
                        "the manifest's rainy images are scored")
    p.add_argument("--eval-split", default="test",
                   choices=["train", "test", "all"],
                   help="manifest split to evaluate")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_eval_recon)

    p = sub.add_parser("eval-depth",
                       help="depth error metrics of predicted vs ground truth")
    p.add_argument("--pair", nargs=2, action="append", metavar=("PRED", "GT"),
                   help="one predicted/ground-truth 16-bit PNG pair (repeatable)")
    p.add_argument("--cap", type=float, default=DEPTH_CAP_M,
                   help="depth clamp cap in meters (default 80)")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("bench", help="single-image restoration latency")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="row bands filtered in parallel (default "
                        f"${THREADS_ENV_VAR} or 1)")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline",
                       help="synthesize, restore and score a directory of "
                            "clean images end to end")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth-cmd",
                   help="external depth model command template with {in} and "
                        "{out} placeholders, run per restored image")
    p.add_argument("--gt-depth-dir",
                   help="ground-truth depth PNGs matched by image stem")
    p.add_argument("--cap", type=float, default=DEPTH_CAP_M,
                   help="depth clamp cap in meters (default 80)")
    p.add_argument("--csv", help="also write the summary as CSV")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="row bands filtered in parallel (default "
                        f"${THREADS_ENV_VAR} or 1)")
    _add_synth_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"rainlane: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RainlaneError, ValueError, OSError) as exc:
        print(f"rainlane: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
