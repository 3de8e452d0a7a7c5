"""Paired rainy/clean dataset construction with deterministic manifests.

Each clean image gets one synthesized rainy counterpart. The per-image rain
seed is the dataset seed XORed with a stable hash of the file name, so a
given file always receives the same rain pattern no matter how the source
directory is ordered. The manifest embeds the full synthesis config, making
every dataset self-describing and exactly rebuildable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DatasetError
from .imagecore import ImageBuffer, load_image, save_image
from .rcflane import RcflaneConfig, synthesize

MANIFEST_VERSION = 1
IMAGE_EXTENSIONS = (".png", ".ppm")


@dataclass(frozen=True)
class ManifestEntry:
    clean_path: str
    rainy_path: str
    split: str
    gt_depth_path: Optional[str] = None


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    seed: int
    rcflane_config: RcflaneConfig
    entries: tuple[ManifestEntry, ...]

    def split_entries(self, split: str) -> list[ManifestEntry]:
        if split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {split!r}")
        return [e for e in self.entries if e.split == split]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "rcflane_config": self.rcflane_config.to_dict(),
            "entries": [
                {
                    "clean_path": e.clean_path,
                    "rainy_path": e.rainy_path,
                    "gt_depth_path": e.gt_depth_path,
                    "split": e.split,
                }
                for e in self.entries
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetManifest":
        if d.get("version") != MANIFEST_VERSION:
            raise DatasetError(
                f"unsupported manifest version {d.get('version')!r}, "
                f"expected {MANIFEST_VERSION}"
            )
        return DatasetManifest(
            version=d["version"],
            seed=d["seed"],
            rcflane_config=RcflaneConfig.from_dict(d["rcflane_config"]),
            entries=tuple(
                ManifestEntry(
                    clean_path=e["clean_path"],
                    rainy_path=e["rainy_path"],
                    gt_depth_path=e.get("gt_depth_path"),
                    split=e["split"],
                )
                for e in d["entries"]
            ),
        )


def stable_name_hash(name: str) -> int:
    """First 8 bytes of sha256 of the file name, as an unsigned 64-bit int."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


def per_image_seed(dataset_seed: int, name: str) -> int:
    return (dataset_seed ^ stable_name_hash(name)) & 0xFFFFFFFFFFFFFFFF


def split_counts(n: int, split_ratio: float) -> tuple[int, int]:
    """Round n * ratio to the nearest integer for the training share."""
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must be in (0,1), got {split_ratio}")
    n_train = int(round(n * split_ratio))
    n_train = min(max(n_train, 0), n)
    return n_train, n - n_train


def save_manifest(manifest: DatasetManifest, path) -> None:
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_manifest(path) -> DatasetManifest:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DatasetError(f"no such manifest: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        return DatasetManifest.from_dict(d)
    except KeyError as exc:
        raise DatasetError(f"manifest {path} is missing field {exc}") from exc


def build_dataset(
    src_dir,
    out_dir,
    cfg: RcflaneConfig,
    split_ratio: float,
    seed: int,
    depth_dir=None,
) -> DatasetManifest:
    """Synthesize one rainy image per clean source image and write a manifest.

    Rainy PNGs preserve the source resolution. Splits are assigned by a
    seeded shuffle; identical (src, cfg, seed) always produce byte-identical
    images and manifest.
    """
    src_dir = os.fspath(src_dir)
    out_dir = os.fspath(out_dir)
    if not os.path.isdir(src_dir):
        raise DatasetError(f"source directory does not exist: {src_dir}")
    names = sorted(
        n
        for n in os.listdir(src_dir)
        if os.path.splitext(n)[1].lower() in IMAGE_EXTENSIONS
    )
    if not names:
        raise DatasetError(f"no readable images (*.png, *.ppm) in {src_dir}")
    rainy_dir = os.path.join(out_dir, "rainy")
    os.makedirs(rainy_dir, exist_ok=True)

    n_train, _ = split_counts(len(names), split_ratio)
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(names))
    split_of = {}
    for rank, idx in enumerate(order):
        split_of[names[int(idx)]] = "train" if rank < n_train else "test"

    entries = []
    for name in names:
        clean_path = os.path.join(src_dir, name)
        clean = load_image(clean_path)
        img_cfg = cfg.with_seed(per_image_seed(seed, name))
        result = synthesize(clean, img_cfg)
        stem = os.path.splitext(name)[0]
        rainy_path = os.path.join(rainy_dir, stem + ".png")
        save_image(result.rainy, rainy_path)
        gt_depth_path = None
        if depth_dir is not None:
            candidate = os.path.join(os.fspath(depth_dir), stem + ".png")
            if os.path.exists(candidate):
                gt_depth_path = candidate
        entries.append(
            ManifestEntry(
                clean_path=clean_path,
                rainy_path=rainy_path,
                gt_depth_path=gt_depth_path,
                split=split_of[name],
            )
        )
    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        seed=seed,
        rcflane_config=cfg,
        entries=tuple(entries),
    )
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def load_pairs(manifest_path, split: str) -> list[tuple[ImageBuffer, ImageBuffer]]:
    """Decode (clean, rainy) pairs for a split, in manifest order."""
    manifest = load_manifest(manifest_path)
    pairs = []
    for n, entry in enumerate(manifest.entries):
        if entry.split != split:
            continue
        for path in (entry.clean_path, entry.rainy_path):
            if not os.path.exists(path):
                raise DatasetError(
                    f"manifest entry {n}: missing file {path}"
                )
        clean = load_image(entry.clean_path)
        rainy = load_image(entry.rainy_path)
        if (clean.height, clean.width) != (rainy.height, rainy.width):
            raise DatasetError(
                f"manifest entry {n}: clean {clean.height}x{clean.width} does "
                f"not match rainy {rainy.height}x{rainy.width}"
            )
        pairs.append((clean, rainy))
    return pairs
