"""Reconstruction quality (PSNR, SSIM) and depth-map error metrics.

PSNR is computed on unit-interval data and capped at 100 dB so identical
images yield a finite number. SSIM is the standard single-scale form:
11 x 11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range
1.0, computed on luma and averaged over valid window positions only.

Depth maps are compared over the pixels valid in the ground truth, with
both depths clamped to [1e-3, cap] meters (cap defaults to 80). Ground
truth and predictions are read from 16-bit PNGs where depth = raw / 256
and raw 0 marks invalid pixels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import signal

from .errors import DecodeError, DimensionError
from .imagecore import ImageBuffer, to_gray

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

DEPTH_MIN_M = 1e-3
DEPTH_CAP_M = 80.0
DEPTH_PNG_SCALE = 256.0


@dataclass(frozen=True)
class ReconMetrics:
    psnr_db: float
    ssim: float


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10 * log10(1 / MSE) on unit-interval data, capped at 100 dB."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kern = np.outer(g, g)
    return kern / kern.sum()


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean single-scale structural similarity over valid window positions."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise DimensionError(
            f"image {a.height}x{a.width} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    x = (to_gray(a) if a.channels == 3 else a).data[:, :, 0]
    y = (to_gray(b) if b.channels == 3 else b).data[:, :, 0]
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    def smooth(z):
        return signal.correlate2d(z, win, mode="valid")

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x**2
    var_y = smooth(y * y) - mu_y**2
    cov = smooth(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def recon_metrics(a: ImageBuffer, b: ImageBuffer) -> ReconMetrics:
    return ReconMetrics(psnr_db=psnr(a, b), ssim=ssim(a, b))


@dataclass(frozen=True)
class DepthMap:
    """Metric-depth raster with a validity mask (meters per pixel)."""

    width: int
    height: int
    depth: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.depth.shape != (self.height, self.width):
            raise DimensionError(
                f"depth shape {self.depth.shape}, expected "
                f"({self.height}, {self.width})"
            )
        if self.valid.shape != (self.height, self.width):
            raise DimensionError(
                f"valid-mask shape {self.valid.shape}, expected "
                f"({self.height}, {self.width})"
            )
        d = self.depth[self.valid]
        if d.size and (not np.all(np.isfinite(d)) or np.any(d <= 0)):
            raise ValueError("valid depth pixels must be positive and finite")


def depth_from_array(depth: np.ndarray, valid=None) -> DepthMap:
    depth = np.asarray(depth, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(depth) & (depth > 0)
    valid = np.asarray(valid, dtype=bool)
    h, w = depth.shape
    return DepthMap(width=w, height=h, depth=depth, valid=valid)


def load_depth_png(path) -> DepthMap:
    """Read a 16-bit grayscale PNG as depth = raw / 256 m; raw 0 is invalid."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DecodeError(f"no such depth file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("I", "I;16", "I;16B"):
                raise DecodeError(
                    f"depth file {path} is not a 16-bit grayscale PNG "
                    f"(mode {im.mode})"
                )
            raw = np.asarray(im, dtype=np.uint32)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode depth file {path}: {exc}") from exc
    depth = raw.astype(np.float64) / DEPTH_PNG_SCALE
    return depth_from_array(depth, valid=raw > 0)


def save_depth_png(dmap: DepthMap, path) -> None:
    """Write depth as 16-bit PNG (raw = round(depth * 256), invalid = 0)."""
    meters = np.where(dmap.valid, dmap.depth, 0.0)
    raw = np.clip(np.round(meters * DEPTH_PNG_SCALE), 0, 65535).astype(np.uint16)
    raw[~dmap.valid] = 0
    Image.fromarray(raw).save(os.fspath(path), format="PNG")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float

    def as_row(self) -> tuple[float, ...]:
        return (
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
            self.log10, self.delta1, self.delta2, self.delta3,
        )


DEPTH_METRIC_NAMES = (
    "abs_rel", "sq_rel", "rmse", "rmse_log", "log10", "delta1", "delta2", "delta3",
)


def depth_metrics(pred: DepthMap, gt: DepthMap, cap: float = DEPTH_CAP_M) -> DepthMetrics:
    """Standard six-error/three-accuracy depth evaluation over gt-valid pixels.

    delta_i is the fraction of pixels with max(d/d*, d*/d) < 1.25**i
    (strict inequality).
    """
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionError(
            f"depth maps {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    mask = gt.valid
    if not mask.any():
        raise ValueError("ground truth has no valid pixels")
    d = np.clip(pred.depth[mask], DEPTH_MIN_M, cap)
    g = np.clip(gt.depth[mask], DEPTH_MIN_M, cap)
    err = d - g
    ratio = np.maximum(d / g, g / d)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(d) - np.log(g)) ** 2))),
        log10=float(np.mean(np.abs(np.log10(d) - np.log10(g)))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )
