"""Image representation and file I/O.

Images are kept as unit-interval float64 rasters; the 0-255 integer scale
exists only at the file boundary. Quantization on save is round-half-up so
that golden-image comparisons are bit-exact across platforms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

# Rec. 601 luma coefficients, used by to_gray and by SSIM's default mode.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114


@dataclass(frozen=True)
class PixelCoord:
    """A (row, col) position inside an image raster."""

    row: int
    col: int


@dataclass(frozen=True)
class ImageBuffer:
    """Dense H x W x C raster of intensities in [0, 1].

    ``data`` has shape (height, width, channels), dtype float64, and is
    marked read-only so buffers can be shared freely between threads.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise DimensionError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise DimensionError(
                f"image dims must be >= 1, got {self.width}x{self.height}"
            )
        if self.data.shape != (self.height, self.width, self.channels):
            raise DimensionError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data contains non-finite values")
        self.data.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


def from_array(arr: np.ndarray) -> ImageBuffer:
    """Wrap a (H, W), (H, W, 1) or (H, W, 3) array as an ImageBuffer.

    The array is copied and cast to float64; values are not clamped, so
    out-of-range inputs fail the buffer invariant only if non-finite.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DimensionError(f"expected 2-D or 3-D array, got ndim={a.ndim}")
    h, w, c = a.shape
    return ImageBuffer(width=w, height=h, channels=c, data=a.copy())


def constant_image(width: int, height: int, channels: int, value: float) -> ImageBuffer:
    return from_array(np.full((height, width, channels), value, dtype=np.float64))


def quantize(data: np.ndarray) -> np.ndarray:
    """Map unit-interval values to bytes: round(v * 255) half-up, clamped."""
    return np.clip(np.floor(data * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)


def load_image(path) -> ImageBuffer:
    """Load an 8-bit grayscale or RGB PNG/PPM as a unit-interval buffer."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DecodeError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            elif mode in ("I", "I;16", "I;16B", "F"):
                raise DecodeError(
                    f"unsupported bit depth (mode {mode}) in {path}: "
                    "only 8-bit grayscale/RGB is accepted"
                )
            else:
                raise DecodeError(
                    f"unsupported image mode {mode} in {path}: "
                    "only 8-bit grayscale/RGB is accepted"
                )
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode image file {path}: {exc}") from exc
    return from_array(arr.astype(np.float64) / 255.0)


def save_image(img: ImageBuffer, path) -> None:
    """Write a buffer as 8-bit PNG (or binary PPM/PGM if path ends in .ppm)."""
    path = os.fspath(path)
    bytes_ = quantize(img.data)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        _save_ppm(bytes_, path)
        return
    if img.channels == 1:
        pil = Image.fromarray(bytes_[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(bytes_, mode="RGB")
    pil.save(path, format="PNG")


def _save_ppm(bytes_: np.ndarray, path: str) -> None:
    h, w, c = bytes_.shape
    magic = b"P6" if c == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(bytes_.tobytes())


def to_gray(img: ImageBuffer) -> ImageBuffer:
    """Collapse RGB to single-channel luma (0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise DimensionError(f"to_gray expects 3 channels, got {img.channels}")
    luma = (
        LUMA_R * img.data[:, :, 0]
        + LUMA_G * img.data[:, :, 1]
        + LUMA_B * img.data[:, :, 2]
    )
    return from_array(luma)
