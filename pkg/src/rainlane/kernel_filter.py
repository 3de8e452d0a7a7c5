"""Per-pixel predicted-kernel filtering with hierarchical dilation.

Each output pixel is a weighted sum of input pixels sampled on a K x K grid
around it, repeated at several dilation strides so one predicted kernel set
can erase structures at multiple scales. `apply_kernel_field` is the
slice-vectorized implementation; `apply_kernel_field_naive` is the literal
per-pixel loop kept as an independent oracle for it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .imagecore import ImageBuffer, from_array

NORMALIZATION_TOL = 1e-5


@dataclass(frozen=True)
class DilationScheme:
    """Pixel strides, one per dilation level, strictly increasing."""

    strides: tuple[int, ...]

    def __post_init__(self):
        if len(self.strides) == 0:
            raise ValueError("scheme needs at least one stride")
        if any(s < 1 for s in self.strides):
            raise ValueError(f"strides must be positive, got {self.strides}")
        if any(b <= a for a, b in zip(self.strides, self.strides[1:])):
            raise ValueError(f"strides must be strictly increasing, got {self.strides}")

    @property
    def levels(self) -> int:
        return len(self.strides)


def default_scheme(levels: int = 4) -> DilationScheme:
    """Doubling strides 1, 2, 4, ... (stride 2**r at level r)."""
    return DilationScheme(strides=tuple(2**r for r in range(levels)))


@dataclass(frozen=True)
class KernelField:
    """Per-pixel, per-level K x K filter weights.

    weights has shape (height, width, levels, ksize, ksize). A field flagged
    `normalized` promises unit weight sum per pixel across all levels and
    taps, which makes filtering preserve constant images.
    """

    width: int
    height: int
    levels: int
    ksize: int
    weights: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise ValueError(f"ksize must be odd and >= 1, got {self.ksize}")
        expected = (self.height, self.width, self.levels, self.ksize, self.ksize)
        if self.weights.shape != expected:
            raise DimensionError(
                f"weights shape {self.weights.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("kernel field contains non-finite weights")
        if self.normalized:
            sums = self.weights.reshape(self.height, self.width, -1).sum(axis=2)
            err = np.abs(sums - 1.0).max()
            if err > NORMALIZATION_TOL:
                raise ValueError(
                    f"field flagged normalized but per-pixel sums deviate by {err:.3g}"
                )
        self.weights.flags.writeable = False


def identity_field(width: int, height: int, ksize: int, levels: int) -> KernelField:
    """Delta kernels: level-0 center tap 1 at every pixel, all else 0."""
    if ksize % 2 == 0:
        raise ValueError(f"ksize must be odd, got {ksize}")
    w = np.zeros((height, width, levels, ksize, ksize), dtype=np.float64)
    c = (ksize - 1) // 2
    w[:, :, 0, c, c] = 1.0
    return KernelField(
        width=width, height=height, levels=levels, ksize=ksize, weights=w,
        normalized=True,
    )


def _check_compat(img: ImageBuffer, fld: KernelField, scheme: DilationScheme) -> None:
    if (fld.height, fld.width) != (img.height, img.width):
        raise DimensionError(
            f"field {fld.height}x{fld.width} does not match image "
            f"{img.height}x{img.width}"
        )
    if scheme.levels != fld.levels:
        raise DimensionError(
            f"scheme has {scheme.levels} levels, field has {fld.levels}"
        )
    reach = max(scheme.strides) * (fld.ksize - 1) // 2
    if reach >= max(img.height, img.width):
        raise DimensionError(
            f"max dilation reach {reach} exceeds image extent "
            f"{img.height}x{img.width}"
        )


def apply_field_raw(
    data: np.ndarray,
    weights: np.ndarray,
    strides: tuple[int, ...],
    threads: int = 1,
) -> np.ndarray:
    """Unclamped multi-level filtering of an (H, W, C) array.

    Accumulation order is fixed (level-major, then row-major over taps) so
    results are bit-identical regardless of `threads`; with threads > 1 the
    same tap loop runs per horizontal band.
    """
    h, w, _ = data.shape
    ksize = weights.shape[3]
    c0 = (ksize - 1) // 2

    def run_band(y0: int, y1: int, out: np.ndarray) -> None:
        for r, s in enumerate(strides):
            pad = s * c0
            padded = np.pad(
                data, ((pad, pad), (pad, pad), (0, 0)), mode="edge"
            )
            for i in range(ksize):
                for j in range(ksize):
                    sl = padded[s * i + y0 : s * i + y1, s * j : s * j + w, :]
                    out[y0:y1] += weights[y0:y1, :, r, i, j, None] * sl

    out = np.zeros_like(data)
    if threads <= 1 or h < 2 * threads:
        run_band(0, h, out)
        return out
    bounds = np.linspace(0, h, threads + 1, dtype=int)
    workers = [
        threading.Thread(target=run_band, args=(int(a), int(b), out))
        for a, b in zip(bounds[:-1], bounds[1:])
        if a < b
    ]
    for t in workers:
        t.start()
    for t in workers:
        t.join()
    return out


def field_weight_grad(
    data: np.ndarray, dout: np.ndarray, ksize: int, strides: tuple[int, ...]
) -> np.ndarray:
    """Adjoint of apply_field_raw with respect to the kernel weights:
    dweights[p, r, i, j] = sum_c dout[p, c] * data[p + stride_r*(tap - center), c]."""
    h, w, _ = data.shape
    c0 = (ksize - 1) // 2
    grad = np.empty((h, w, len(strides), ksize, ksize), dtype=np.float64)
    for r, s in enumerate(strides):
        pad = s * c0
        padded = np.pad(data, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
        for i in range(ksize):
            for j in range(ksize):
                sl = padded[s * i : s * i + h, s * j : s * j + w, :]
                grad[:, :, r, i, j] = (dout * sl).sum(axis=2)
    return grad


def apply_kernel_field(
    img: ImageBuffer,
    fld: KernelField,
    scheme: DilationScheme,
    threads: int = 1,
) -> ImageBuffer:
    """Filter every channel by its pixel's kernels at all dilation levels,
    replicate padding at borders, one clamp to [0,1] after the full sum."""
    _check_compat(img, fld, scheme)
    out = apply_field_raw(img.data, fld.weights, scheme.strides, threads=threads)
    return from_array(np.clip(out, 0.0, 1.0))


def apply_kernel_field_naive(
    img: ImageBuffer, fld: KernelField, scheme: DilationScheme
) -> ImageBuffer:
    """Reference implementation: the most direct loop over pixels, levels and
    taps, with border replication done by index clamping. Slow on purpose."""
    _check_compat(img, fld, scheme)
    h, w, ch = img.shape
    ksize = fld.ksize
    c0 = (ksize - 1) // 2
    data = img.data
    weights = fld.weights
    out = np.zeros((h, w, ch), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(ch, dtype=np.float64)
            for r, s in enumerate(scheme.strides):
                for i in range(ksize):
                    for j in range(ksize):
                        yy = min(max(y + s * (i - c0), 0), h - 1)
                        xx = min(max(x + s * (j - c0), 0), w - 1)
                        acc += weights[y, x, r, i, j] * data[yy, xx, :]
            out[y, x] = np.minimum(np.maximum(acc, 0.0), 1.0)
    return from_array(out)
