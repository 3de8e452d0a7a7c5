"""Three-stage rainy-image synthesis: rain streaks, global darkening, fog.

Stage 1 blends a synthetic streak layer into the clean image with a
per-pixel retention weight (bright streaks replace, black backdrop keeps).
Stage 2 mixes in a constant darkening layer to mimic the drop in ambient
light. Stage 3 applies an optical fog model whose transmission decays
exponentially with a distance score that peaks at the image center, the
farthest scene point in road imagery.

All randomness flows through numpy's PCG64 generator, so a seed fully
determines the output on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal

from .errors import DimensionError
from .imagecore import ImageBuffer, PixelCoord, from_array

# Stage weights used when nothing else is configured: rain introduction 1.0,
# mask retention 0.2, fog attenuation 0.025, atmospheric light 0.5.
DEFAULT_BETA = 1.0
DEFAULT_GAMMA = 0.2
DEFAULT_LAMBDA = 0.025
DEFAULT_ATMOS_LIGHT = 0.5


@dataclass(frozen=True)
class RainLayerConfig:
    """Knobs for the streak layer: a seeded Gaussian noise field is
    thresholded to keep the brightest `density` fraction of pixels, then
    smeared along a rotated line kernel of length `streak_length`."""

    density: float = 0.002
    streak_length: int = 15
    angle_deg: float = 75.0
    noise_sigma: float = 1.0
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must be in [0,1], got {self.density}")
        if self.streak_length < 1:
            raise ValueError(f"streak_length must be >= 1, got {self.streak_length}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0,1], got {self.threshold}")
        if self.noise_sigma <= 0.0:
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class MaskConfig:
    """Darkening layer: output = gamma * img + (1 - gamma) * mask_value."""

    gamma: float = DEFAULT_GAMMA
    mask_value: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0,1], got {self.gamma}")
        if not 0.0 <= self.mask_value <= 1.0:
            raise ValueError(f"mask_value must be in [0,1], got {self.mask_value}")


@dataclass(frozen=True)
class FogConfig:
    """Fog model parameters.

    `lam` is the per-pixel-distance attenuation coefficient, `atmos_light`
    the ambient intensity blended in where transmission is low. `fog_scale`
    is the distance score at the fog center; when None it defaults to the
    largest center-to-corner distance so the score spans [0, S] over the
    frame. `center` defaults to the image center pixel.
    """

    lam: float = DEFAULT_LAMBDA
    atmos_light: float = DEFAULT_ATMOS_LIGHT
    fog_scale: Optional[float] = None
    center: Optional[PixelCoord] = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.atmos_light <= 1.0:
            raise ValueError(f"atmos_light must be in [0,1], got {self.atmos_light}")
        if self.fog_scale is not None and self.fog_scale <= 0.0:
            raise ValueError(f"fog_scale must be > 0, got {self.fog_scale}")


@dataclass(frozen=True)
class RcflaneConfig:
    rain: RainLayerConfig = field(default_factory=RainLayerConfig)
    beta: float = DEFAULT_BETA
    mask: MaskConfig = field(default_factory=MaskConfig)
    fog: FogConfig = field(default_factory=FogConfig)

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def with_seed(self, seed: int) -> "RcflaneConfig":
        return RcflaneConfig(
            rain=RainLayerConfig(
                density=self.rain.density,
                streak_length=self.rain.streak_length,
                angle_deg=self.rain.angle_deg,
                noise_sigma=self.rain.noise_sigma,
                threshold=self.rain.threshold,
                seed=seed,
            ),
            beta=self.beta,
            mask=self.mask,
            fog=self.fog,
        )

    def to_dict(self) -> dict:
        d = {
            "rain": {
                "density": self.rain.density,
                "streak_length": self.rain.streak_length,
                "angle_deg": self.rain.angle_deg,
                "noise_sigma": self.rain.noise_sigma,
                "threshold": self.rain.threshold,
                "seed": self.rain.seed,
            },
            "beta": self.beta,
            "mask": {"gamma": self.mask.gamma, "mask_value": self.mask.mask_value},
            "fog": {
                "lambda": self.fog.lam,
                "atmos_light": self.fog.atmos_light,
                "fog_scale": self.fog.fog_scale,
                "center": None
                if self.fog.center is None
                else {"row": self.fog.center.row, "col": self.fog.center.col},
            },
        }
        return d

    @staticmethod
    def from_dict(d: dict) -> "RcflaneConfig":
        rain = d.get("rain", {})
        mask = d.get("mask", {})
        fog = d.get("fog", {})
        center = fog.get("center")
        return RcflaneConfig(
            rain=RainLayerConfig(
                density=rain.get("density", 0.002),
                streak_length=int(rain.get("streak_length", 15)),
                angle_deg=rain.get("angle_deg", 75.0),
                noise_sigma=rain.get("noise_sigma", 1.0),
                threshold=rain.get("threshold", 0.5),
                seed=int(rain.get("seed", 0)),
            ),
            beta=d.get("beta", DEFAULT_BETA),
            mask=MaskConfig(
                gamma=mask.get("gamma", DEFAULT_GAMMA),
                mask_value=mask.get("mask_value", 0.0),
            ),
            fog=FogConfig(
                lam=fog.get("lambda", DEFAULT_LAMBDA),
                atmos_light=fog.get("atmos_light", DEFAULT_ATMOS_LIGHT),
                fog_scale=fog.get("fog_scale"),
                center=None
                if center is None
                else PixelCoord(row=int(center["row"]), col=int(center["col"])),
            ),
        )


def identity_config(seed: int = 0) -> RcflaneConfig:
    """A config under which synthesize() reproduces its input bit-exactly."""
    return RcflaneConfig(
        rain=RainLayerConfig(density=0.0, seed=seed),
        beta=0.0,
        mask=MaskConfig(gamma=1.0, mask_value=0.0),
        fog=FogConfig(lam=0.0),
    )


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Length-`length` line segment rotated by `angle_deg`, deposited with
    bilinear weights on an odd-sized grid. Angle is measured CCW from the
    +column axis (90 deg = vertical streaks)."""
    side = length if length % 2 == 1 else length + 1
    kern = np.zeros((side, side), dtype=np.float64)
    c = (side - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    dcol, drow = np.cos(theta), -np.sin(theta)
    half = (length - 1) / 2.0
    n_samples = max(4 * length, 4)
    for t in np.linspace(-half, half, n_samples):
        r = c + t * drow
        q = c + t * dcol
        r0, q0 = int(np.floor(r)), int(np.floor(q))
        fr, fq = r - r0, q - q0
        for dr, dq, wgt in (
            (0, 0, (1 - fr) * (1 - fq)),
            (0, 1, (1 - fr) * fq),
            (1, 0, fr * (1 - fq)),
            (1, 1, fr * fq),
        ):
            rr, qq = r0 + dr, q0 + dq
            if 0 <= rr < side and 0 <= qq < side:
                kern[rr, qq] += wgt
    total = kern.sum()
    if total > 0:
        kern /= total
    return kern


def gen_rain_layer(cfg: RainLayerConfig, width: int, height: int) -> ImageBuffer:
    """Generate a single-channel streak layer on a black backdrop.

    Pipeline: seeded Gaussian noise, min-max normalized; keep pixels above
    both the (1 - density) quantile and the absolute `threshold` cutoff;
    smear the survivors along a rotated line kernel; renormalize the peak
    to 1 if anything is left.
    """
    if width < 1 or height < 1:
        raise DimensionError(f"rain layer dims must be >= 1, got {width}x{height}")
    layer = np.zeros((height, width), dtype=np.float64)
    if cfg.density > 0.0:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        noise = rng.normal(0.0, cfg.noise_sigma, size=(height, width))
        lo, hi = noise.min(), noise.max()
        norm = (noise - lo) / (hi - lo) if hi > lo else np.zeros_like(noise)
        cut = max(float(np.quantile(norm, 1.0 - cfg.density)), cfg.threshold)
        seeds = np.where(norm > cut, norm, 0.0)
        if seeds.any():
            kern = _line_kernel(cfg.streak_length, cfg.angle_deg)
            layer = signal.convolve2d(seeds, kern, mode="same", boundary="fill")
            peak = layer.max()
            if peak > 0:
                layer = layer / peak
            layer = np.clip(layer, 0.0, 1.0)
    return from_array(layer)


def compute_alpha(rain: ImageBuffer) -> ImageBuffer:
    """Per-pixel retention weight: 1 where the streak layer is black, 0 at
    full streaks, so the clean image survives everywhere it is not rained on."""
    if rain.channels != 1:
        raise DimensionError("rain layer must be single-channel")
    return from_array(1.0 - rain.data[:, :, 0])


def compose_rain(orig: ImageBuffer, rain: ImageBuffer, beta: float) -> ImageBuffer:
    """Blend streaks into the image: out_c = (1 - rain) * orig_c + beta * rain,
    clamped to [0, 1]."""
    if rain.channels != 1:
        raise DimensionError("rain layer must be single-channel")
    if (rain.height, rain.width) != (orig.height, orig.width):
        raise DimensionError(
            f"rain layer {rain.height}x{rain.width} does not match "
            f"image {orig.height}x{orig.width}"
        )
    r = rain.data[:, :, 0:1]
    alpha = 1.0 - r
    out = np.clip(alpha * orig.data + beta * r, 0.0, 1.0)
    return from_array(out)


def apply_mask(img: ImageBuffer, cfg: MaskConfig) -> ImageBuffer:
    """Convex blend toward the constant darkening layer."""
    out = cfg.gamma * img.data + (1.0 - cfg.gamma) * cfg.mask_value
    return from_array(out)


def default_fog_scale(width: int, height: int, center: PixelCoord) -> float:
    """Largest distance from the fog center to an image corner."""
    corners = [(0, 0), (0, width - 1), (height - 1, 0), (height - 1, width - 1)]
    return max(
        float(np.hypot(r - center.row, c - center.col)) for r, c in corners
    )


def resolve_center(width: int, height: int, fog: FogConfig) -> PixelCoord:
    if fog.center is not None:
        return fog.center
    return PixelCoord(row=(height - 1) // 2, col=(width - 1) // 2)


def distance_field(width: int, height: int, fog: FogConfig) -> np.ndarray:
    """Distance score d = max(0, S - ||x - center||_2), maximal (= S) exactly
    at the center pixel and clamped at 0 so transmission never exceeds 1."""
    if width < 1 or height < 1:
        raise DimensionError(f"dims must be >= 1, got {width}x{height}")
    center = resolve_center(width, height, fog)
    if not (0 <= center.row < height and 0 <= center.col < width):
        raise DimensionError(
            f"fog center {center} lies outside {height}x{width} image"
        )
    scale = fog.fog_scale
    if scale is None:
        scale = default_fog_scale(width, height, center)
    rows = np.arange(height, dtype=np.float64)[:, None] - center.row
    cols = np.arange(width, dtype=np.float64)[None, :] - center.col
    dist = np.hypot(rows, cols)
    return np.maximum(0.0, scale - dist)


def transmission(dfield: np.ndarray, lam: float) -> np.ndarray:
    """Light transmission exp(-lam * d): 1 where the score is 0, minimal at
    the fog center where the score peaks."""
    if np.any(dfield < 0):
        raise ValueError("distance field must be non-negative")
    return np.exp(-lam * np.asarray(dfield, dtype=np.float64))


def apply_fog(img: ImageBuffer, td: np.ndarray, atmos_light: float) -> ImageBuffer:
    """Optical fog blend: out = img * td + A * (1 - td), per channel."""
    td = np.asarray(td, dtype=np.float64)
    if td.shape != (img.height, img.width):
        raise DimensionError(
            f"transmission field {td.shape} does not match image "
            f"{img.height}x{img.width}"
        )
    out = img.data * td[:, :, None] + atmos_light * (1.0 - td[:, :, None])
    return from_array(out)


@dataclass(frozen=True)
class SynthesisResult:
    """Final rainy image plus every intermediate stage."""

    rainy: ImageBuffer
    rain_layer: ImageBuffer
    rain_blended: ImageBuffer
    darkened: ImageBuffer
    transmission: np.ndarray


def synthesize(orig: ImageBuffer, cfg: RcflaneConfig) -> SynthesisResult:
    """Run all three stages on a clean image; deterministic in (orig, cfg)."""
    rain = gen_rain_layer(cfg.rain, orig.width, orig.height)
    blended = compose_rain(orig, rain, cfg.beta)
    darkened = apply_mask(blended, cfg.mask)
    dfield = distance_field(orig.width, orig.height, cfg.fog)
    td = transmission(dfield, cfg.fog.lam)
    rainy = apply_fog(darkened, td, cfg.fog.atmos_light)
    return SynthesisResult(
        rainy=rainy,
        rain_layer=rain,
        rain_blended=blended,
        darkened=darkened,
        transmission=td,
    )
