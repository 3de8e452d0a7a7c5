import numpy as np
import pytest
from scipy import ndimage

from rainlane import (
    FogConfig,
    MaskConfig,
    RainLayerConfig,
    RcflaneConfig,
    from_array,
)


def make_smooth_image(seed: int, size: int = 128, channels: int = 3):
    """Deterministic natural-ish test image: bicubic upsampling of a coarse
    random grid."""
    rng = np.random.Generator(np.random.PCG64(seed))
    base = rng.random((8, 8, channels))
    img = ndimage.zoom(base, (size / 8, size / 8, 1), order=3)
    return from_array(np.clip(img, 0.0, 1.0))


def rain_only_config(seed: int = 0) -> RcflaneConfig:
    """Streaks without darkening or fog: the degradation a brightness
    preserving per-pixel filter can actually remove."""
    return RcflaneConfig(
        rain=RainLayerConfig(density=0.05, streak_length=9, angle_deg=75.0,
                             seed=seed),
        beta=1.0,
        mask=MaskConfig(gamma=1.0, mask_value=0.0),
        fog=FogConfig(lam=0.0),
    )


@pytest.fixture(scope="session")
def smooth_image_factory():
    return make_smooth_image
