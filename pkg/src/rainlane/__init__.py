"""rainlane: synthesize rainy road images, restore them with a dual-layer
per-pixel kernel filter, and evaluate reconstruction and depth accuracy."""

from .errors import (
    CheckpointError,
    DatasetError,
    DecodeError,
    DimensionError,
    NumericalError,
    RainlaneError,
)
from .imagecore import (
    ImageBuffer,
    PixelCoord,
    constant_image,
    from_array,
    load_image,
    save_image,
    to_gray,
)
from .rcflane import (
    FogConfig,
    MaskConfig,
    RainLayerConfig,
    RcflaneConfig,
    SynthesisResult,
    apply_fog,
    apply_mask,
    compose_rain,
    compute_alpha,
    distance_field,
    gen_rain_layer,
    identity_config,
    synthesize,
    transmission,
)
from .kernel_filter import (
    DilationScheme,
    KernelField,
    apply_kernel_field,
    apply_kernel_field_naive,
    default_scheme,
    identity_field,
)
from .kpn import (
    DlkpnModel,
    DlkpnOutput,
    KpnArch,
    KpnModel,
    KpnOutput,
    TrainConfig,
    backward,
    dlkpn_infer,
    identity_params,
    init_kpn,
    kpn_forward,
    load_checkpoint,
    loss_l1,
    save_checkpoint,
    train_dlkpn,
    train_layer,
)
from .metrics import (
    DepthMap,
    DepthMetrics,
    ReconMetrics,
    depth_from_array,
    depth_metrics,
    load_depth_png,
    psnr,
    recon_metrics,
    save_depth_png,
    ssim,
)
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    build_dataset,
    load_manifest,
    load_pairs,
    save_manifest,
    split_counts,
)

__version__ = "0.1.0"
