"""Trainable per-pixel kernel predictor and its dual-layer composition.

A small stack of stride-1 convolutions (tanh between stages) maps a degraded
image to one logit per kernel tap per dilation level at every pixel; a
per-pixel softmax over all logits turns them into a normalized KernelField,
which then filters the network's own input. Two such predictors trained in
sequence form the dual-layer model: the first recovers the bulk degradation,
the second is trained on the first's outputs to remove residual streak
artifacts.

Gradients are computed by hand-written reverse-mode differentiation (no
autograd dependency) and are checked against finite differences in the test
suite. Parameters are stored float32 (matching the checkpoint wire format);
all arithmetic runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CheckpointError, DimensionError, NumericalError
from .imagecore import ImageBuffer, from_array
from .kernel_filter import (
    DilationScheme,
    KernelField,
    apply_field_raw,
    default_scheme,
    field_weight_grad,
)

# Adam moment constants. Plain SGD (with or without momentum) is unreliable
# here: the softmax head saturates toward a hard identity filter before the
# feature convs learn to gate on streaks, and the run freezes there.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Head bias on the level-0 center tap that makes softmax an exact delta in
# float64 (exp(-750) underflows to 0), so the model is exactly the identity.
IDENTITY_LOGIT = 750.0

CHECKPOINT_MAGIC = b"DLKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class KpnArch:
    """Shape of one kernel-prediction network.

    `hidden` are the widths of the stride-1 conv stages before the head;
    every conv uses a conv_ksize x conv_ksize receptive field. The head
    emits levels * ksize**2 logit channels per pixel.
    """

    in_channels: int
    hidden: tuple[int, ...] = (32, 32, 32)
    conv_ksize: int = 3
    ksize: int = 5
    levels: int = 4

    def __post_init__(self):
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.conv_ksize < 1 or self.conv_ksize % 2 == 0:
            raise ValueError(f"conv_ksize must be odd, got {self.conv_ksize}")
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise ValueError(f"ksize must be odd, got {self.ksize}")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if any(wd < 1 for wd in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")

    @property
    def head_channels(self) -> int:
        return self.levels * self.ksize * self.ksize

    def stage_shapes(self) -> list[tuple[tuple[int, int, int, int], tuple[int]]]:
        """(weight, bias) shapes per stage, hidden stages then head."""
        shapes = []
        cin = self.in_channels
        k = self.conv_ksize
        for width in self.hidden:
            shapes.append(((k, k, cin, width), (width,)))
            cin = width
        shapes.append(((k, k, cin, self.head_channels), (self.head_channels,)))
        return shapes


@dataclass
class KpnModel:
    """One kernel predictor: architecture plus flat parameter list
    [W0, b0, W1, b1, ..., Whead, bhead]."""

    arch: KpnArch
    params: list[np.ndarray]

    def __post_init__(self):
        expected = self.arch.stage_shapes()
        if len(self.params) != 2 * len(expected):
            raise ValueError(
                f"expected {2 * len(expected)} parameter arrays, got {len(self.params)}"
            )
        for s, (wshape, bshape) in enumerate(expected):
            if tuple(self.params[2 * s].shape) != wshape:
                raise DimensionError(
                    f"stage {s} weight shape {self.params[2 * s].shape}, "
                    f"expected {wshape}"
                )
            if tuple(self.params[2 * s + 1].shape) != bshape:
                raise DimensionError(
                    f"stage {s} bias shape {self.params[2 * s + 1].shape}, "
                    f"expected {bshape}"
                )

    @property
    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params)


@dataclass
class DlkpnModel:
    """Two predictors applied in sequence; channel counts must agree."""

    layer1: KpnModel
    layer2: KpnModel

    def __post_init__(self):
        if self.layer1.arch.in_channels != self.layer2.arch.in_channels:
            raise DimensionError(
                "layer1 and layer2 must share the image channel count"
            )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    steps: int = 500
    batch: int = 4
    seed: int = 0
    crop: int = 32
    loss: str = "l1"

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.crop < 1:
            raise ValueError("crop must be >= 1")
        if self.loss != "l1":
            raise ValueError(f"unsupported loss {self.loss!r}")


def init_kpn(
    arch: KpnArch,
    seed: int = 0,
    head_center_bias: float = 0.0,
    head_scale: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> KpnModel:
    """Seeded Glorot-uniform initialization.

    head_scale scales the head weights (0 gives the all-uniform-kernel
    start); head_center_bias boosts the level-0 center-tap logit toward an
    identity-like start. Defaults keep the predicted kernels content
    dependent from the first step, which trains far more reliably than a
    zero or identity-biased head.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    params: list[np.ndarray] = []
    shapes = arch.stage_shapes()
    for s, (wshape, bshape) in enumerate(shapes):
        fan_in = wshape[0] * wshape[1] * wshape[2]
        fan_out = wshape[0] * wshape[1] * wshape[3]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        is_head = s == len(shapes) - 1
        if is_head and head_scale == 0.0:
            w = np.zeros(wshape, dtype=np.float64)
        else:
            scale = head_scale if is_head else 1.0
            w = rng.uniform(-limit, limit, size=wshape) * scale
        b = np.zeros(bshape, dtype=np.float64)
        if is_head:
            c0 = (arch.ksize - 1) // 2
            b[c0 * arch.ksize + c0] = head_center_bias
        params.append(w.astype(np.float32))
        params.append(b.astype(np.float32))
    return KpnModel(arch=arch, params=params)


def identity_params(arch: KpnArch) -> KpnModel:
    """Parameters under which the predictor reproduces its input exactly."""
    model = init_kpn(
        arch, seed=0, head_center_bias=IDENTITY_LOGIT, head_scale=0.0
    )
    for s in range(len(arch.hidden)):
        model.params[2 * s] = np.zeros_like(model.params[2 * s])
    return model


# --- differentiable pieces -------------------------------------------------

def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Stride-1 same-size convolution with replicate padding.

    Returns (output, column matrix) where the column matrix is cached for
    the backward pass.
    """
    h, wd, _ = x.shape
    k = w.shape[0]
    p = (k - 1) // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(0, 1))
    # win: (h, wd, cin, k, k) -> columns ordered (i, j, cin) to match weights
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(
        h * wd, k * k * w.shape[2]
    )
    wmat = w.astype(np.float64).reshape(k * k * w.shape[2], w.shape[3])
    out = cols @ wmat + b.astype(np.float64)[None, :]
    return out.reshape(h, wd, w.shape[3]), cols


def _conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, in_shape):
    """Gradients of a replicate-padded conv: (dW, db, dx)."""
    h, wd, cin = in_shape
    k = w.shape[0]
    p = (k - 1) // 2
    cout = w.shape[3]
    dout_mat = dout.reshape(h * wd, cout)
    dw = (cols.T @ dout_mat).reshape(k, k, cin, cout)
    db = dout_mat.sum(axis=0)
    wmat = w.astype(np.float64).reshape(k * k * cin, cout)
    dcols = (dout_mat @ wmat.T).reshape(h, wd, k, k, cin)
    dxp = np.zeros((h + 2 * p, wd + 2 * p, cin), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            dxp[i : i + h, j : j + wd] += dcols[:, :, i, j, :]
    # Fold replicate-padding margins back onto edge pixels (rows, then cols,
    # so corners flow through both reductions).
    rows = dxp[p : p + h].copy()
    if p > 0:
        rows[0] += dxp[:p].sum(axis=0)
        rows[-1] += dxp[p + h :].sum(axis=0)
    dx = rows[:, p : p + wd]
    if p > 0:
        dx[:, 0] += rows[:, :p].sum(axis=1)
        dx[:, -1] += rows[:, p + wd :].sum(axis=1)
    return dw, db, dx


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(wts: np.ndarray, dwts: np.ndarray) -> np.ndarray:
    inner = (dwts * wts).sum(axis=-1, keepdims=True)
    return wts * (dwts - inner)


@dataclass
class _ForwardCache:
    activations: list[np.ndarray]   # tanh outputs per hidden stage
    columns: list[np.ndarray]       # im2col matrices per stage (incl. head)
    soft_weights: np.ndarray        # (H, W, M) softmax output
    raw: np.ndarray                 # filtered image before clamping
    restored: np.ndarray            # clamped output


def _forward_full(
    model: KpnModel, data: np.ndarray, strides, threads: int = 1
) -> _ForwardCache:
    arch = model.arch
    x = data
    activations = []
    columns = []
    for s in range(len(arch.hidden)):
        z, cols = _conv_forward(x, model.params[2 * s], model.params[2 * s + 1])
        x = np.tanh(z)
        activations.append(x)
        columns.append(cols)
    s = len(arch.hidden)
    logits, cols = _conv_forward(x, model.params[2 * s], model.params[2 * s + 1])
    columns.append(cols)
    wts = _softmax(logits)
    h, w, _ = data.shape
    field5 = wts.reshape(h, w, arch.levels, arch.ksize, arch.ksize)
    raw = apply_field_raw(data, field5, strides, threads=threads)
    return _ForwardCache(
        activations=activations,
        columns=columns,
        soft_weights=wts,
        raw=raw,
        restored=np.clip(raw, 0.0, 1.0),
    )


@dataclass(frozen=True)
class KpnOutput:
    field: KernelField
    restored: ImageBuffer


def kpn_forward(
    model: KpnModel,
    img: ImageBuffer,
    scheme: Optional[DilationScheme] = None,
    threads: int = 1,
) -> KpnOutput:
    """Predict the kernel field for `img` and filter `img` with it."""
    arch = model.arch
    if img.channels != arch.in_channels:
        raise DimensionError(
            f"model expects {arch.in_channels} channels, image has {img.channels}"
        )
    if scheme is None:
        scheme = default_scheme(arch.levels)
    if scheme.levels != arch.levels:
        raise DimensionError(
            f"scheme has {scheme.levels} levels, model predicts {arch.levels}"
        )
    cache = _forward_full(model, img.data, scheme.strides, threads=threads)
    fld = KernelField(
        width=img.width,
        height=img.height,
        levels=arch.levels,
        ksize=arch.ksize,
        weights=cache.soft_weights.reshape(
            img.height, img.width, arch.levels, arch.ksize, arch.ksize
        ).copy(),
        normalized=True,
    )
    return KpnOutput(field=fld, restored=from_array(cache.restored))


@dataclass(frozen=True)
class DlkpnOutput:
    mid: ImageBuffer
    final: ImageBuffer


def dlkpn_infer(model: DlkpnModel, img: ImageBuffer, threads: int = 1) -> DlkpnOutput:
    """First predictor restores the input; the second predicts kernels from
    that intermediate and filters it again."""
    mid = kpn_forward(model.layer1, img, threads=threads).restored
    final = kpn_forward(model.layer2, mid, threads=threads).restored
    return DlkpnOutput(mid=mid, final=final)


def loss_l1(pred: ImageBuffer, target: ImageBuffer) -> float:
    """Mean absolute difference over all pixels and channels."""
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.abs(pred.data - target.data).mean())


def _loss_and_grads(model: KpnModel, data: np.ndarray, target: np.ndarray, strides):
    """One forward/backward pass on raw arrays; returns (loss, grads).

    The output clamp is treated as the identity during backprop and the L1
    subgradient at zero is taken as zero, so pred == target yields exact
    zero gradients.
    """
    arch = model.arch
    cache = _forward_full(model, data, strides)
    diff = cache.restored - target
    loss = float(np.abs(diff).mean())
    draw = np.sign(diff) / diff.size
    h, w, _ = data.shape
    dfield5 = field_weight_grad(data, draw, arch.ksize, strides)
    dwts = dfield5.reshape(h, w, arch.head_channels)
    dlogits = _softmax_backward(cache.soft_weights, dwts)

    grads: list[np.ndarray] = [np.empty(0)] * len(model.params)
    s = len(arch.hidden)
    head_in = cache.activations[-1] if arch.hidden else data
    dw, db, dx = _conv_backward(
        dlogits, cache.columns[s], model.params[2 * s], head_in.shape
    )
    grads[2 * s], grads[2 * s + 1] = dw, db
    for s in range(len(arch.hidden) - 1, -1, -1):
        act = cache.activations[s]
        dz = dx * (1.0 - act * act)
        stage_in = cache.activations[s - 1] if s > 0 else data
        dw, db, dx = _conv_backward(
            dz, cache.columns[s], model.params[2 * s], stage_in.shape
        )
        grads[2 * s], grads[2 * s + 1] = dw, db
    return loss, grads


def backward(model: KpnModel, img: ImageBuffer, target: ImageBuffer) -> list[np.ndarray]:
    """Exact gradients of the L1 reconstruction loss w.r.t. every parameter."""
    if img.shape != target.shape:
        raise DimensionError(f"shape mismatch {img.shape} vs {target.shape}")
    if img.channels != model.arch.in_channels:
        raise DimensionError(
            f"model expects {model.arch.in_channels} channels, got {img.channels}"
        )
    strides = default_scheme(model.arch.levels).strides
    _, grads = _loss_and_grads(model, img.data, target.data, strides)
    return grads


TrainCallback = Callable[[int, float, KpnModel], None]


def train_layer(
    pairs: Sequence[tuple[ImageBuffer, ImageBuffer]],
    cfg: TrainConfig,
    arch: Optional[KpnArch] = None,
    callback: Optional[TrainCallback] = None,
) -> KpnModel:
    """Adam training over seeded random crops of (input, target) pairs.
    Fully deterministic in (pairs, cfg, arch)."""
    if len(pairs) == 0:
        raise ValueError("training requires at least one (input, target) pair")
    for n, (inp, tgt) in enumerate(pairs):
        if inp.shape != tgt.shape:
            raise DimensionError(
                f"pair {n}: input {inp.shape} does not match target {tgt.shape}"
            )
        if inp.height < cfg.crop or inp.width < cfg.crop:
            raise DimensionError(
                f"pair {n}: crop {cfg.crop} exceeds image {inp.height}x{inp.width}"
            )
    if arch is None:
        arch = KpnArch(in_channels=pairs[0][0].channels)
    if arch.in_channels != pairs[0][0].channels:
        raise DimensionError(
            f"arch expects {arch.in_channels} channels, pairs have "
            f"{pairs[0][0].channels}"
        )
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = init_kpn(arch, rng=rng)
    strides = default_scheme(arch.levels).strides
    moment1 = [np.zeros(p.shape, dtype=np.float64) for p in model.params]
    moment2 = [np.zeros(p.shape, dtype=np.float64) for p in model.params]
    for step in range(cfg.steps):
        grad_sum = [np.zeros(p.shape, dtype=np.float64) for p in model.params]
        loss_sum = 0.0
        for _ in range(cfg.batch):
            idx = int(rng.integers(0, len(pairs)))
            inp, tgt = pairs[idx]
            y0 = int(rng.integers(0, inp.height - cfg.crop + 1))
            x0 = int(rng.integers(0, inp.width - cfg.crop + 1))
            data = inp.data[y0 : y0 + cfg.crop, x0 : x0 + cfg.crop]
            tdata = tgt.data[y0 : y0 + cfg.crop, x0 : x0 + cfg.crop]
            loss, grads = _loss_and_grads(model, data, tdata, strides)
            loss_sum += loss
            for g_acc, g in zip(grad_sum, grads):
                g_acc += g
        loss_mean = loss_sum / cfg.batch
        if not np.isfinite(loss_mean):
            raise NumericalError(f"training loss became non-finite at step {step}")
        t = step + 1
        new_params = []
        with np.errstate(invalid="ignore", over="ignore"):
            for p, m1, m2, g in zip(model.params, moment1, moment2, grad_sum):
                g = g / cfg.batch
                m1 *= ADAM_BETA1
                m1 += (1.0 - ADAM_BETA1) * g
                m2 *= ADAM_BETA2
                m2 += (1.0 - ADAM_BETA2) * g * g
                m1_hat = m1 / (1.0 - ADAM_BETA1**t)
                m2_hat = m2 / (1.0 - ADAM_BETA2**t)
                step_vec = cfg.learning_rate * m1_hat / (np.sqrt(m2_hat) + ADAM_EPS)
                new_params.append(
                    (p.astype(np.float64) - step_vec).astype(np.float32)
                )
        model = KpnModel(arch=arch, params=new_params)
        for p in model.params:
            if not np.all(np.isfinite(p)):
                raise NumericalError(
                    f"non-finite parameters after optimizer step {step}"
                )
        if callback is not None:
            callback(step, loss_mean, model)
    return model


def train_dlkpn(
    pairs: Sequence[tuple[ImageBuffer, ImageBuffer]],
    cfg1: TrainConfig,
    cfg2: TrainConfig,
    arch1: Optional[KpnArch] = None,
    arch2: Optional[KpnArch] = None,
    callback1: Optional[TrainCallback] = None,
    callback2: Optional[TrainCallback] = None,
) -> DlkpnModel:
    """Dual-layer protocol: train the first predictor on (degraded, clean),
    freeze it, run it over the training inputs, and train the second
    predictor on (first-layer output, clean)."""
    layer1 = train_layer(pairs, cfg1, arch=arch1, callback=callback1)
    mats = [
        (kpn_forward(layer1, degraded).restored, clean)
        for degraded, clean in pairs
    ]
    layer2 = train_layer(mats, cfg2, arch=arch2, callback=callback2)
    return DlkpnModel(layer1=layer1, layer2=layer2)


# --- checkpoint I/O ---------------------------------------------------------

def _write_arch(fh, arch: KpnArch) -> None:
    fh.write(struct.pack("<II", arch.in_channels, len(arch.hidden)))
    for wd in arch.hidden:
        fh.write(struct.pack("<I", wd))
    fh.write(struct.pack("<III", arch.conv_ksize, arch.ksize, arch.levels))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(
            f"truncated checkpoint: wanted {n} bytes for {what}, got {len(buf)}"
        )
    return buf


def _read_arch(fh) -> KpnArch:
    in_ch, n_hidden = struct.unpack("<II", _read_exact(fh, 8, "arch header"))
    if n_hidden > 64:
        raise CheckpointError(f"implausible hidden stage count {n_hidden}")
    hidden = tuple(
        struct.unpack("<I", _read_exact(fh, 4, "hidden width"))[0]
        for _ in range(n_hidden)
    )
    conv_k, ksize, levels = struct.unpack(
        "<III", _read_exact(fh, 12, "arch tail")
    )
    try:
        return KpnArch(
            in_channels=in_ch, hidden=hidden, conv_ksize=conv_k,
            ksize=ksize, levels=levels,
        )
    except ValueError as exc:
        raise CheckpointError(f"invalid architecture in checkpoint: {exc}") from exc


def save_checkpoint(model: DlkpnModel, path) -> None:
    """Binary checkpoint: magic, version, then per layer the architecture
    descriptor followed by all parameters as little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for layer in (model.layer1, model.layer2):
            _write_arch(fh, layer.arch)
            for p in layer.params:
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path) -> DlkpnModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(
                f"bad checkpoint magic: expected {CHECKPOINT_MAGIC!r}, "
                f"found {magic!r}"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version: expected {CHECKPOINT_VERSION}, "
                f"found {version}"
            )
        layers = []
        for _ in range(2):
            arch = _read_arch(fh)
            params = []
            for wshape, bshape in arch.stage_shapes():
                for shape in (wshape, bshape):
                    count = int(np.prod(shape))
                    raw = _read_exact(fh, 4 * count, f"parameter block {shape}")
                    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
                    params.append(arr.astype(np.float32))
            layers.append(KpnModel(arch=arch, params=params))
        extra = fh.read(1)
        if extra:
            raise CheckpointError("checkpoint has trailing bytes past layer 2")
    return DlkpnModel(layer1=layers[0], layer2=layers[1])
