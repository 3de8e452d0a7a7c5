"""Acceptance suite.

Each test exercises one acceptance criterion end to end at its stated
tolerance and prints a single PASS line on success (run with -s to see them
all). Criteria:

  A1 filtering oracle equivalence          A5 depth-metric ordering
  A2 finite-difference gradient check      A6 metric closed forms
  A3 synthesis closed forms / identity     A7 end-to-end determinism
  A4 toy training gains                    A8 bench latency ordering
"""

import time

import numpy as np
import pytest

from rainlane import (
    DlkpnModel,
    KernelField,
    KpnArch,
    RainLayerConfig,
    RcflaneConfig,
    TrainConfig,
    apply_kernel_field,
    apply_kernel_field_naive,
    constant_image,
    default_scheme,
    depth_from_array,
    depth_metrics,
    dlkpn_infer,
    from_array,
    identity_config,
    identity_params,
    init_kpn,
    psnr,
    save_image,
    ssim,
    synthesize,
    train_dlkpn,
    transmission,
)
from rainlane.cli import main, run_bench
from rainlane.kpn import _loss_and_grads

from conftest import make_smooth_image, rain_only_config


def report(criterion: str, message: str) -> None:
    print(f"{criterion}: PASS - {message}")


# --- A1: oracle equivalence ---------------------------------------------------

def test_a1_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(1))
    combos = [(k, lv) for k in (1, 3, 5) for lv in (1, 4)]
    worst = 0.0
    for case in range(50):
        ksize, levels = combos[case % len(combos)]
        h = int(rng.integers(20, 65))
        w = int(rng.integers(20, 65))
        ch = int(rng.choice([1, 3]))
        img = from_array(rng.random((h, w, ch)))
        weights = rng.random((h, w, levels, ksize, ksize)) * 2.0 - 0.5
        fld = KernelField(width=w, height=h, levels=levels, ksize=ksize,
                          weights=weights)
        scheme = default_scheme(levels)
        fast = apply_kernel_field(img, fld, scheme)
        slow = apply_kernel_field_naive(img, fld, scheme)
        worst = max(worst, float(np.abs(fast.data - slow.data).max()))
        assert worst < 1e-6
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"A1 took {elapsed:.1f}s, budget is 10s"
    report("A1", f"50 cases, max |fast - naive| = {worst:.2e}, {elapsed:.1f}s")


# --- A2: gradient check ---------------------------------------------------------

def _fd_check(model, img_data, tgt_data, indices=None, eps=1e-4):
    """Max relative error between analytic and central-difference gradients.

    indices: optional list of (param_idx, flat_idx) to restrict the check;
    None checks every parameter.
    """
    strides = default_scheme(model.arch.levels).strides
    _, analytic = _loss_and_grads(model, img_data, tgt_data, strides)
    if indices is None:
        indices = [
            (pi, k)
            for pi, p in enumerate(model.params)
            for k in range(p.size)
        ]
    worst = 0.0
    for pi, k in indices:
        flat = model.params[pi].ravel()
        orig = flat[k]
        flat[k] = orig + eps
        lp, _ = _loss_and_grads(model, img_data, tgt_data, strides)
        flat[k] = orig - eps
        lm, _ = _loss_and_grads(model, img_data, tgt_data, strides)
        flat[k] = orig
        fd = (lp - lm) / (2.0 * eps)
        an = analytic[pi].ravel()[k]
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst


def test_a2_gradient_check():
    start = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(2))
    img = 0.1 + 0.8 * rng.random((8, 8, 1))
    tgt = 0.1 + 0.8 * rng.random((8, 8, 1))

    # toy KPN structure (three hidden stages + softmax head + dilation),
    # narrowed so every parameter fits the runtime budget
    toy = KpnArch(in_channels=1, hidden=(4, 4, 4), conv_ksize=3, ksize=3,
                  levels=2)
    model = init_kpn(toy, seed=3)
    model.params = [p.astype(np.float64) for p in model.params]
    n_toy = sum(p.size for p in model.params)
    worst_toy = _fd_check(model, img, tgt)
    assert worst_toy < 1e-3, f"toy KPN gradcheck failed: {worst_toy:.2e}"

    # default-width architecture, random parameter sample
    full = KpnArch(in_channels=3)
    model_full = init_kpn(full, seed=4)
    model_full.params = [p.astype(np.float64) for p in model_full.params]
    img3 = 0.1 + 0.8 * rng.random((8, 8, 3))
    tgt3 = 0.1 + 0.8 * rng.random((8, 8, 3))
    sizes = [p.size for p in model_full.params]
    indices = []
    for _ in range(200):
        pi = int(rng.integers(0, len(sizes)))
        indices.append((pi, int(rng.integers(0, sizes[pi]))))
    worst_full = _fd_check(model_full, img3, tgt3, indices=indices)
    assert worst_full < 1e-3, f"full-arch gradcheck failed: {worst_full:.2e}"

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"A2 took {elapsed:.1f}s, budget is 60s"
    report("A2", f"all {n_toy} toy params rel err {worst_toy:.2e}, "
                 f"200 sampled full-arch params rel err {worst_full:.2e}, "
                 f"{elapsed:.1f}s")


# --- A3: synthesis closed forms --------------------------------------------------

def test_a3_rcflane_closed_forms():
    start = time.perf_counter()
    img = make_smooth_image(30, size=48)
    res = synthesize(img, identity_config())
    assert np.array_equal(res.rainy.data, img.data), "identity config not exact"

    td = transmission(np.full((4, 4), 100.0), 0.025)
    assert abs(td[0, 0] - np.exp(-2.5)) < 1e-9

    rng = np.random.Generator(np.random.PCG64(5))
    small = make_smooth_image(31, size=24)
    for _ in range(20):
        cfg = RcflaneConfig(
            rain=RainLayerConfig(
                density=float(rng.uniform(0, 0.3)),
                streak_length=int(rng.integers(1, 11)),
                angle_deg=float(rng.uniform(0, 180)),
                noise_sigma=float(rng.uniform(0.3, 2.0)),
                threshold=float(rng.uniform(0, 1)),
                seed=int(rng.integers(0, 2**63)),
            ),
            beta=float(rng.uniform(0, 2)),
        )
        out = synthesize(small, cfg)
        for buf in (out.rainy, out.rain_layer, out.rain_blended, out.darkened):
            assert buf.data.min() >= 0.0 and buf.data.max() <= 1.0
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"A3 took {elapsed:.1f}s, budget is 5s"
    report("A3", f"identity exact, td(100, 0.025) = e^-2.5 within 1e-9, "
                 f"20 random configs in range, {elapsed:.1f}s")


# --- A4/A5 shared toy training ----------------------------------------------------

@pytest.fixture(scope="module")
def toy_run():
    start = time.perf_counter()
    pairs = []
    cleans = []
    for i in range(5):
        clean = make_smooth_image(100 + i, size=128)
        rainy = synthesize(clean, rain_only_config(seed=i).with_seed(i)).rainy
        pairs.append((rainy, clean))
        cleans.append(clean)
    model = train_dlkpn(
        pairs,
        TrainConfig(steps=500, seed=0),
        TrainConfig(steps=500, seed=1),
    )
    outs = [dlkpn_infer(model, rainy) for rainy, _ in pairs]
    elapsed = time.perf_counter() - start
    return {
        "pairs": pairs,
        "model": model,
        "outs": outs,
        "rainy_psnr": float(np.mean([psnr(r, c) for r, c in pairs])),
        "mid_psnr": float(np.mean(
            [psnr(o.mid, c) for o, (_, c) in zip(outs, pairs)])),
        "final_psnr": float(np.mean(
            [psnr(o.final, c) for o, (_, c) in zip(outs, pairs)])),
        "elapsed": elapsed,
    }


def test_a4_toy_training_gains(toy_run):
    rainy, mid, final = (toy_run["rainy_psnr"], toy_run["mid_psnr"],
                         toy_run["final_psnr"])
    assert mid >= rainy + 2.0, (
        f"layer 1 gain {mid - rainy:.2f} dB is below the 2 dB criterion"
    )
    assert final >= mid, (
        f"layer 2 reduced PSNR: {final:.2f} < {mid:.2f}"
    )
    assert toy_run["elapsed"] < 600.0, (
        f"A4 training took {toy_run['elapsed']:.0f}s, budget is 600s"
    )
    report("A4", f"rainy {rainy:.2f} dB -> layer1 {mid:.2f} dB "
                 f"(+{mid - rainy:.2f}) -> dual {final:.2f} dB, "
                 f"trained in {toy_run['elapsed']:.0f}s")


def quadrant_depth(height: int, width: int) -> np.ndarray:
    depth = np.empty((height, width))
    h2, w2 = height // 2, width // 2
    depth[:h2, :w2] = 5.0
    depth[:h2, w2:] = 10.0
    depth[h2:, :w2] = 20.0
    depth[h2:, w2:] = 35.0
    return depth


def depth_oracle(img, clean, base: np.ndarray):
    """Synthetic depth model: degradation inflates the predicted depth in
    proportion to the per-pixel deviation from the clean image."""
    err = np.abs(img.data - clean.data).mean(axis=2)
    return depth_from_array(base * (1.0 + err))


def test_a5_depth_ordering(toy_run):
    abs_rel_rainy = []
    abs_rel_restored = []
    for (rainy, clean), out in zip(toy_run["pairs"], toy_run["outs"]):
        base = quadrant_depth(clean.height, clean.width)
        gt = depth_from_array(base)
        abs_rel_rainy.append(depth_metrics(depth_oracle(rainy, clean, base),
                                           gt).abs_rel)
        abs_rel_restored.append(
            depth_metrics(depth_oracle(out.final, clean, base), gt).abs_rel)
    mean_rainy = float(np.mean(abs_rel_rainy))
    mean_restored = float(np.mean(abs_rel_restored))
    assert mean_restored <= mean_rainy, (
        f"restored abs_rel {mean_restored:.4f} worse than rainy {mean_rainy:.4f}"
    )
    report("A5", f"abs_rel rainy {mean_rainy:.4f} -> restored "
                 f"{mean_restored:.4f} (no worse)")


# --- A6: metric closed forms -----------------------------------------------------

def test_a6_metric_closed_forms():
    start = time.perf_counter()
    a = constant_image(16, 16, 1, 0.5)
    b = constant_image(16, 16, 1, 0.6)
    assert abs(psnr(a, b) - 20.0) < 1e-6

    c1 = constant_image(16, 16, 1, 0.2)
    c2 = constant_image(16, 16, 1, 0.4)
    k1 = 0.01**2
    expected = (2 * 0.2 * 0.4 + k1) / (0.2**2 + 0.4**2 + k1)
    assert abs(expected - 0.80010) < 1e-4
    assert abs(ssim(c1, c2) - expected) < 1e-4

    gt = depth_from_array(np.full((8, 8), 4.0))
    pred = depth_from_array(np.full((8, 8), 5.0))
    m = depth_metrics(pred, gt)
    assert (m.delta1, m.delta2, m.delta3) == (0.0, 1.0, 1.0)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"A6 took {elapsed:.2f}s, budget is 1s"
    report("A6", f"PSNR 20.000 dB, SSIM {ssim(c1, c2):.5f}, "
                 f"deltas (0, 1, 1), {elapsed:.2f}s")


# --- A7: end-to-end determinism -----------------------------------------------------

def _run_dataset_and_train(root, monkeypatch):
    clean = root / "clean"
    clean.mkdir(parents=True)
    for i in range(4):
        save_image(make_smooth_image(200 + i, size=48), clean / f"im{i}.png")
    monkeypatch.chdir(root)
    rc = main(["build-dataset", "--src", "clean", "--out", "ds",
               "--split", "0.75", "--dataset-seed", "11",
               "--density", "0.05", "--streak-length", "7"])
    assert rc == 0
    rc = main(["train", "--manifest", "ds/manifest.json", "--out", "toy.dlkpn",
               "--layer", "both", "--steps", "3", "--batch", "2",
               "--crop", "32", "--train-seed", "5", "--hidden", "4",
               "--ksize", "3", "--levels", "2", "--log-every", "100"])
    assert rc == 0
    blobs = {"ds/manifest.json": (root / "ds" / "manifest.json").read_bytes(),
             "toy.dlkpn": (root / "toy.dlkpn").read_bytes()}
    for png in sorted((root / "ds" / "rainy").iterdir()):
        blobs[f"rainy/{png.name}"] = png.read_bytes()
    return blobs


def test_a7_determinism(tmp_path, monkeypatch):
    blobs1 = _run_dataset_and_train(tmp_path / "run1", monkeypatch)
    blobs2 = _run_dataset_and_train(tmp_path / "run2", monkeypatch)
    assert blobs1.keys() == blobs2.keys()
    for name in blobs1:
        assert blobs1[name] == blobs2[name], f"{name} differs between runs"
    report("A7", f"{len(blobs1)} artifacts byte-identical across two runs "
                 "(manifest, rainy images, checkpoint)")


# --- A8: bench ordering ----------------------------------------------------------

def test_a8_bench_single_vs_dual(tmp_path):
    arch = KpnArch(in_channels=3, hidden=(4,), conv_ksize=3, ksize=3, levels=2)
    layer = identity_params(arch)
    model = DlkpnModel(layer1=layer, layer2=layer)
    img = make_smooth_image(77, size=64)
    report_obj = run_bench(model, img, iterations=5, warmup=1)
    assert report_obj.single_layer_ms < report_obj.dual_layer_ms
    assert report_obj.layer1.median_ms <= report_obj.layer1.p95_ms
    report("A8", f"single layer {report_obj.single_layer_ms:.2f} ms < "
                 f"dual {report_obj.dual_layer_ms:.2f} ms")
