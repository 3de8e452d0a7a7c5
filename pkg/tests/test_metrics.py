import numpy as np
import pytest

from rainlane import (
    constant_image,
    depth_from_array,
    depth_metrics,
    from_array,
    load_depth_png,
    psnr,
    save_depth_png,
    ssim,
)
from rainlane.errors import DecodeError, DimensionError
from rainlane.metrics import DepthMap


# --- psnr ---------------------------------------------------------------------

def test_psnr_identical_is_capped():
    img = constant_image(16, 16, 3, 0.4)
    assert psnr(img, img) == 100.0


def test_psnr_uniform_offsets():
    a = constant_image(8, 8, 1, 0.5)
    b = constant_image(8, 8, 1, 0.6)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    c = constant_image(8, 8, 1, 1.0)
    d = constant_image(8, 8, 1, 0.0)
    assert psnr(c, d) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetric_and_monotone_in_noise():
    rng = np.random.Generator(np.random.PCG64(0))
    base = rng.random((20, 20, 1)) * 0.5 + 0.25
    a = from_array(base)
    prev = np.inf
    for amp in (0.01, 0.05, 0.1, 0.2):
        noisy = from_array(np.clip(base + amp * rng.standard_normal(base.shape), 0, 1))
        val = psnr(a, noisy)
        assert val == psnr(noisy, a)
        assert val < prev
        prev = val


def test_psnr_dim_mismatch():
    with pytest.raises(DimensionError):
        psnr(constant_image(4, 4, 1, 0.2), constant_image(5, 4, 1, 0.2))


# --- ssim ---------------------------------------------------------------------

def test_ssim_self_is_one():
    rng = np.random.Generator(np.random.PCG64(1))
    img = from_array(rng.random((16, 16, 3)))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)


def test_ssim_constant_images_closed_form():
    a = constant_image(16, 16, 1, 0.2)
    b = constant_image(16, 16, 1, 0.4)
    c1 = 0.01**2
    expected = (2 * 0.2 * 0.4 + c1) / (0.2**2 + 0.4**2 + c1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-12)
    assert ssim(a, b) == pytest.approx(0.80010, abs=1e-4)


def test_ssim_independent_noise_scores_low():
    for seed in range(10):
        rng = np.random.Generator(np.random.PCG64(seed))
        a = from_array(rng.random((64, 64, 1)))
        b = from_array(rng.random((64, 64, 1)))
        assert ssim(a, b) < 0.1


def test_ssim_symmetric():
    rng = np.random.Generator(np.random.PCG64(2))
    a = from_array(rng.random((24, 24, 3)))
    b = from_array(np.clip(a.data + 0.05 * rng.standard_normal(a.data.shape), 0, 1))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_rejects_small_images():
    with pytest.raises(DimensionError):
        ssim(constant_image(10, 10, 1, 0.5), constant_image(10, 10, 1, 0.5))


# --- depth maps ----------------------------------------------------------------

def test_depth_metrics_perfect_prediction():
    rng = np.random.Generator(np.random.PCG64(3))
    depth = rng.uniform(1.0, 60.0, size=(12, 16))
    gt = depth_from_array(depth)
    m = depth_metrics(gt, gt)
    assert m.abs_rel == 0.0 and m.sq_rel == 0.0
    assert m.rmse == 0.0 and m.rmse_log == 0.0 and m.log10 == 0.0
    assert (m.delta1, m.delta2, m.delta3) == (1.0, 1.0, 1.0)


def test_depth_metrics_ratio_at_delta_boundary():
    gt = depth_from_array(np.full((6, 6), 8.0))
    pred = depth_from_array(np.full((6, 6), 8.0 * 1.25))
    m = depth_metrics(pred, gt)
    assert m.abs_rel == pytest.approx(0.25, abs=1e-12)
    assert m.delta1 == 0.0  # strict inequality at the 1.25 boundary
    assert m.delta2 == 1.0
    assert m.delta3 == 1.0


def test_depth_metrics_arithmetic():
    gt = depth_from_array(np.full((4, 4), 10.0))
    pred = depth_from_array(np.full((4, 4), 12.0))
    m = depth_metrics(pred, gt)
    assert m.rmse == pytest.approx(2.0, abs=1e-12)
    assert m.abs_rel == pytest.approx(0.2, abs=1e-12)
    assert m.sq_rel == pytest.approx(0.4, abs=1e-12)


def test_depth_metrics_only_gt_valid_pixels_count():
    depth = np.full((4, 4), 10.0)
    valid = np.zeros((4, 4), dtype=bool)
    valid[0, 0] = True
    gt = depth_from_array(depth, valid)
    pred_depth = np.full((4, 4), 99.0)
    pred_depth[0, 0] = 10.0
    pred = depth_from_array(pred_depth)
    m = depth_metrics(pred, gt)
    assert m.abs_rel == 0.0


def test_depth_metrics_clamping_to_cap():
    gt = depth_from_array(np.full((2, 2), 200.0))
    pred = depth_from_array(np.full((2, 2), 500.0))
    m = depth_metrics(pred, gt, cap=80.0)
    assert m.abs_rel == 0.0  # both clamp to 80


def test_depth_metrics_scale_invariances():
    # keep every scaled depth below the 80 m clamp so the invariance is exact
    rng = np.random.Generator(np.random.PCG64(4))
    gt_d = rng.uniform(2.0, 30.0, size=(10, 10))
    pred_d = gt_d * rng.uniform(0.8, 1.3, size=(10, 10))
    m1 = depth_metrics(depth_from_array(pred_d), depth_from_array(gt_d))
    k = 1.7
    m2 = depth_metrics(depth_from_array(k * pred_d), depth_from_array(k * gt_d))
    assert m2.abs_rel == pytest.approx(m1.abs_rel, rel=1e-9)
    assert m2.rmse_log == pytest.approx(m1.rmse_log, rel=1e-9)
    assert m2.log10 == pytest.approx(m1.log10, rel=1e-9)
    assert m2.delta1 == m1.delta1 and m2.delta2 == m1.delta2
    assert m2.rmse == pytest.approx(k * m1.rmse, rel=1e-9)
    assert m2.sq_rel == pytest.approx(k * m1.sq_rel, rel=1e-9)


def test_delta_monotonicity_random():
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(10):
        gt = depth_from_array(rng.uniform(1, 70, size=(8, 8)))
        pred = depth_from_array(rng.uniform(1, 70, size=(8, 8)))
        m = depth_metrics(pred, gt)
        assert m.delta1 <= m.delta2 <= m.delta3


def test_depth_metrics_requires_valid_pixels():
    empty = DepthMap(width=2, height=2, depth=np.ones((2, 2)),
                     valid=np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        depth_metrics(empty, empty)


def test_depth_metrics_dim_mismatch():
    a = depth_from_array(np.ones((3, 3)))
    b = depth_from_array(np.ones((3, 4)))
    with pytest.raises(DimensionError):
        depth_metrics(a, b)


# --- depth png I/O ---------------------------------------------------------------

def test_depth_png_round_trip(tmp_path):
    depth = np.array([[1.0, 2.5], [0.0, 80.0]])
    valid = depth > 0
    dmap = depth_from_array(depth, valid)
    path = tmp_path / "d.png"
    save_depth_png(dmap, path)
    back = load_depth_png(path)
    assert np.array_equal(back.valid, valid)
    assert np.allclose(back.depth[valid], depth[valid], atol=1 / 256)
    # raw zero means invalid
    assert not back.valid[1, 0]


def test_depth_png_rejects_8bit(tmp_path):
    from PIL import Image

    path = tmp_path / "b.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)
    with pytest.raises(DecodeError):
        load_depth_png(path)


def test_depth_png_missing(tmp_path):
    with pytest.raises(DecodeError, match="gone.png"):
        load_depth_png(tmp_path / "gone.png")
