import math

import numpy as np
import pytest

from mperceiver.metrics import psnr, ssim


def test_psnr_identical_is_infinite():
    img = np.random.default_rng(0).uniform(size=(3, 16, 16))
    assert psnr(img, img) == math.inf


def test_psnr_hand_evaluated():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.1)  # MSE = 0.01
    assert psnr(a, b, peak=1.0) == pytest.approx(20.0, abs=1e-6)


def test_psnr_unit_mse_is_zero_db():
    a = np.zeros((4, 4))
    b = np.ones((4, 4))
    assert psnr(a, b, peak=1.0) == pytest.approx(0.0, abs=1e-9)


def test_psnr_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(3, 8, 8)), rng.uniform(size=(3, 8, 8))
    assert psnr(a, b) == pytest.approx(psnr(b, a), rel=1e-12)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_ssim_self_is_exactly_one():
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(3, 16, 16))
    assert ssim(img, img) == 1.0


def test_ssim_anticorrelated_is_negative():
    yy, xx = np.mgrid[0:16, 0:16]
    a = ((yy + xx) % 2).astype(np.float64)
    assert ssim(a, 1.0 - a) < 0.0


def test_ssim_constant_patches_match_scalar_formula():
    a = np.full((16, 16), 0.5)
    b = np.full((16, 16), 0.6)
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    # variances and covariance vanish on constants
    want = ((2 * 0.5 * 0.6 + c1) * c2) / ((0.25 + 0.36 + c1) * c2)
    assert ssim(a, b) == pytest.approx(want, abs=1e-6)


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_ssim_bounds():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
        v = ssim(a, b)
        assert -1.0 <= v <= 1.0
