import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mperceiver import degrade
from mperceiver.degrade import (KINDS, MID6_RECIPES, DegradationOp, MixRecipe, NEUTRAL_PARAMS,
                                apply, apply_recipe, base_image, build_mid6, build_singles,
                                load_dataset, make_sample, recipe_labels, save_dataset)
from mperceiver.metrics import psnr


def _img(seed=0, size=64):
    return base_image(seed=seed, index=2, size=size)


@pytest.mark.parametrize("kind", KINDS)
def test_neutral_params_are_identity(kind):
    img = _img()
    out = apply(DegradationOp(kind, params=NEUTRAL_PARAMS[kind], seed=3), img)
    np.testing.assert_array_equal(out, img)


@pytest.mark.parametrize("kind", KINDS)
def test_output_stays_in_unit_range(kind):
    for seed in range(3):
        img = base_image(seed=seed, index=seed, size=64)
        out = apply(DegradationOp(kind, seed=seed), img)
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert out.shape == img.shape


@pytest.mark.parametrize("kind", KINDS)
def test_default_severity_band(kind):
    # measurably degraded but not destroyed: the single-op defaults over
    # a mixed-style image sample
    vals = []
    for seed in range(8):
        img = base_image(seed=100 + seed, index=seed, size=64)
        out = apply(DegradationOp(kind, seed=seed), img)
        vals.append(psnr(out, img))
    mean = float(np.mean(vals))
    assert 14.0 < mean < 31.0, f"{kind}: mean PSNR {mean:.2f} dB outside band"


@pytest.mark.parametrize("recipe_kinds", [(k,) for k in KINDS] + list(MID6_RECIPES))
def test_every_recipe_is_measurably_degraded(recipe_kinds):
    vals = []
    for seed in range(8):
        img = base_image(seed=7 + seed, index=seed, size=64)
        s = make_sample(img, recipe_kinds, sample_seed=seed)
        vals.append(psnr(s.lq, s.hq))
    assert float(np.mean(vals)) < 35.0


def test_haze_limits():
    img = _img()
    out1 = apply(DegradationOp("haze", params={"transmission": 1.0}, seed=0), img)
    np.testing.assert_array_equal(out1, img)
    out0 = apply(DegradationOp("haze", params={"transmission": 0.0, "airlight": 0.9}, seed=0), img)
    np.testing.assert_allclose(out0, 0.9, atol=1e-6)


def test_lowlight_power_law():
    img = np.full((3, 8, 8), 0.5, dtype=np.float32)
    out = apply(DegradationOp("lowlight", params={"gamma": 2.0, "scale": 1.0}, seed=0), img)
    np.testing.assert_allclose(out, 0.25, atol=1e-6)


def test_noise_zero_sigma_identity():
    img = _img()
    np.testing.assert_array_equal(apply(DegradationOp("noise", params={"sigma": 0.0}, seed=0), img), img)


def test_out_of_range_params_rejected():
    img = _img()
    with pytest.raises(ValueError, match="sigma"):
        apply(DegradationOp("noise", params={"sigma": 2.0}, seed=0), img)
    with pytest.raises(ValueError, match="transmission"):
        apply(DegradationOp("haze", params={"transmission": 1.5}, seed=0), img)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown degradation"):
        DegradationOp("fog", seed=0)


def test_empty_recipe_rejected():
    with pytest.raises(ValueError, match="at least one"):
        MixRecipe(())


def test_apply_is_deterministic_per_seed():
    img = _img()
    op = DegradationOp("rain", seed=11)
    np.testing.assert_array_equal(apply(op, img), apply(op, img))
    other = apply(DegradationOp("rain", seed=12), img)
    assert not np.array_equal(apply(op, img), other)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 10_000))
def test_property_unit_interval_preserved(kind, seed):
    img = base_image(seed=1, index=0, size=32)
    out = apply(DegradationOp(kind, seed=seed), img)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_recipe_order_matters():
    img = _img()
    a = apply_recipe(MixRecipe((DegradationOp("lowlight", seed=0), DegradationOp("haze", seed=0))), img)
    b = apply_recipe(MixRecipe((DegradationOp("haze", seed=0), DegradationOp("lowlight", seed=0))), img)
    assert not np.array_equal(a, b)


def test_mid6_recipes_match_the_six_mixes():
    assert ("rain", "raindrop", "noise") in MID6_RECIPES
    assert len(MID6_RECIPES) == 6
    for r in MID6_RECIPES:
        assert len(r) == 3


def test_mid6_labels_are_multi_hot():
    labels = recipe_labels(("rain", "raindrop", "noise"))
    want = np.zeros(len(KINDS))
    for k in ("rain", "raindrop", "noise"):
        want[KINDS.index(k)] = 1.0
    np.testing.assert_array_equal(labels, want)


def test_build_mid6_count_zero_is_empty():
    assert build_mid6(seed=0, base_images=[_img()], count_per_recipe=0) == []


def test_base_images_cover_styles_and_are_deterministic():
    for style in degrade.BASE_STYLES:
        img = base_image(seed=5, index=1, size=64, style=style)
        assert img.shape == (3, 64, 64)
        assert img.min() >= 0.0 and img.max() <= 1.0
        np.testing.assert_array_equal(img, base_image(seed=5, index=1, size=64, style=style))


def test_dataset_roundtrip(tmp_path):
    imgs = [base_image(seed=3, index=i) for i in range(4)]
    samples = build_singles(seed=1, base_images=imgs, count_per_kind=1)
    samples += build_mid6(seed=1, base_images=imgs, count_per_recipe=1)
    save_dataset(tmp_path / "train", samples)
    loaded = list(load_dataset(tmp_path / "train"))
    assert len(loaded) == len(samples)
    for orig, back in zip(samples, loaded):
        # pixel data survives 8-bit quantization exactly once
        np.testing.assert_array_equal(np.rint(orig.hq * 255), np.rint(back.hq * 255))
        np.testing.assert_array_equal(orig.labels, back.labels)


def test_dataset_same_seed_is_byte_identical(tmp_path):
    imgs = [base_image(seed=3, index=i) for i in range(2)]
    for name in ("a", "b"):
        samples = build_mid6(seed=9, base_images=imgs, count_per_recipe=1)
        save_dataset(tmp_path / name / "train", samples)
    for f in sorted((tmp_path / "a" / "train").iterdir()):
        other = tmp_path / "b" / "train" / f.name
        assert f.read_bytes() == other.read_bytes(), f.name


def test_empty_directory_is_empty_stream(tmp_path):
    (tmp_path / "train").mkdir()
    (tmp_path / "manifest.txt").write_text("kinds: " + " ".join(KINDS) + "\n")
    assert list(load_dataset(tmp_path / "train")) == []


def test_truncated_file_names_the_file(tmp_path):
    imgs = [_img()]
    save_dataset(tmp_path / "train", build_singles(seed=0, base_images=imgs, count_per_kind=1))
    victim = sorted((tmp_path / "train").glob("*_lq.ppm"))[0]
    victim.write_bytes(victim.read_bytes()[:-10])
    with pytest.raises(ValueError, match=victim.name):
        list(load_dataset(tmp_path / "train"))


def test_label_width_checked_against_manifest(tmp_path):
    imgs = [_img()]
    save_dataset(tmp_path / "train", build_singles(seed=0, base_images=imgs, count_per_kind=1))
    victim = sorted((tmp_path / "train").glob("*_labels.txt"))[0]
    victim.write_text("1 0\n")
    with pytest.raises(ValueError, match="labels"):
        list(load_dataset(tmp_path / "train"))
