import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iharmon.augment import (
    AUGMENTATION_NAMES,
    BRIGHTNESS_RANGE,
    CONTRAST_RANGE,
    GAMMA_RANGE,
    apply_augmentation,
    apply_brightness_contrast,
    apply_color_jitter,
    apply_gamma,
    apply_local_lighting,
    apply_lut3d,
    blend_overlay,
    hsv_to_rgb,
    identity_lut,
    random_lut,
    rgb_to_hsv,
    sample_augmentation,
    smooth_noise,
)


@pytest.fixture
def img(rng):
    return rng.random((16, 16, 3))


@pytest.fixture
def half_mask():
    m = np.zeros((16, 16))
    m[:, :8] = 1.0
    return m


class TestIdentityParameters:
    def test_gamma_1_is_noop(self, img, half_mask):
        assert np.array_equal(apply_gamma(img, half_mask, 1.0), img)

    def test_brightness0_contrast1_is_noop(self, img, half_mask):
        out = apply_brightness_contrast(img, half_mask, 0.0, 1.0)
        assert np.array_equal(out, img)

    def test_jitter_identity_is_noop(self, img, half_mask):
        out = apply_color_jitter(img, half_mask, 0.0, 1.0)
        assert np.array_equal(out, img)

    def test_identity_lut_is_noop(self, img, half_mask):
        out = apply_lut3d(img, half_mask, identity_lut(4))
        assert np.allclose(out, img, atol=1e-12)


class TestMaskRestriction:
    @pytest.mark.parametrize("name", AUGMENTATION_NAMES)
    def test_outside_mask_untouched(self, name, img, half_mask, rng):
        desc = None
        # draw until the sampler yields the op under test
        r = np.random.default_rng(0)
        for _ in range(500):
            d = sample_augmentation(r)
            if d["op"] == name:
                desc = d
                break
        assert desc is not None
        out = apply_augmentation(img, half_mask, desc)
        outside = half_mask <= 0.5
        assert np.array_equal(out[outside], img[outside])


class TestBlendFormulas:
    def test_soft_light_scalar_cases(self):
        # b <= 0.5 branch: 2ab + a^2(1-2b)
        a, b = 0.4, 0.3
        want = 2 * a * b + a * a * (1 - 2 * b)
        assert blend_overlay(np.array(a), np.array(b), "soft_light") == pytest.approx(want)
        # b > 0.5 branch: 2a(1-b) + sqrt(a)(2b-1)
        a, b = 0.4, 0.8
        want = 2 * a * (1 - b) + np.sqrt(a) * (2 * b - 1)
        assert blend_overlay(np.array(a), np.array(b), "soft_light") == pytest.approx(want)

    def test_dodge(self):
        out = blend_overlay(np.array(0.3), np.array(0.5), "dodge")
        assert out == pytest.approx(0.3 / (1 - 0.5 + 1e-6))

    def test_grain_merge_extract(self):
        assert blend_overlay(np.array(0.4), np.array(0.3), "grain_merge") == pytest.approx(0.2)
        assert blend_overlay(np.array(0.4), np.array(0.3), "grain_extract") == pytest.approx(0.6)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            blend_overlay(np.array(0.5), np.array(0.5), "multiply")

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_all_modes_stay_in_range(self, a, b):
        for mode in ("soft_light", "dodge", "grain_merge", "grain_extract"):
            out = float(blend_overlay(np.array(a), np.array(b), mode))
            assert 0.0 <= out <= 1.0


class TestHsvRoundTrip:
    def test_round_trip(self, rng):
        rgb = rng.random((10, 10, 3))
        back = hsv_to_rgb(rgb_to_hsv(rgb))
        assert np.allclose(back, rgb, atol=1e-10)

    def test_known_colors(self):
        hsv = rgb_to_hsv(np.array([[[1.0, 0.0, 0.0]]]))
        assert hsv[0, 0, 0] == pytest.approx(0.0)  # red hue
        assert hsv[0, 0, 1] == pytest.approx(1.0)
        assert hsv[0, 0, 2] == pytest.approx(1.0)


class TestSampler:
    def test_descriptors_deterministic_and_in_range(self):
        r1 = np.random.default_rng(99)
        r2 = np.random.default_rng(99)
        for _ in range(100):
            d1 = sample_augmentation(r1)
            d2 = sample_augmentation(r2)
            assert d1 == d2
            assert d1["op"] in AUGMENTATION_NAMES
            p = d1["params"]
            if d1["op"] == "gamma":
                assert GAMMA_RANGE[0] <= p["gamma"] <= GAMMA_RANGE[1]
            elif d1["op"] == "brightness_contrast":
                assert BRIGHTNESS_RANGE[0] <= p["b"] <= BRIGHTNESS_RANGE[1]
                assert CONTRAST_RANGE[0] <= p["c"] <= CONTRAST_RANGE[1]

    def test_all_ops_reachable(self):
        r = np.random.default_rng(0)
        seen = {sample_augmentation(r)["op"] for _ in range(400)}
        assert seen == set(AUGMENTATION_NAMES)

    def test_apply_is_deterministic(self, img, half_mask):
        r = np.random.default_rng(5)
        desc = sample_augmentation(r)
        out1 = apply_augmentation(img, half_mask, desc)
        out2 = apply_augmentation(img, half_mask, desc)
        assert np.array_equal(out1, out2)

    def test_descriptors_json_serializable(self):
        import json

        r = np.random.default_rng(3)
        for _ in range(20):
            desc = sample_augmentation(r)
            assert json.loads(json.dumps(desc)) == desc


class TestLocalLighting:
    def test_output_in_range_and_masked(self, img, half_mask):
        out = apply_local_lighting(img, half_mask, "soft_light", 0.8, seed=4)
        assert out.min() >= 0 and out.max() <= 1
        outside = half_mask <= 0.5
        assert np.array_equal(out[outside], img[outside])

    def test_empty_mask_raises(self, img):
        with pytest.raises(ValueError):
            apply_local_lighting(img, np.zeros((16, 16)), "dodge", 0.5, seed=1)

    def test_unknown_mode_raises(self, img, half_mask):
        with pytest.raises(ValueError):
            apply_local_lighting(img, half_mask, "overlay", 0.5, seed=1)


class TestLut:
    def test_malformed_lattice_raises(self, img, half_mask):
        with pytest.raises(ValueError):
            apply_lut3d(img, half_mask, np.ones((4, 4, 3, 3)))
        with pytest.raises(ValueError):
            apply_lut3d(img, half_mask, np.ones((1, 1, 1, 3)))

    def test_random_lut_in_range(self):
        lut = random_lut(np.random.default_rng(1), size=4, strength=0.5)
        assert lut.min() >= 0 and lut.max() <= 1


def test_smooth_noise_range_and_shape():
    noise = smooth_noise(np.random.default_rng(2), 20, 30)
    assert noise.shape == (20, 30)
    assert noise.min() >= -1 and noise.max() <= 1
