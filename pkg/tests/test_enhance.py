import numpy as np
import pytest

from edgefool import color
from edgefool.enhance import (
    EnhanceParams,
    clamp_active_fraction,
    compose_adversarial,
    compose_adversarial_backward,
    enhance_lightness,
    enhance_lightness_backward,
    sigmoid_remap,
)
from edgefool.ops import finite_diff_check


DEFAULTS = EnhanceParams()


class TestSigmoidRemap:
    def test_zero_maps_to_zero(self):
        for b in (0.5, 1.0, 15.0, 300.0):
            assert sigmoid_remap(0.0, b) == 0.0

    def test_saturates_at_half(self):
        assert abs(sigmoid_remap(100.0, 10.0) - 0.5) < 1e-12
        assert abs(sigmoid_remap(-100.0, 10.0) + 0.5) < 1e-12

    def test_reference_value(self):
        # high-precision oracle: 1/(1+exp(-1)) - 0.5 evaluated with mpmath
        import mpmath
        ref = float(1 / (1 + mpmath.exp(-1)) - mpmath.mpf("0.5"))
        assert abs(sigmoid_remap(1.0, 1.0) - ref) < 1e-9
        assert abs(sigmoid_remap(1.0, 1.0) - 0.23105857863000487) < 1e-9

    def test_odd_function(self):
        a = np.linspace(-3, 3, 31)
        np.testing.assert_allclose(sigmoid_remap(a, 2.0), -sigmoid_remap(-a, 2.0),
                                   atol=1e-15)

    def test_stable_for_huge_arguments(self):
        out = sigmoid_remap(np.array([-700.0, 700.0]), 1.0)
        assert np.isfinite(out).all()


class TestEnhanceLightness:
    def test_fixed_point_at_midpoint(self):
        out = enhance_lightness(np.array(56.0), np.array(0.0), DEFAULTS)
        assert abs(out - 56.0) < 1e-12

    def test_detail_magnification(self):
        # oracle: direct high-precision evaluation of f(0.1, 15)*100
        import mpmath
        ref = float((1 / (1 + mpmath.exp(mpmath.mpf("-1.5"))) - mpmath.mpf("0.5")) * 100)
        out = enhance_lightness(np.array(56.0), np.array(10.0), DEFAULTS)
        detail_term = float(out) - 56.0
        assert abs(detail_term - ref) < 1e-3
        assert abs(detail_term - 31.757447619364617) < 1e-3
        assert detail_term > 10.0  # a 10-unit detail is magnified

    def test_monotone_in_detail(self):
        detail = np.linspace(-40, 40, 81)
        out = enhance_lightness(np.full_like(detail, 30.0), detail, DEFAULTS)
        assert (np.diff(out) > 0).all()

    def test_detail_amplified_over_range(self):
        detail = np.linspace(-10, 10, 201)
        detail = detail[np.abs(detail) > 1e-9]
        out = enhance_lightness(np.full_like(detail, 56.0), detail, DEFAULTS)
        assert (np.abs(out - 56.0) >= np.abs(detail)).all()

    def test_slope_at_origin_is_quarter_detail_slope(self):
        h = 1e-6
        lo = enhance_lightness(np.array(56.0), np.array(-h), DEFAULTS)
        hi = enhance_lightness(np.array(56.0), np.array(h), DEFAULTS)
        slope = (hi - lo) / (2 * h)
        assert abs(slope - DEFAULTS.detail_slope / 4) < 1e-6
        _, gd = enhance_lightness_backward(np.array(1.0), np.array(56.0),
                                           np.array(0.0), DEFAULTS)
        assert abs(gd - DEFAULTS.detail_slope / 4) < 1e-12

    def test_backward_zero(self):
        gs, gd = enhance_lightness_backward(np.zeros(5), np.full(5, 30.0),
                                            np.zeros(5), DEFAULTS)
        assert not gs.any() and not gd.any()

    @pytest.mark.parametrize("seed", range(10))
    def test_backward_finite_difference(self, seed):
        rng = np.random.default_rng(600 + seed)
        sL = rng.uniform(10, 90, (3, 3))
        dL = rng.uniform(-15, 15, (3, 3))
        r = rng.standard_normal((3, 3))

        def f_s(x):
            out = enhance_lightness(x, dL, DEFAULTS)
            gs, _ = enhance_lightness_backward(r, x, dL, DEFAULTS)
            return float((out * r).sum()), gs

        def f_d(x):
            out = enhance_lightness(sL, x, DEFAULTS)
            _, gd = enhance_lightness_backward(r, sL, x, DEFAULTS)
            return float((out * r).sum()), gd

        assert finite_diff_check(f_s, sL) < 1e-4
        assert finite_diff_check(f_d, dL) < 1e-4

    def test_params_validation(self):
        with pytest.raises(ValueError):
            EnhanceParams(detail_slope=-1.0)
        with pytest.raises(ValueError):
            EnhanceParams(midpoint=150.0)


def _decomposition_reconstructs(img):
    lab = color.rgb_to_lab(img)
    structure_L = lab[..., 0] * 0.7
    detail_L = lab[..., 0] - structure_L
    np.testing.assert_allclose(structure_L + detail_L, lab[..., 0], atol=1e-12)


class TestComposeAdversarial:
    def test_decomposition_identity(self):
        rng = np.random.default_rng(0)
        _decomposition_reconstructs(rng.uniform(0, 1, (6, 6, 3)))

    def test_fixed_point(self):
        # structure == original with structure lightness at the midpoint:
        # both sigmoid terms vanish, so the image passes through unchanged
        gray_rgb = color.lab_to_rgb(np.array([56.0, 0.0, 0.0]))
        img = np.tile(gray_rgb, (4, 4, 1))
        adv, cache = compose_adversarial(img, img, DEFAULTS)
        np.testing.assert_allclose(adv, img, atol=1e-9)
        assert clamp_active_fraction(cache) == 0.0

    def test_color_channels_preserved(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0.2, 0.8, (5, 5, 3))
        structure = rng.uniform(0.2, 0.8, (5, 5, 3))
        _, cache = compose_adversarial(img, structure, DEFAULTS)
        lab_orig = color.rgb_to_lab(img)
        np.testing.assert_allclose(cache["adv_lab"][..., 1], lab_orig[..., 1], atol=1e-12)
        np.testing.assert_allclose(cache["adv_lab"][..., 2], lab_orig[..., 2], atol=1e-12)

    def test_color_preserved_where_unclamped(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0.3, 0.7, (6, 6, 3))
        structure = np.clip(img + rng.normal(0, 0.02, img.shape), 0, 1)
        adv, cache = compose_adversarial(img, structure, DEFAULTS)
        unclamped = ~cache["clamped"].any(axis=-1)
        assert unclamped.any()
        lab_adv = color.rgb_to_lab(adv)
        lab_orig = color.rgb_to_lab(img)
        np.testing.assert_allclose(lab_adv[unclamped][:, 1:], lab_orig[unclamped][:, 1:],
                                   atol=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_structure_gradient_finite_difference(self, seed):
        rng = np.random.default_rng(700 + seed)
        img = rng.uniform(0.25, 0.75, (4, 4, 3))
        structure = rng.uniform(0.25, 0.75, (4, 4, 3))
        r = rng.standard_normal((4, 4, 3))

        def f(s):
            adv, cache = compose_adversarial(img, s, DEFAULTS)
            # skip clamp kinks: zero the probe where the clamp is active
            rr = np.where(cache["clamped"], 0.0, r)
            adv2, cache2 = compose_adversarial(img, s, DEFAULTS)
            return float((adv2 * rr).sum()), compose_adversarial_backward(rr, cache2)

        assert finite_diff_check(f, structure, h=1e-6) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compose_adversarial(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)), DEFAULTS)
