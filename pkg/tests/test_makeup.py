import numpy as np
import pytest

from facelayers import (ExtractConfig, ExtractionWeights, FaceRegions,
                        MakeupLayers, ParameterError, TextureMap, UvMask,
                        alpha_blend, apply_makeup_render, extract_makeup,
                        interpolate_alpha, makeup_histogram_loss, transfer)
from facelayers.makeup import load_layers, match_histogram, save_layers


def _layers(bare, makeup, alpha):
    return MakeupLayers(bare_skin=TextureMap.unit(bare),
                        makeup_color=TextureMap.unit(makeup),
                        alpha=TextureMap.unit(alpha))


def _const_layers(h, w, bare, makeup, alpha):
    return _layers(np.tile(np.asarray(bare, dtype=float), (h, w, 1)),
                   np.tile(np.asarray(makeup, dtype=float), (h, w, 1)),
                   np.full((h, w, 1), float(alpha)))


class TestAlphaBlend:
    def test_alpha_one_returns_bare(self, rng):
        bare = rng.uniform(0, 1, (6, 6, 3))
        makeup = rng.uniform(0, 1, (6, 6, 3))
        layers = _layers(bare, makeup, np.ones((6, 6, 1)))
        np.testing.assert_array_equal(alpha_blend(layers).data, bare)

    def test_alpha_zero_returns_makeup(self, rng):
        bare = rng.uniform(0, 1, (6, 6, 3))
        makeup = rng.uniform(0, 1, (6, 6, 3))
        layers = _layers(bare, makeup, np.zeros((6, 6, 1)))
        np.testing.assert_array_equal(alpha_blend(layers).data, makeup)

    def test_midpoint(self):
        layers = _const_layers(2, 2, (1, 1, 1), (0, 0, 0), 0.5)
        np.testing.assert_allclose(alpha_blend(layers).data, 0.5, atol=1e-12)

    def test_convex_hull_bound(self, rng):
        bare = rng.uniform(0, 1, (8, 8, 3))
        makeup = rng.uniform(0, 1, (8, 8, 3))
        alpha = rng.uniform(0, 1, (8, 8, 1))
        blended = alpha_blend(_layers(bare, makeup, alpha)).data
        lo = np.minimum(bare, makeup)
        hi = np.maximum(bare, makeup)
        assert (blended >= lo - 1e-12).all()
        assert (blended <= hi + 1e-12).all()

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ParameterError):
            MakeupLayers(bare_skin=TextureMap.unit(np.zeros((4, 4, 3))),
                         makeup_color=TextureMap.unit(np.zeros((5, 5, 3))),
                         alpha=TextureMap.unit(np.zeros((4, 4, 1))))


class TestTransfer:
    def test_alpha_one_keeps_target(self, rng):
        target = TextureMap.unit(rng.uniform(0, 1, (6, 6, 3)))
        layers = _layers(rng.uniform(0, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 3)), np.ones((6, 6, 1)))
        np.testing.assert_array_equal(transfer(target, layers).data, target.data)

    def test_substitution_identity(self, rng):
        bare = rng.uniform(0, 1, (6, 6, 3))
        layers = _layers(bare, rng.uniform(0, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 1)))
        via_transfer = transfer(TextureMap.unit(bare), layers)
        np.testing.assert_allclose(via_transfer.data, alpha_blend(layers).data,
                                   atol=1e-12)

    def test_locality_of_partial_alpha(self, rng):
        h = w = 8
        alpha = np.ones((h, w, 1))
        alpha[5:7, 2:6] = 0.2  # lips only
        layers = _layers(rng.uniform(0, 1, (h, w, 3)),
                         rng.uniform(0, 1, (h, w, 3)), alpha)
        target = TextureMap.unit(rng.uniform(0, 1, (h, w, 3)))
        out = transfer(target, layers)
        changed = np.abs(out.data - target.data).sum(axis=2) > 1e-12
        assert changed[5:7, 2:6].all()
        assert not changed[(alpha[:, :, 0] == 1.0)].any()

    def test_resamples_source_layers(self, rng):
        layers = _layers(rng.uniform(0, 1, (4, 4, 3)),
                         rng.uniform(0, 1, (4, 4, 3)),
                         rng.uniform(0, 1, (4, 4, 1)))
        target = TextureMap.unit(rng.uniform(0, 1, (9, 9, 3)))
        out = transfer(target, layers)
        assert out.shape == (9, 9, 3)


class TestInterpolateAlpha:
    def test_sigma_zero_identity(self, rng):
        alpha = TextureMap.unit(rng.uniform(0, 1, (5, 5, 1)))
        np.testing.assert_array_equal(interpolate_alpha(alpha, 0.0).data, alpha.data)

    def test_sigma_one_saturates(self, rng):
        alpha = TextureMap.unit(rng.uniform(0, 1, (5, 5, 1)))
        out = interpolate_alpha(alpha, 1.0)
        np.testing.assert_array_equal(out.data, np.ones((5, 5, 1)))

    def test_clamp_value(self):
        alpha = TextureMap.unit(np.full((1, 1, 1), 0.7))
        assert interpolate_alpha(alpha, 0.5).data[0, 0, 0] == 1.0

    def test_monotone_in_sigma(self, rng):
        alpha = TextureMap.unit(rng.uniform(0, 1, (6, 6, 1)))
        sigmas = [0.0, 0.2, 0.5, 0.8, 1.0]
        outputs = [interpolate_alpha(alpha, s).data for s in sigmas]
        for a, b in zip(outputs, outputs[1:]):
            assert (b >= a - 1e-12).all()

    @pytest.mark.parametrize("sigma", [-0.1, 1.2])
    def test_sigma_out_of_range(self, sigma):
        alpha = TextureMap.unit(np.zeros((2, 2, 1)))
        with pytest.raises(ParameterError):
            interpolate_alpha(alpha, sigma)

    def test_saturated_blend_is_bare_skin(self, rng):
        bare = rng.uniform(0, 1, (5, 5, 3))
        layers = _layers(bare, rng.uniform(0, 1, (5, 5, 3)),
                         rng.uniform(0, 1, (5, 5, 1)))
        shifted = MakeupLayers(bare_skin=layers.bare_skin,
                               makeup_color=layers.makeup_color,
                               alpha=interpolate_alpha(layers.alpha, 1.0))
        np.testing.assert_array_equal(alpha_blend(shifted).data, bare)


class TestExtraction:
    def test_no_makeup_input_yields_high_alpha(self, rng):
        from facelayers.texture import _blur_array

        base = _blur_array(rng.uniform(0.3, 0.8, (24, 24, 3)), 7)
        diffuse = TextureMap.unit(np.clip(base, 0, 1))
        layers, trace = extract_makeup(diffuse, diffuse,
                                       config=ExtractConfig(iterations=300))
        assert layers.alpha.data.mean() >= 0.95
        assert np.abs(layers.bare_skin.data - diffuse.data).mean() <= 0.02

    def test_lip_paint_inversion(self, rng):
        from facelayers.texture import _blur_array

        h = w = 32
        prior = TextureMap.unit(np.clip(
            _blur_array(rng.uniform(0.45, 0.85, (h, w, 3)), 7), 0, 1))
        alpha_true = np.ones((h, w, 1))
        alpha_true[20:26, 10:22] = 0.0
        paint = np.tile(np.array([0.55, 0.06, 0.12]), (h, w, 1))
        truth = _layers(prior.data, paint, alpha_true)
        composite = alpha_blend(truth)
        layers, _ = extract_makeup(composite, prior)
        lip = alpha_true[:, :, 0] < 0.5
        mae = np.abs(layers.alpha.data[:, :, 0][lip] - 0.0).mean()
        assert mae <= 0.1
        recon = alpha_blend(layers)
        assert np.abs(recon.data - composite.data).mean() <= 0.02

    def test_fit_only_reaches_tiny_residual(self, rng):
        weights = ExtractionWeights(fit=20.0, skin_prior=0.0, tv_alpha=0.0,
                                    tv_makeup=0.0, alpha_sparse=0.0)
        diffuse = TextureMap.unit(rng.uniform(0.2, 0.8, (16, 16, 3)))
        prior = TextureMap.unit(rng.uniform(0.2, 0.8, (16, 16, 3)))
        layers, _ = extract_makeup(diffuse, prior, weights=weights,
                                   config=ExtractConfig(iterations=800))
        residual = np.abs(alpha_blend(layers).data - diffuse.data).mean()
        assert residual <= 1e-3

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ParameterError):
            extract_makeup(TextureMap.unit(np.zeros((4, 4, 3))),
                           TextureMap.unit(np.zeros((5, 5, 3))))


class TestHistogramLoss:
    def _regions(self, h, w):
        brows = np.zeros((h, w))
        brows[1:3, :] = 1.0
        eyes = np.zeros((h, w))
        eyes[4:6, :] = 1.0
        lips = np.zeros((h, w))
        lips[9:12, :] = 1.0
        skin = np.zeros((h, w))
        skin[13:, :] = 1.0
        return FaceRegions(brows=UvMask(brows), eyes=UvMask(eyes),
                           lips=UvMask(lips), skin=UvMask(skin))

    def test_identical_textures_zero(self, rng):
        regions = self._regions(16, 16)
        tex = TextureMap.unit(rng.uniform(0, 1, (16, 16, 3)))
        assert makeup_histogram_loss(tex, tex, regions) <= 1e-9

    def test_spatial_permutation_invariance(self, rng):
        regions = self._regions(16, 16)
        x = rng.uniform(0, 1, (16, 16, 3))
        y = x.copy()
        for name, mask in regions.as_dict().items():
            select = np.argwhere(mask.valid)
            perm = rng.permutation(len(select))
            y[select[:, 0], select[:, 1]] = x[select[perm][:, 0], select[perm][:, 1]]
        loss = makeup_histogram_loss(TextureMap.unit(x), TextureMap.unit(y),
                                     regions)
        assert loss <= 1e-9

    def test_constant_regions_hand_value(self, rng):
        # lips 0.2 versus 0.8: the matched value lands within one bin of 0.8,
        # so the squared change sits within quantization of (0.8 - 0.2)^2
        regions = self._regions(16, 16)
        x = np.full((16, 16, 3), 0.5)
        y = np.full((16, 16, 3), 0.5)
        x[regions.lips.valid] = 0.2
        y[regions.lips.valid] = 0.8
        loss = makeup_histogram_loss(TextureMap.unit(x), TextureMap.unit(y),
                                     regions)
        assert loss == pytest.approx((0.8 - 0.2) ** 2, abs=5e-3)

    def test_skin_region_excluded(self, rng):
        regions = self._regions(16, 16)
        x = rng.uniform(0, 1, (16, 16, 3))
        y = x.copy()
        y[regions.skin.valid] = rng.uniform(0, 1, (regions.skin.valid.sum(), 3))
        loss = makeup_histogram_loss(TextureMap.unit(x), TextureMap.unit(y),
                                     regions)
        assert loss <= 1e-9

    def test_match_histogram_identity_on_self(self, rng):
        values = rng.uniform(0.01, 0.99, 500)
        matched = match_histogram(values, values)
        np.testing.assert_allclose(matched, values, atol=1e-9)

    def test_match_histogram_constant_to_constant(self):
        out = match_histogram(np.full(64, 0.2), np.full(64, 0.8))
        np.testing.assert_allclose(out, 0.8, atol=1.0 / 256)

    def test_region_without_selected_pixels_rejected(self, rng):
        # soft weights below 0.5 leave a nonempty mask that selects nothing
        regions = self._regions(16, 16)
        soft_lips = UvMask(0.3 * regions.lips.weights)
        soft = FaceRegions(brows=regions.brows, eyes=regions.eyes,
                           lips=soft_lips, skin=regions.skin)
        tex = TextureMap.unit(rng.uniform(0, 1, (16, 16, 3)))
        with pytest.raises(ParameterError, match="selects no pixels"):
            makeup_histogram_loss(tex, tex, soft)


class TestApplyMakeupRender:
    def test_unit_shading_no_specular_alpha_one(self, rng):
        bare = TextureMap.unit(rng.uniform(0, 1, (6, 6, 3)))
        layers = _layers(rng.uniform(0, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 3)), np.ones((6, 6, 1)))
        shading = TextureMap(np.ones((6, 6, 3)))
        spec = TextureMap(np.zeros((6, 6, 1)))
        out = apply_makeup_render(bare, layers, shading, spec)
        np.testing.assert_allclose(out.data, bare.data, atol=1e-12)

    def test_equals_compose_of_transfer(self, rng):
        from facelayers import compose_reconstruction

        bare = TextureMap.unit(rng.uniform(0, 1, (6, 6, 3)))
        layers = _layers(rng.uniform(0, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 1)))
        shading = TextureMap(rng.uniform(0, 1.5, (6, 6, 3)))
        spec = TextureMap(rng.uniform(0, 0.3, (6, 6, 1)))
        a = apply_makeup_render(bare, layers, shading, spec)
        b = compose_reconstruction(transfer(bare, layers), shading, spec)
        np.testing.assert_array_equal(a.data, b.data)

    def test_relighting_ratio_independent_of_makeup(self, rng):
        # with zero specular the two renders differ by the shading ratio only
        bare = TextureMap.unit(rng.uniform(0.1, 1, (6, 6, 3)))
        layers = _layers(rng.uniform(0.1, 1, (6, 6, 3)),
                         rng.uniform(0.1, 1, (6, 6, 3)),
                         rng.uniform(0, 1, (6, 6, 1)))
        s1 = TextureMap(rng.uniform(0.2, 1.0, (6, 6, 3)))
        s2 = TextureMap(rng.uniform(0.2, 1.0, (6, 6, 3)))
        zero = TextureMap(np.zeros((6, 6, 1)))
        r1 = apply_makeup_render(bare, layers, s1, zero)
        r2 = apply_makeup_render(bare, layers, s2, zero)
        ratio = r1.data / np.maximum(r2.data, 1e-12)
        np.testing.assert_allclose(ratio, s1.data / s2.data, rtol=1e-9)


class TestLayerFiles:
    def test_roundtrip_within_alpha_quantization(self, rng, tmp_path):
        layers = _layers(
            rng.uniform(0, 1, (8, 8, 3)).astype(np.float32).astype(np.float64),
            rng.uniform(0, 1, (8, 8, 3)).astype(np.float32).astype(np.float64),
            rng.uniform(0, 1, (8, 8, 1)))
        save_layers(layers, tmp_path)
        back = load_layers(tmp_path)
        np.testing.assert_array_equal(back.bare_skin.data, layers.bare_skin.data)
        np.testing.assert_array_equal(back.makeup_color.data, layers.makeup_color.data)
        assert np.abs(back.alpha.data - layers.alpha.data).max() <= 0.5 / 255 + 1e-12
        assert (tmp_path / "preview.png").exists()
