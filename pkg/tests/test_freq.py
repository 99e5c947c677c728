import math

import numpy as np
import pytest

from hazegan import freq
from hazegan.layers import ShapeError

from oracles import gaussian_blur_loops, laplacian_loops


class TestGaussianKernel:
    def test_normalized(self):
        for size, sigma in [(3, 0.8), (7, 2.0), (15, 3.0)]:
            k = freq.gaussian_kernel(size, sigma)
            assert abs(k.sum() - 1.0) < 1e-6

    def test_symmetries(self):
        k = freq.gaussian_kernel(15, 3.0)
        assert np.allclose(k, k[::-1, :])
        assert np.allclose(k, k[:, ::-1])
        assert np.allclose(k, k.T)

    def test_center_weight_closed_form(self):
        # independent evaluation of the closed form for the (15, 3) kernel
        total = sum(math.exp(-(u * u + v * v) / 18.0)
                    for u in range(-7, 8) for v in range(-7, 8))
        center = 1.0 / total
        k = freq.gaussian_kernel(15, 3.0)
        assert abs(k[7, 7] - center) < 1e-12

    def test_even_size_rejected(self):
        with pytest.raises(ValueError):
            freq.gaussian_kernel(14, 3.0)
        with pytest.raises(ValueError):
            freq.gaussian_kernel(15, -1.0)


class TestGrayscale:
    def test_luma_weights(self):
        def gray_of(r, g, b):
            img = np.zeros((1, 3, 2, 2), dtype=np.float32)
            img[0, 0], img[0, 1], img[0, 2] = r, g, b
            return freq.to_grayscale(img)[0, 0, 0, 0]

        assert abs(gray_of(1, 1, 1) - 1.0) < 1e-6
        assert abs(gray_of(0, 1, 0) - 0.587) < 1e-6
        assert abs(gray_of(0, 0, 1) - 0.114) < 1e-6
        assert abs(gray_of(1, 0, 0) - 0.299) < 1e-6

    def test_matches_loop_oracle(self, rng):
        img = rng.uniform(0, 1, (2, 3, 5, 5)).astype(np.float32)
        from oracles import grayscale_loops
        assert np.abs(freq.to_grayscale(img) - grayscale_loops(img)).max() < 1e-6


class TestLowFrequency:
    def test_constant_image_unchanged(self):
        for c in (0.0, 0.3, 1.0):
            img = np.full((1, 3, 16, 16), c, dtype=np.float32)
            assert np.abs(freq.extract_lf(img) - c).max() < 1e-6

    def test_impulse_response_is_kernel(self):
        img = np.zeros((1, 3, 33, 33), dtype=np.float32)
        img[0, :, 16, 16] = 1.0
        out = freq.extract_lf(img)
        k = freq.gaussian_kernel(15, 3.0)
        assert np.abs(out[0, 0, 9:24, 9:24] - k).max() < 1e-6
        assert np.abs(out[0, 0, :9, :]).max() == 0  # outside the support

    def test_matches_blur_oracle_and_reduces_variance(self, rng):
        img = rng.uniform(0, 1, (1, 3, 18, 18)).astype(np.float32)
        out = freq.extract_lf(img)
        want = gaussian_blur_loops(img, 15, 3.0)
        assert np.abs(out - want).max() < 1e-5
        assert out.var() <= img.var()

    def test_stays_inside_unit_interval(self, rng):
        img = rng.uniform(0, 1, (2, 3, 16, 16)).astype(np.float32)
        out = freq.extract_lf(img)
        assert out.min() >= -1e-6 and out.max() <= 1 + 1e-6


class TestHighFrequency:
    def test_constant_image_is_zero(self):
        img = np.full((1, 3, 16, 16), 0.6, dtype=np.float32)
        assert np.abs(freq.extract_hf(img)).max() < 1e-6

    def test_impulse_stencil(self):
        img = np.zeros((1, 3, 11, 11), dtype=np.float32)
        img[0, :, 5, 5] = 1.0  # gray value 1 at the center
        out = freq.extract_hf(img)[0, 0]
        assert abs(out[5, 5] - (-4.0)) < 1e-6
        for (i, j) in [(4, 5), (6, 5), (5, 4), (5, 6)]:
            assert abs(out[i, j] - 1.0) < 1e-6
        assert abs(out[4, 4]) < 1e-6

    def test_matches_loop_oracle(self, rng):
        img = rng.uniform(0, 1, (2, 3, 12, 12)).astype(np.float32)
        assert np.abs(freq.extract_hf(img) - laplacian_loops(img)).max() < 1e-6

    def test_output_is_signed_single_channel(self, rng):
        img = rng.uniform(0, 1, (2, 3, 12, 12)).astype(np.float32)
        out = freq.extract_hf(img)
        assert out.shape == (2, 1, 12, 12)
        assert out.min() < 0 < out.max()

    def test_interior_sums_to_zero_for_border_constant_images(self, rng):
        # zero-sum kernel: response integrates to zero when the image is
        # constant near the borders (no reflection effects)
        img = np.full((1, 3, 20, 20), 0.5, dtype=np.float32)
        img[0, :, 6:14, 6:14] = rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
        assert abs(freq.extract_hf(img).sum()) < 1e-4


class TestEquivarianceAndBackward:
    def test_translation_equivariance_away_from_borders(self, rng):
        img = rng.uniform(0, 1, (1, 3, 24, 24)).astype(np.float32)
        shifted = np.roll(img, shift=(1, 1), axis=(2, 3))
        for extract in (freq.extract_lf, freq.extract_hf):
            a = extract(img)
            b = extract(shifted)
            # compare interiors: shift, then crop the kernel's border halo
            m = 8
            assert np.abs(a[..., m:-m, m:-m] - b[..., m + 1:-m + 1, m + 1:-m + 1]).max() < 1e-5

    def test_lf_backward_is_adjoint(self, rng):
        # <W x, g> == <x, W^T g> for a fixed linear map
        x = rng.standard_normal((1, 3, 16, 16))
        g = rng.standard_normal((1, 3, 16, 16))
        lhs = float((freq.extract_lf(x) * g).sum())
        rhs = float((x * freq.extract_lf_backward(g)).sum())
        assert abs(lhs - rhs) < 1e-9

    def test_hf_backward_is_adjoint(self, rng):
        x = rng.standard_normal((1, 3, 16, 16))
        g = rng.standard_normal((1, 1, 16, 16))
        lhs = float((freq.extract_hf(x) * g).sum())
        rhs = float((x * freq.extract_hf_backward(g)).sum())
        assert abs(lhs - rhs) < 1e-9

    def test_extractor_gradchecks_pass(self, gradcheck_reports):
        for name in ("lf-extractor", "hf-extractor"):
            report = next(r for r in gradcheck_reports if r.block == name)
            assert report.passed, report.summary()


def test_display_remap_maps_zero_to_midgray():
    hf = np.zeros((1, 1, 4, 4), dtype=np.float32)
    assert np.allclose(freq.remap_hf_for_display(hf), 0.5)
    assert np.allclose(freq.remap_hf_for_display(np.full_like(hf, -4.0)), 0.0)
    assert np.allclose(freq.remap_hf_for_display(np.full_like(hf, 4.0)), 1.0)


def test_small_axis_rejected():
    with pytest.raises(ShapeError):
        freq.extract_lf(np.zeros((1, 3, 6, 16), dtype=np.float32))
