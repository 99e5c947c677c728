import math

import numpy as np
import pytest

from hazegan import losses
from hazegan.layers import ShapeError
from hazegan.losses import (FeatureExtractor, LossParts, LossWeights,
                            adversarial_loss_g, discriminator_loss, l1_loss,
                            perceptual_loss, psnr, ssim, ssim_loss, total_loss)

from oracles import l1_flat_loop


class TestL1:
    def test_identical_is_zero(self, rng):
        x = rng.uniform(0, 1, (2, 3, 6, 6)).astype(np.float32)
        assert l1_loss(x, x) == 0.0

    def test_constant_offset(self):
        x = np.zeros((1, 3, 4, 4), dtype=np.float32)
        y = np.full_like(x, 0.5)
        assert abs(l1_loss(x, y) - 0.5) < 1e-7

    def test_matches_flat_loop_oracle(self, rng):
        x = rng.uniform(0, 1, (2, 3, 5, 5)).astype(np.float32)
        y = rng.uniform(0, 1, (2, 3, 5, 5)).astype(np.float32)
        assert abs(l1_loss(x, y) - l1_flat_loop(x, y)) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_loss(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        x = rng.uniform(0, 1, (3, 16, 16)).astype(np.float32)
        assert abs(ssim(x, x) - 1.0) < 1e-6

    def test_constant_images_closed_form(self):
        # hand evaluation: variances vanish, so the second factor is 1 and
        # the first is (2*0.5*0.25 + C1) / (0.5^2 + 0.25^2 + C1)
        x = np.full((3, 16, 16), 0.5)
        y = np.full((3, 16, 16), 0.25)
        expected = (2 * 0.5 * 0.25 + 1e-4) / (0.5 ** 2 + 0.25 ** 2 + 1e-4)
        assert abs(expected - 0.8001) < 1e-4
        assert abs(ssim(x, y) - expected) < 1e-4

    def test_symmetric(self, rng):
        x = rng.uniform(0, 1, (3, 16, 16))
        y = rng.uniform(0, 1, (3, 16, 16))
        assert abs(ssim(x, y) - ssim(y, x)) < 1e-6

    def test_bounded_by_one_with_equality_iff_equal(self, rng):
        for _ in range(20):
            x = rng.uniform(0, 1, (3, 12, 12))
            y = rng.uniform(0, 1, (3, 12, 12))
            s = ssim(x, y)
            assert s <= 1.0
            assert s < 1.0 - 1e-6  # random distinct pairs stay away from 1
        x = rng.uniform(0, 1, (3, 12, 12))
        assert ssim(x, x) > 1.0 - 1e-9

    def test_image_smaller_than_window_rejected(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


class TestSsimLoss:
    def test_identical_is_zero(self, rng):
        x = rng.uniform(0, 1, (1, 3, 16, 16)).astype(np.float32)
        assert abs(ssim_loss(x, x)) < 1e-6

    def test_gradient_vanishes_at_maximum(self, rng):
        # SSIM is maximal at x == y, so the loss gradient there is ~0
        x = rng.uniform(0.2, 0.8, (1, 3, 12, 12)).astype(np.float64)
        _, grad = losses.ssim_loss_grad(x, x.copy())
        assert np.abs(grad).max() < 1e-7

    def test_range(self, rng):
        for _ in range(10):
            x = rng.uniform(0, 1, (1, 3, 12, 12)).astype(np.float32)
            y = rng.uniform(0, 1, (1, 3, 12, 12)).astype(np.float32)
            value = ssim_loss(x, y)
            assert 0.0 <= value <= 2.0


class TestPerceptual:
    def test_identical_inputs_zero(self, rng):
        fe = FeatureExtractor()
        x = rng.uniform(0, 1, (2, 3, 12, 12)).astype(np.float32)
        assert perceptual_loss(x, x.copy(), fe) == 0.0

    def test_nonnegative(self, rng):
        fe = FeatureExtractor()
        for _ in range(5):
            x = rng.uniform(0, 1, (1, 3, 12, 12)).astype(np.float32)
            y = rng.uniform(0, 1, (1, 3, 12, 12)).astype(np.float32)
            assert perceptual_loss(x, y, fe) >= 0.0

    def test_extractor_is_frozen_and_reproducible(self):
        a = FeatureExtractor()
        b = FeatureExtractor()
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_gradient_check_passes(self, gradcheck_reports):
        report = next(r for r in gradcheck_reports if r.block == "loss-perceptual")
        assert report.passed, report.summary()


class TestAdversarial:
    def test_half_probability_value(self):
        d = np.full(8, 0.5, dtype=np.float32)
        assert abs(adversarial_loss_g(d) - math.log(0.5)) < 1e-6

    def test_fooling_nothing_saturates_to_zero(self):
        d = np.zeros(8, dtype=np.float32)
        assert abs(adversarial_loss_g(d)) < 1e-6

    def test_monotone_decreasing_in_probability(self):
        values = [adversarial_loss_g(np.full(4, p, dtype=np.float32))
                  for p in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestDiscriminatorLoss:
    def test_perfect_discriminator_near_zero(self):
        real = np.full(4, 1.0 - 1e-7, dtype=np.float64)
        fake = np.full(4, 1e-7, dtype=np.float64)
        assert abs(discriminator_loss(real, fake)) < 1e-5

    def test_coin_flip_value(self):
        half = np.full(4, 0.5, dtype=np.float32)
        assert abs(discriminator_loss(half, half) - 2 * math.log(2)) < 1e-6

    def test_nonnegative(self, rng):
        for _ in range(10):
            real = rng.uniform(0.01, 0.99, 6).astype(np.float32)
            fake = rng.uniform(0.01, 0.99, 6).astype(np.float32)
            assert discriminator_loss(real, fake) >= 0.0

    def test_composes_from_one_sided_terms(self, rng):
        real = rng.uniform(0.1, 0.9, 5).astype(np.float32)
        fake = rng.uniform(0.1, 0.9, 5).astype(np.float32)
        value, g_real, g_fake = losses.discriminator_loss_grad(real, fake)
        vr, gr = losses.real_score_loss_grad(real)
        vf, gf = losses.fake_score_loss_grad(fake)
        assert abs(value - (vr + vf)) < 1e-9
        assert np.array_equal(g_real, gr)
        assert np.array_equal(g_fake, gf)


class TestTotalLoss:
    def test_hand_computed_example(self):
        parts = LossParts(l1=0.1, ssim=0.2, perceptual=0.05, adversarial=-0.6931)
        total = total_loss(parts, LossWeights())
        assert abs(total - 0.43069) < 1e-6

    def test_zero_parts(self):
        assert total_loss(LossParts(0, 0, 0, 0), LossWeights()) == 0.0

    def test_linear_in_each_weight(self):
        parts = LossParts(l1=0.3, ssim=0.1, perceptual=0.2, adversarial=0.4)
        base = total_loss(parts, LossWeights())
        doubled = total_loss(parts, LossWeights(l1=4.0))
        assert abs((doubled - base) - 2.0 * 0.3) < 1e-9

    def test_nan_part_names_term(self):
        parts = LossParts(l1=0.1, ssim=float("nan"), perceptual=0.0, adversarial=0.0)
        with pytest.raises(ValueError, match="ssim"):
            total_loss(parts, LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(l1=-1.0)


class TestPsnr:
    def test_twenty_db_case_exact(self):
        x = np.full((3, 8, 8), 1.0)
        y = np.full((3, 8, 8), 0.9)
        assert abs(psnr(x, y) - 20.0) < 1e-6

    def test_identical_images_return_inf(self, rng):
        x = rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
        assert psnr(x, x) == float("inf")

    def test_strictly_decreasing_in_mse(self, rng):
        x = rng.uniform(0.3, 0.7, (3, 8, 8))
        noise = rng.standard_normal(x.shape)
        values = [psnr(x, x + scale * noise) for scale in (0.01, 0.02, 0.05, 0.1)]
        assert all(a > b for a, b in zip(values, values[1:]))


def test_monotone_degradation_rank_agreement(rng):
    """Nested noise levels: more noise never raises psnr nor ssim."""
    base = rng.uniform(0.2, 0.8, (3, 24, 24))
    noise = rng.standard_normal(base.shape)
    psnrs, ssims = [], []
    for level in np.linspace(0.01, 0.4, 10):
        noisy = np.clip(base + level * noise, 0, 1)
        psnrs.append(psnr(noisy, base))
        ssims.append(ssim(noisy, base))
    assert all(a > b for a, b in zip(psnrs, psnrs[1:])), psnrs
    assert all(a > b for a, b in zip(ssims, ssims[1:])), ssims
