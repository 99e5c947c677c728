"""Loss terms and image-quality metrics.

Training losses (pixel L1, SSIM, perceptual, adversarial) come in value
and value+gradient forms; the gradient is taken with respect to the
generator output and every one passes the finite-difference harness.
Sums over samples/elements are implemented as means so magnitudes are
resolution-independent and the default weights stay meaningful.

The evaluation metrics psnr() and ssim() compute in float64 regardless
of input dtype; psnr of identical images returns the +inf sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2d, Module, ReLU, ShapeError

# all log arguments are clamped to [PROB_EPS, 1 - PROB_EPS]
PROB_EPS = 1e-7

# frozen stand-in feature extractor is regenerated from this fixed seed
FEATURE_SEED = 271828

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    l1: float = 2.0
    ssim: float = 1.0
    perceptual: float = 2.0
    adversarial: float = 0.1

    def __post_init__(self):
        for name, value in (("l1", self.l1), ("ssim", self.ssim),
                            ("perceptual", self.perceptual), ("adversarial", self.adversarial)):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {value}")


@dataclass
class LossParts:
    l1: float
    ssim: float
    perceptual: float
    adversarial: float


def _check_same_shape(x: np.ndarray, y: np.ndarray, who: str):
    if x.shape != y.shape:
        raise ShapeError(f"{who} expects matching shapes, got {x.shape} and {y.shape}")


def l1_loss_grad(x: np.ndarray, y: np.ndarray):
    """Mean absolute difference and its gradient with respect to x."""
    _check_same_shape(x, y, "l1_loss")
    diff = x - y
    value = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return value, grad.astype(x.dtype)


def l1_loss(x: np.ndarray, y: np.ndarray) -> float:
    return l1_loss_grad(x, y)[0]


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    c = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(c * c) / (2.0 * sigma * sigma))
    return k / k.sum()


def _corr1d_valid(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    k = len(kernel)
    valid = x.shape[axis] - k + 1
    xs = np.moveaxis(x, axis, -1)
    out = float(kernel[0]) * xs[..., :valid]
    for i in range(1, k):
        out = out + float(kernel[i]) * xs[..., i:i + valid]
    return np.moveaxis(out, -1, axis)


def _corr1d_valid_adjoint(grad: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    k = len(kernel)
    gs = np.moveaxis(grad, axis, -1)
    out = np.zeros(gs.shape[:-1] + (gs.shape[-1] + k - 1,), dtype=grad.dtype)
    for i in range(k):
        out[..., i:i + gs.shape[-1]] += float(kernel[i]) * gs
    return np.moveaxis(out, -1, axis)


def _window(x, kernel):
    return _corr1d_valid(_corr1d_valid(x, kernel, axis=2), kernel, axis=3)


def _window_adjoint(g, kernel):
    return _corr1d_valid_adjoint(_corr1d_valid_adjoint(g, kernel, axis=3), kernel, axis=2)


def _as_batch(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        return x[None]
    if x.ndim == 4:
        return x
    raise ShapeError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")


def _ssim_terms(x, y, kernel):
    mu_x = _window(x, kernel)
    mu_y = _window(y, kernel)
    var_x = _window(x * x, kernel) - mu_x * mu_x
    var_y = _window(y * y, kernel) - mu_y * mu_y
    cov = _window(x * y, kernel) - mu_x * mu_y
    n1 = 2 * mu_x * mu_y + SSIM_C1
    n2 = 2 * cov + SSIM_C2
    d1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    d2 = var_x + var_y + SSIM_C2
    s = (n1 * n2) / (d1 * d2)
    return s, mu_x, mu_y, n1, n2, d1, d2


def ssim_grad(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5):
    """SSIM index averaged over windows/channels/batch, plus d(ssim)/dx.

    Windowed statistics use an 11x11 Gaussian (sigma 1.5) over valid
    positions only; images must be at least as large as the window.
    """
    x4, y4 = _as_batch(x), _as_batch(y)
    _check_same_shape(x4, y4, "ssim")
    if x4.shape[2] < window or x4.shape[3] < window:
        raise ShapeError(f"image {x4.shape} smaller than ssim window {window}x{window}")
    kernel = _gaussian_1d(window, sigma)
    s, mu_x, mu_y, n1, n2, d1, d2 = _ssim_terms(x4, y4, kernel)
    value = float(s.mean())

    up = 1.0 / s.size
    g_cov = up * 2 * n1 / (d1 * d2)
    g_var = up * (-s / d2)
    g_mu = up * (2 * mu_y * n2 / (d1 * d2) - s * 2 * mu_x / d1)
    g_mu = g_mu + g_var * (-2 * mu_x) + g_cov * (-mu_y)
    grad = (_window_adjoint(g_mu, kernel)
            + 2 * x4 * _window_adjoint(g_var, kernel)
            + y4 * _window_adjoint(g_cov, kernel))
    return value, grad.reshape(x.shape).astype(x.dtype)


def ssim(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Structural similarity in [-1, 1], computed in float64."""
    x4, y4 = _as_batch(x).astype(np.float64), _as_batch(y).astype(np.float64)
    _check_same_shape(x4, y4, "ssim")
    if x4.shape[2] < window or x4.shape[3] < window:
        raise ShapeError(f"image {x4.shape} smaller than ssim window {window}x{window}")
    s, *_ = _ssim_terms(x4, y4, _gaussian_1d(window, sigma))
    return float(s.mean())


def ssim_loss_grad(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5):
    """1 - SSIM and its gradient with respect to x."""
    value, grad = ssim_grad(x, y, window, sigma)
    return 1.0 - value, -grad


def ssim_loss(x: np.ndarray, y: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    return ssim_loss_grad(x, y, window, sigma)[0]


# ---------------------------------------------------------------------------
# Perceptual loss through a frozen stand-in feature extractor
# ---------------------------------------------------------------------------

class FeatureExtractor(Module):
    """Two conv3x3+ReLU stages (16 then 32 channels) with frozen weights.

    Weights are regenerated from a fixed seed, so every run and every
    checkpoint sees the same feature space; nothing here is ever trained.
    """

    def __init__(self, image_channels: int = 3, seed: int = FEATURE_SEED):
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2d(image_channels, 16, 3, padding=1, rng=rng)
        self.act1 = ReLU()
        self.conv2 = Conv2d(16, 32, 3, padding=1, rng=rng)
        self.act2 = ReLU()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.act2.forward(self.conv2.forward(self.act1.forward(self.conv1.forward(x))))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.conv2.backward(self.act2.backward(grad_out))
        return self.conv1.backward(self.act1.backward(g))


def perceptual_loss_grad(x: np.ndarray, y: np.ndarray, extractor: FeatureExtractor):
    """Mean absolute feature-map difference and its gradient wrt x."""
    _check_same_shape(x, y, "perceptual_loss")
    feats_y = extractor.forward(y)
    feats_x = extractor.forward(x)  # last forward, so backward flows to x
    diff = feats_x - feats_y
    value = float(np.abs(diff).mean())
    grad = extractor.backward((np.sign(diff) / diff.size).astype(x.dtype))
    return value, grad


def perceptual_loss(x: np.ndarray, y: np.ndarray, extractor: FeatureExtractor) -> float:
    return perceptual_loss_grad(x, y, extractor)[0]


# ---------------------------------------------------------------------------
# Adversarial terms
# ---------------------------------------------------------------------------

def _clamped(p: np.ndarray):
    clipped = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    return clipped, inside


def adversarial_loss_g_grad(d_fake: np.ndarray):
    """Generator's saturating term: mean log(1 - D(fake)), grad wrt D out."""
    p, inside = _clamped(d_fake)
    value = float(np.log1p(-p).mean())
    grad = np.where(inside, -1.0 / (1.0 - p), 0.0) / p.size
    return value, grad.astype(d_fake.dtype)


def adversarial_loss_g(d_fake: np.ndarray) -> float:
    return adversarial_loss_g_grad(d_fake)[0]


def real_score_loss_grad(d_real: np.ndarray):
    """Real half of the discriminator objective: -mean log D(real)."""
    p, inside = _clamped(d_real)
    value = float(-np.log(p).mean())
    grad = np.where(inside, -1.0 / p, 0.0) / p.size
    return value, grad.astype(d_real.dtype)


def fake_score_loss_grad(d_fake: np.ndarray):
    """Fake half of the discriminator objective: -mean log(1 - D(fake))."""
    p, inside = _clamped(d_fake)
    value = float(-np.log1p(-p).mean())
    grad = np.where(inside, 1.0 / (1.0 - p), 0.0) / p.size
    return value, grad.astype(d_fake.dtype)


def discriminator_loss_grad(d_real: np.ndarray, d_fake: np.ndarray):
    """-mean log D(real) - mean log(1 - D(fake)) with grads for both."""
    real_value, grad_real = real_score_loss_grad(d_real)
    fake_value, grad_fake = fake_score_loss_grad(d_fake)
    return real_value + fake_value, grad_real, grad_fake


def discriminator_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    return discriminator_loss_grad(d_real, d_fake)[0]


def total_loss(parts: LossParts, weights: LossWeights) -> float:
    """Weighted recombination of the four terms."""
    for name, value in (("l1", parts.l1), ("ssim", parts.ssim),
                        ("perceptual", parts.perceptual), ("adversarial", parts.adversarial)):
        if not np.isfinite(value):
            raise ValueError(f"total_loss got non-finite {name} term: {value}")
    return (weights.l1 * parts.l1 + weights.ssim * parts.ssim
            + weights.perceptual * parts.perceptual + weights.adversarial * parts.adversarial)


# ---------------------------------------------------------------------------
# Evaluation metrics
# ---------------------------------------------------------------------------

def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]; identical
    images return +inf."""
    _check_same_shape(x, y, "psnr")
    mse = float(np.mean((x.astype(np.float64) - y.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
