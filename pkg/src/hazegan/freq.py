"""Low/high-frequency decomposition used as discriminator priors.

LF is a per-channel Gaussian blur (default 15x15, sigma 3); HF is a 3x3
Laplacian of the grayscale image. Both use reflect padding and both are
fixed linear maps, so their backward passes are plain adjoints and never
need a forward cache.

All functions take and return (N, C, H, W) arrays and preserve dtype.
"""

from __future__ import annotations

import numpy as np

from .layers import ShapeError

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# 4-neighbor Laplacian, kernel size 3
LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """2-D Gaussian kernel, normalized to sum to 1."""
    if size % 2 == 0 or size < 3:
        raise ValueError(f"gaussian_kernel size must be odd and >= 3, got {size}")
    if sigma <= 0:
        raise ValueError(f"gaussian_kernel sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    u, v = np.meshgrid(coords, coords, indexing="ij")
    kernel = np.exp(-(u * u + v * v) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    return k / k.sum()


def _check_image(img: np.ndarray, channels: int | None = None):
    if img.ndim != 4:
        raise ShapeError(f"expected an (N, C, H, W) image batch, got shape {img.shape}")
    if channels is not None and img.shape[1] != channels:
        raise ShapeError(f"expected {channels} channels, got shape {img.shape}")


def _reflect_corr1d(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlate along one axis with reflect padding (odd kernel)."""
    k = len(kernel)
    p = k // 2
    length = x.shape[axis]
    if length <= p:
        raise ShapeError(f"axis of length {length} too small for reflect pad {p}")
    pad = [(0, 0)] * x.ndim
    pad[axis] = (p, p)
    xs = np.moveaxis(np.pad(x, pad, mode="reflect"), axis, -1)
    out = float(kernel[0]) * xs[..., 0:length]
    for i in range(1, k):
        out = out + float(kernel[i]) * xs[..., i:i + length]
    return np.moveaxis(out, -1, axis)


def _reflect_corr1d_adjoint(grad: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of _reflect_corr1d: scatter over taps, then fold the pad."""
    k = len(kernel)
    p = k // 2
    length = grad.shape[axis]
    gs = np.moveaxis(grad, axis, -1)
    padded = np.zeros(gs.shape[:-1] + (length + 2 * p,), dtype=grad.dtype)
    for i in range(k):
        padded[..., i:i + length] += float(kernel[i]) * gs
    out = padded[..., p:p + length].copy()
    if p:
        out[..., 1:p + 1] += padded[..., :p][..., ::-1]
        out[..., length - p - 1:length - 1] += padded[..., p + length:][..., ::-1]
    return np.moveaxis(out, -1, axis)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luma grayscale of an RGB batch: (N, 3, H, W) -> (N, 1, H, W)."""
    _check_image(img, channels=3)
    r, g, b = GRAY_WEIGHTS
    return (r * img[:, 0] + g * img[:, 1] + b * img[:, 2])[:, None]


def to_grayscale_backward(grad: np.ndarray) -> np.ndarray:
    _check_image(grad, channels=1)
    return np.concatenate([w * grad for w in GRAY_WEIGHTS], axis=1)


def extract_lf(img: np.ndarray, size: int = 15, sigma: float = 3.0) -> np.ndarray:
    """Per-channel Gaussian blur with reflect-padded borders.

    Separable passes along H then W; exactly the 2-D kernel since the
    Gaussian factorizes and reflection is independent per axis.
    """
    _check_image(img)
    k1 = _gaussian_kernel_1d(size, sigma)
    return _reflect_corr1d(_reflect_corr1d(img, k1, axis=2), k1, axis=3)


def extract_lf_backward(grad: np.ndarray, size: int = 15, sigma: float = 3.0) -> np.ndarray:
    _check_image(grad)
    k1 = _gaussian_kernel_1d(size, sigma)
    return _reflect_corr1d_adjoint(_reflect_corr1d_adjoint(grad, k1, axis=3), k1, axis=2)


def _laplacian(x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")
    return (xp[:, :, :-2, 1:-1] + xp[:, :, 2:, 1:-1]
            + xp[:, :, 1:-1, :-2] + xp[:, :, 1:-1, 2:] - 4 * x)


def _laplacian_adjoint(grad: np.ndarray) -> np.ndarray:
    n, c, h, w = grad.shape
    padded = np.zeros((n, c, h + 2, w + 2), dtype=grad.dtype)
    padded[:, :, :-2, 1:-1] += grad
    padded[:, :, 2:, 1:-1] += grad
    padded[:, :, 1:-1, :-2] += grad
    padded[:, :, 1:-1, 2:] += grad
    out = padded[:, :, 1:-1, 1:-1].copy()
    out[:, :, 1, :] += padded[:, :, 0, 1:-1]
    out[:, :, -2, :] += padded[:, :, -1, 1:-1]
    out[:, :, :, 1] += padded[:, :, 1:-1, 0]
    out[:, :, :, -2] += padded[:, :, 1:-1, -1]
    return out - 4 * grad


def extract_hf(img: np.ndarray) -> np.ndarray:
    """Grayscale then 3x3 Laplacian, reflect-padded. Output is signed."""
    _check_image(img, channels=3)
    return _laplacian(to_grayscale(img))


def extract_hf_backward(grad: np.ndarray) -> np.ndarray:
    _check_image(grad, channels=1)
    return to_grayscale_backward(_laplacian_adjoint(grad))


def remap_hf_for_display(hf: np.ndarray) -> np.ndarray:
    """Linear remap from [-4, 4] to [0, 1] for visualization only."""
    return np.clip((hf + 4.0) / 8.0, 0.0, 1.0)
