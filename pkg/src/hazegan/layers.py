"""Dense NCHW layers with explicit forward/backward passes.

Every layer caches what its backward needs during forward, accumulates
parameter gradients into `Parameter.grad`, and returns the gradient with
respect to its input from `backward`. There is no general autodiff tape:
the set of blocks below is exactly what the networks in `nets` require.

Storage is float32 by default; all math preserves the input dtype so the
gradient-check harness can rerun a block in float64.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes do not match a layer's contract."""


class GradientError(RuntimeError):
    """Raised when backward is called without a matching forward cache."""


class Parameter:
    """A learnable array with a same-shape gradient accumulation buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """Kaiming-normal init scaled by fan-in."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Module:
    """Base class: parameter discovery, train/eval mode, dtype casting.

    Child modules and parameters are found by walking instance attributes
    (lists/tuples of modules included), so attribute insertion order fixes
    the canonical parameter order used by checkpoints and optimizers.
    """

    training: bool = False
    buffer_attrs: tuple = ()

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def modules(self):
        yield self
        for child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in self.buffer_attrs:
            yield f"{prefix}{name}", getattr(self, name)
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{attr}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{attr}.{i}.")

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0

    def train(self):
        self.training = True
        for child in self.children():
            child.train()
        return self

    def eval(self):
        self.training = False
        for child in self.children():
            child.eval()
        return self

    def cast_(self, dtype):
        """Convert all parameters and buffers in place (for 64-bit checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = p.grad.astype(dtype)
        for attr in self.buffer_attrs:
            setattr(self, attr, getattr(self, attr).astype(dtype))
        for child in self.children():
            child.cast_(dtype)
        return self


def _require_4d(x: np.ndarray, who: str):
    if x.ndim != 4:
        raise ShapeError(f"{who} expects an (N, C, H, W) array, got shape {x.shape}")


class Conv2d(Module):
    """2-D cross-correlation with zero padding and square kernels.

    Forward flattens each receptive field into a row (im2col) and applies
    one matmul per batch; backward recomputes the columns from the cached
    input rather than holding them, trading a little compute for memory.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))
        self._cache = None

    def out_size(self, size: int) -> int:
        k, s, p = self.kernel_size, self.stride, self.padding
        span = size + 2 * p - k
        if span < 0 or span % s != 0:
            raise ShapeError(
                f"conv k={k} s={s} p={p} does not tile input size {size} exactly"
            )
        return span // s + 1

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        """(n, c*k*k, ho*wo) columns; copy runs along contiguous image rows."""
        n, c, h, w = x.shape
        k, s, p = self.kernel_size, self.stride, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        ho, wo = self.out_size(h), self.out_size(w)
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        windows = windows[:, :, ::s, ::s].transpose(0, 1, 4, 5, 2, 3)  # (n, c, k, k, ho, wo)
        return np.ascontiguousarray(windows).reshape(n, c * k * k, ho * wo)

    def forward(self, x: np.ndarray) -> np.ndarray:
        _require_4d(x, "Conv2d")
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"Conv2d expects {self.in_channels} input channels "
                f"(weight {self.weight.shape}), got input {x.shape}"
            )
        n, _, h, w = x.shape
        ho, wo = self.out_size(h), self.out_size(w)
        cols = self._im2col(x)
        w2 = self.weight.data.reshape(self.out_channels, -1)
        out = np.matmul(w2, cols) + self.bias.data[:, None]
        self._cache = (x.shape, cols)
        return out.reshape(n, self.out_channels, ho, wo)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise GradientError("Conv2d.backward called before forward")
        (n, c, h, w), cols = self._cache
        k, s, p = self.kernel_size, self.stride, self.padding
        ho, wo = self.out_size(h), self.out_size(w)
        if grad_out.shape != (n, self.out_channels, ho, wo):
            raise ShapeError(
                f"Conv2d.backward expects grad of shape {(n, self.out_channels, ho, wo)}, "
                f"got {grad_out.shape}"
            )
        go = grad_out.reshape(n, self.out_channels, ho * wo)
        self.weight.grad += np.matmul(go, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.weight.shape)
        self.bias.grad += grad_out.sum(axis=(0, 2, 3))

        w2 = self.weight.data.reshape(self.out_channels, -1)
        dcols = np.matmul(w2.T, go).reshape(n, c, k, k, ho, wo)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for u in range(k):
            for v in range(k):
                dxp[:, :, u:u + s * ho:s, v:v + s * wo:s] += dcols[:, :, u, v]
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


class BatchNorm2d(Module):
    """Per-channel batch normalization.

    Training mode normalizes with batch statistics (biased variance) and
    updates the running estimates; eval mode uses the running estimates,
    making the forward deterministic and batch-independent. `update_stats`
    can be cleared to run the batch-stat path without touching the running
    buffers (used when the discriminator is driven during a generator step).
    """

    buffer_attrs = ("running_mean", "running_var")

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.update_stats = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        _require_4d(x, "BatchNorm2d")
        if x.shape[1] != self.channels:
            raise ShapeError(f"BatchNorm2d({self.channels}) got input {x.shape}")
        if self.training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if self.update_stats:
                m = self.momentum
                self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(self.running_mean.dtype)
                self.running_var = ((1 - m) * self.running_var + m * var).astype(self.running_var.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * invstd[:, None, None]
        self._cache = (xhat, invstd, x.shape)
        return self.gamma.data[:, None, None] * xhat + self.beta.data[:, None, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise GradientError("BatchNorm2d.backward called before forward")
        xhat, invstd, shape = self._cache
        if grad_out.shape != shape:
            raise ShapeError(f"BatchNorm2d.backward expects grad of shape {shape}, got {grad_out.shape}")
        self.gamma.grad += (grad_out * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += grad_out.sum(axis=(0, 2, 3))
        g = grad_out * self.gamma.data[:, None, None]
        if not self.training:
            return g * invstd[:, None, None]
        n, _, h, w = shape
        m = n * h * w
        sum_g = g.sum(axis=(0, 2, 3), keepdims=True)
        sum_gx = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return invstd[:, None, None] * (g - sum_g / m - xhat * sum_gx / m)


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise GradientError("ReLU.backward called before forward")
        return np.where(self._mask, grad_out, grad_out.dtype.type(0))


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.2):
        self.slope = slope
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, x * x.dtype.type(self.slope))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise GradientError("LeakyReLU.backward called before forward")
        return np.where(self._mask, grad_out, grad_out * grad_out.dtype.type(self.slope))


class Sigmoid(Module):
    def __init__(self):
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        # tanh form avoids exp overflow; the clamp keeps saturated outputs
        # strictly inside (0, 1) at the dtype's resolution
        eps = np.finfo(x.dtype).eps
        y = 0.5 * (np.tanh(0.5 * x) + 1.0)
        self._y = np.clip(y, eps, 1.0 - eps).astype(x.dtype)
        return self._y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._y is None:
            raise GradientError("Sigmoid.backward called before forward")
        return grad_out * self._y * (1.0 - self._y)


class MaxPool2x2(Module):
    """2x2 max pooling with stride 2. Ties resolve to the first element
    in row-major window order, so each output routes to exactly one input."""

    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        _require_4d(x, "MaxPool2x2")
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"MaxPool2x2 needs even spatial dims, got {x.shape}")
        tiles = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        idx = tiles.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise GradientError("MaxPool2x2.backward called before forward")
        idx, shape = self._cache
        n, c, h, w = shape
        if grad_out.shape != (n, c, h // 2, w // 2):
            raise ShapeError(f"MaxPool2x2.backward expects {(n, c, h // 2, w // 2)}, got {grad_out.shape}")
        flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
        np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
        return flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


class UpsampleNearest2x(Module):
    """Nearest-neighbor 2x upsampling; backward sums each 2x2 block."""

    def __init__(self):
        self._in_shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        _require_4d(x, "UpsampleNearest2x")
        self._in_shape = x.shape
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._in_shape is None:
            raise GradientError("UpsampleNearest2x.backward called before forward")
        n, c, h, w = self._in_shape
        if grad_out.shape != (n, c, 2 * h, 2 * w):
            raise ShapeError(f"UpsampleNearest2x.backward expects {(n, c, 2 * h, 2 * w)}, got {grad_out.shape}")
        return grad_out.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


def concat_channels(*parts: np.ndarray) -> np.ndarray:
    """Concatenate NCHW tensors along the channel axis."""
    base = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != base[0] or p.shape[2:] != base[2:]:
            raise ShapeError(f"concat_channels got incompatible shapes {base} and {p.shape}")
    return np.concatenate(parts, axis=1)


def split_channels(x: np.ndarray, sizes) -> list[np.ndarray]:
    """Inverse of concat_channels: split into chunks of the given widths."""
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"split_channels sizes {tuple(sizes)} do not sum to {x.shape[1]} channels")
    out, at = [], 0
    for s in sizes:
        out.append(x[:, at:at + s])
        at += s
    return out
