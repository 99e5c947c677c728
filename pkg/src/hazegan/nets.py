"""Generator and discriminator built from the explicit layers.

The generator is a densely connected encoder-decoder: three dense blocks
each followed by 2x2 pooling (the deepest map is 1/8 of the input), a
bottleneck, three nearest-neighbor upsample + conv stages back to full
resolution, and a sigmoid head so outputs stay in (0, 1).

The discriminator judges an image concatenated with its frequency priors.
Variants differ only in which priors are appended (and therefore in the
first conv's input channels): full = image+LF+HF (7ch), lf-only = 6ch,
hf-only = 4ch, plain-gan = bare image (3ch).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import freq
from .layers import (BatchNorm2d, Conv2d, LeakyReLU, MaxPool2x2, Module, ReLU,
                     ShapeError, Sigmoid, UpsampleNearest2x, concat_channels,
                     split_channels)

VARIANTS = ("full", "lf-only", "hf-only", "plain-gan", "no-gan")
GAN_VARIANTS = ("full", "lf-only", "hf-only", "plain-gan")

# table/report labels for the ablation matrix
VARIANT_LABELS = {
    "no-gan": "Baseline",
    "plain-gan": "PlainGAN",
    "hf-only": "Fusion-HF",
    "lf-only": "Fusion-LF",
    "full": "Fusion-full",
}


@dataclass(frozen=True)
class ArchSpec:
    """Desk-scale widths; the checkpoint header carries these so a saved
    model can be rebuilt exactly."""
    image_channels: int = 3
    stem_channels: int = 16
    growth: int = 8
    block_layers: int = 4
    num_blocks: int = 3
    bottleneck_channels: int = 64
    decoder_channels: tuple = (48, 32, 24)
    disc_widths: tuple = (16, 32, 64, 64)
    gauss_size: int = 15
    gauss_sigma: float = 3.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decoder_channels"] = list(self.decoder_channels)
        d["disc_widths"] = list(self.disc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        d = dict(d)
        d["decoder_channels"] = tuple(d["decoder_channels"])
        d["disc_widths"] = tuple(d["disc_widths"])
        return cls(**d)


def fusion_channels(variant: str, image_channels: int = 3) -> int:
    """Discriminator input channels for a GAN variant."""
    extra = {"full": image_channels + 1, "lf-only": image_channels, "hf-only": 1, "plain-gan": 0}
    if variant not in extra:
        raise ValueError(f"variant {variant!r} is not one of {GAN_VARIANTS}")
    return image_channels + extra[variant]


def assemble_fusion_input(img: np.ndarray, variant: str,
                          gauss_size: int = 15, gauss_sigma: float = 3.0) -> np.ndarray:
    """Concatenate an image batch with its frequency priors per variant.

    The map is differentiable end to end; see assemble_fusion_backward.
    """
    if variant == "plain-gan":
        return img
    parts = [img]
    if variant in ("full", "lf-only"):
        parts.append(freq.extract_lf(img, gauss_size, gauss_sigma))
    if variant in ("full", "hf-only"):
        parts.append(freq.extract_hf(img))
    return concat_channels(*parts)


def assemble_fusion_backward(grad_sample: np.ndarray, variant: str,
                             gauss_size: int = 15, gauss_sigma: float = 3.0) -> np.ndarray:
    """Pull a gradient on the fused sample back onto the image batch."""
    if variant == "plain-gan":
        return grad_sample
    total = grad_sample.shape[1]
    if variant == "full":
        c = (total - 1) // 2
    elif variant == "lf-only":
        c = total // 2
    else:
        c = total - 1
    grad_img = grad_sample[:, :c].copy()
    at = c
    if variant in ("full", "lf-only"):
        grad_img += freq.extract_lf_backward(grad_sample[:, at:at + c], gauss_size, gauss_sigma)
        at += c
    if variant in ("full", "hf-only"):
        grad_img += freq.extract_hf_backward(grad_sample[:, at:at + 1])
    return grad_img


class ConvBNRelu(Module):
    def __init__(self, in_channels, out_channels, rng, kernel_size=3, stride=1, padding=1):
        self.conv = Conv2d(in_channels, out_channels, kernel_size, stride, padding, rng=rng)
        self.bn = BatchNorm2d(out_channels)
        self.act = ReLU()

    def forward(self, x):
        return self.act.forward(self.bn.forward(self.conv.forward(x)))

    def backward(self, grad_out):
        return self.conv.backward(self.bn.backward(self.act.backward(grad_out)))


class DenseBlock(Module):
    """Each inner layer sees the concatenation of the block input and all
    previous layer outputs; the block emits that full concatenation."""

    def __init__(self, in_channels: int, growth: int, num_layers: int, rng):
        self.in_channels = in_channels
        self.growth = growth
        self.layers = [ConvBNRelu(in_channels + i * growth, growth, rng) for i in range(num_layers)]
        self.out_channels = in_channels + num_layers * growth

    @property
    def feature_sizes(self):
        return [self.in_channels] + [self.growth] * len(self.layers)

    def forward(self, x):
        feats = [x]
        for layer in self.layers:
            feats.append(layer.forward(concat_channels(*feats)))
        return concat_channels(*feats)

    def backward(self, grad_out):
        sizes = self.feature_sizes
        grads = [g.copy() for g in split_channels(grad_out, sizes)]
        for i in reversed(range(len(self.layers))):
            grad_in = self.layers[i].backward(grads[i + 1])
            for j, part in enumerate(split_channels(grad_in, sizes[:i + 1])):
                grads[j] += part
        return grads[0]


class Generator(Module):
    def __init__(self, arch: ArchSpec, rng: np.random.Generator):
        self.arch = arch
        self.stem = ConvBNRelu(arch.image_channels, arch.stem_channels, rng)
        self.blocks, self.pools = [], []
        channels = arch.stem_channels
        for _ in range(arch.num_blocks):
            block = DenseBlock(channels, arch.growth, arch.block_layers, rng)
            channels = block.out_channels
            self.blocks.append(block)
            self.pools.append(MaxPool2x2())
        self.bottleneck = ConvBNRelu(channels, arch.bottleneck_channels, rng)
        channels = arch.bottleneck_channels
        self.ups, self.dec_convs = [], []
        for out_channels in arch.decoder_channels:
            self.ups.append(UpsampleNearest2x())
            self.dec_convs.append(ConvBNRelu(channels, out_channels, rng))
            channels = out_channels
        self.head = Conv2d(channels, arch.image_channels, 3, padding=1, rng=rng)
        self.head_act = Sigmoid()
        self.bottleneck_shape = None

    def _stages(self):
        stages = [self.stem]
        for block, pool in zip(self.blocks, self.pools):
            stages += [block, pool]
        stages.append(self.bottleneck)
        for up, conv in zip(self.ups, self.dec_convs):
            stages += [up, conv]
        stages += [self.head, self.head_act]
        return stages

    def forward(self, x: np.ndarray) -> np.ndarray:
        factor = 2 ** self.arch.num_blocks
        if x.ndim != 4 or x.shape[1] != self.arch.image_channels:
            raise ShapeError(f"generator expects (N, {self.arch.image_channels}, H, W), got {x.shape}")
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ShapeError(
                f"generator input dims must be multiples of {factor}, got {x.shape[2]}x{x.shape[3]}"
            )
        for stage in self._stages():
            x = stage.forward(x)
            if stage is self.bottleneck:
                self.bottleneck_shape = x.shape
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for stage in reversed(self._stages()):
            grad_out = stage.backward(grad_out)
        return grad_out


class FusionDiscriminator(Module):
    """Four strided conv+BN+LeakyReLU stages, then a 1-channel conv +
    sigmoid head spatially averaged to one probability per sample."""

    def __init__(self, arch: ArchSpec, variant: str, rng: np.random.Generator):
        if variant not in GAN_VARIANTS:
            raise ValueError(f"variant {variant!r} is not one of {GAN_VARIANTS}")
        self.arch = arch
        self.variant = variant
        self.in_channels = fusion_channels(variant, arch.image_channels)
        self.convs, self.bns, self.acts = [], [], []
        channels = self.in_channels
        for width in arch.disc_widths:
            self.convs.append(Conv2d(channels, width, 4, stride=2, padding=1, rng=rng))
            self.bns.append(BatchNorm2d(width))
            self.acts.append(LeakyReLU(0.2))
            channels = width
        self.head = Conv2d(channels, 1, 3, padding=1, rng=rng)
        self.head_act = Sigmoid()
        self._map_shape = None

    def forward(self, sample: np.ndarray) -> np.ndarray:
        if sample.ndim != 4 or sample.shape[1] != self.in_channels:
            raise ShapeError(
                f"discriminator variant {self.variant!r} expects {self.in_channels} channels, "
                f"got input {sample.shape}"
            )
        x = sample
        for conv, bn, act in zip(self.convs, self.bns, self.acts):
            x = act.forward(bn.forward(conv.forward(x)))
        x = self.head_act.forward(self.head.forward(x))
        self._map_shape = x.shape
        return x.mean(axis=(1, 2, 3))

    def backward(self, grad_scores: np.ndarray) -> np.ndarray:
        if self._map_shape is None:
            raise ShapeError("FusionDiscriminator.backward called before forward")
        n, c, h, w = self._map_shape
        if grad_scores.shape != (n,):
            raise ShapeError(f"discriminator backward expects per-sample grads of shape {(n,)}, "
                             f"got {grad_scores.shape}")
        g = np.broadcast_to(grad_scores[:, None, None, None] / (c * h * w), self._map_shape)
        g = self.head.backward(self.head_act.backward(np.ascontiguousarray(g)))
        for conv, bn, act in zip(reversed(self.convs), reversed(self.bns), reversed(self.acts)):
            g = conv.backward(bn.backward(act.backward(g)))
        return g


class ImageCritic(Module):
    """Discriminator composed with the prior assembly, as a map from an
    image batch to per-sample probabilities (used for gradient checks)."""

    def __init__(self, disc: FusionDiscriminator):
        self.disc = disc

    def forward(self, img: np.ndarray) -> np.ndarray:
        arch = self.disc.arch
        return self.disc.forward(
            assemble_fusion_input(img, self.disc.variant, arch.gauss_size, arch.gauss_sigma))

    def backward(self, grad_scores: np.ndarray) -> np.ndarray:
        arch = self.disc.arch
        return assemble_fusion_backward(
            self.disc.backward(grad_scores), self.disc.variant, arch.gauss_size, arch.gauss_sigma)


def build_generator(arch: ArchSpec, seed_seq: np.random.SeedSequence) -> Generator:
    return Generator(arch, np.random.default_rng(seed_seq))


def build_discriminator(arch: ArchSpec, variant: str, seed_seq: np.random.SeedSequence) -> FusionDiscriminator:
    return FusionDiscriminator(arch, variant, np.random.default_rng(seed_seq))
