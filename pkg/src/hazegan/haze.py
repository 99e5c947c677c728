"""Physics-based haze synthesis and the procedural paired toy corpus.

A hazy image is a per-pixel convex blend of the clear scene and the
atmospheric light, weighted by the transmission map t = exp(-beta * d).
The toy corpus renders simple clear scenes (gradient background plus a
few colored shapes) with matching depth ramps, hazes them, and records
everything in a one-record-per-line manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .layers import ShapeError
from . import pngio

A_RANGE = (0.5, 1.0)
BETA_RANGE = (1.2, 2.0)


@dataclass(frozen=True)
class HazeParams:
    atmosphere: float  # global atmospheric light in [0, 1]
    beta: float        # scattering coefficient, > 0


@dataclass
class PairedSample:
    sample_id: str
    clear: np.ndarray         # (3, H, W) in [0, 1]
    hazy: np.ndarray          # (3, H, W) in [0, 1]
    transmission: np.ndarray  # (1, H, W) in (0, 1]
    params: HazeParams


def transmission_from_depth(depth: np.ndarray, beta: float) -> np.ndarray:
    """t = exp(-beta * d) for normalized depth d in [0, 1]."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return np.exp(-beta * depth).astype(depth.dtype)


def synthesize_hazy(clear: np.ndarray, transmission: np.ndarray, atmosphere: float) -> np.ndarray:
    """Blend the clear scene toward the atmospheric light.

    Per channel: hazy = clear * t + A * (1 - t). The same scalar A is used
    for all channels, so every output pixel lies between clear and A.
    """
    if transmission.shape[-2:] != clear.shape[-2:]:
        raise ShapeError(
            f"transmission {transmission.shape} does not match clear image {clear.shape}"
        )
    t = transmission if transmission.ndim == clear.ndim else transmission[None]
    a = clear.dtype.type(atmosphere)
    return clear * t + a * (1 - t)


def sample_haze_params(rng: np.random.Generator,
                       a_range: tuple[float, float] = A_RANGE,
                       beta_range: tuple[float, float] = BETA_RANGE) -> HazeParams:
    """Uniform A in [0.5, 1] and beta in [1.2, 2.0] by default."""
    a = float(rng.uniform(*a_range))
    beta = float(rng.uniform(*beta_range))
    return HazeParams(atmosphere=a, beta=beta)


def _render_scene(rng: np.random.Generator, height: int, width: int):
    """One procedural clear scene plus its depth map, both in [0, 1].

    Background: directional color gradient with a matching depth ramp
    (linear or radial). Foreground: 2-5 rectangles/circles, each painted
    at its own constant depth so objects pop out of the ramp.
    """
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij")

    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy)
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
    if rng.uniform() < 0.3:
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        ramp = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        ramp = ramp / max(ramp.max(), 1e-9)

    c0 = rng.uniform(0.1, 0.9, size=3)
    c1 = rng.uniform(0.1, 0.9, size=3)
    clear = c0[:, None, None] * (1 - ramp) + c1[:, None, None] * ramp
    depth = 0.15 + 0.85 * ramp if rng.uniform() < 0.5 else 0.15 + 0.85 * (1 - ramp)

    for _ in range(int(rng.integers(2, 6))):
        color = rng.uniform(0.05, 0.95, size=3)
        obj_depth = rng.uniform(0.0, 0.8)
        if rng.uniform() < 0.5:
            h0 = int(rng.integers(0, max(height - 4, 1)))
            w0 = int(rng.integers(0, max(width - 4, 1)))
            h1 = min(height, h0 + int(rng.integers(4, max(height // 2, 5))))
            w1 = min(width, w0 + int(rng.integers(4, max(width // 2, 5))))
            mask = np.zeros((height, width), dtype=bool)
            mask[h0:h1, w0:w1] = True
        else:
            cy = rng.uniform(0.1, 0.9)
            cx = rng.uniform(0.1, 0.9)
            radius = rng.uniform(0.06, 0.25)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
        clear[:, mask] = color[:, None]
        depth[mask] = obj_depth

    # mild texture keeps scenes from being piecewise constant
    clear += rng.uniform(-0.02, 0.02, size=clear.shape)
    clear = np.clip(clear, 0.0, 1.0)
    depth = np.clip(depth, 0.0, 1.0)
    return clear.astype(np.float32), depth[None].astype(np.float32)


def generate_toy_corpus(count: int, size: tuple[int, int], seed: int,
                        a_range: tuple[float, float] = A_RANGE,
                        beta_range: tuple[float, float] = BETA_RANGE) -> list[PairedSample]:
    """Render `count` paired samples. Each sample derives its rng stream
    from (seed, index), so regeneration is bit-exact and order-free."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    height, width = size
    if height < 16 or width < 16:
        raise ValueError(f"corpus image size must be at least 16px, got {size}")
    samples = []
    for index in range(count):
        rng = np.random.default_rng((seed, index))
        clear, depth = _render_scene(rng, height, width)
        params = sample_haze_params(rng, a_range, beta_range)
        t = transmission_from_depth(depth, params.beta)
        hazy = synthesize_hazy(clear, t, params.atmosphere)
        samples.append(PairedSample(
            sample_id=f"sample_{index:05d}",
            clear=clear, hazy=hazy, transmission=t, params=params,
        ))
    return samples


def write_corpus(samples: list[PairedSample], out_dir: str, seed: int) -> str:
    """Write clear/hazy/transmission PNGs plus manifest.jsonl; returns the
    manifest path. Paths inside the manifest are relative to the corpus
    directory so regeneration anywhere yields byte-identical manifests."""
    for sub in ("clear", "hazy", "trans"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    lines = []
    for index, s in enumerate(samples):
        rel = {
            "clear": f"clear/{s.sample_id}.png",
            "hazy": f"hazy/{s.sample_id}.png",
            "trans": f"trans/{s.sample_id}.png",
        }
        pngio.write_png(os.path.join(out_dir, rel["clear"]), s.clear)
        pngio.write_png(os.path.join(out_dir, rel["hazy"]), s.hazy)
        pngio.write_png(os.path.join(out_dir, rel["trans"]), s.transmission)
        record = {
            "id": s.sample_id,
            "index": index,
            "clear": rel["clear"],
            "hazy": rel["hazy"],
            "transmission": rel["trans"],
            "atmosphere": s.params.atmosphere,
            "beta": s.params.beta,
            "seed": seed,
        }
        lines.append(json.dumps(record, sort_keys=True))
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def read_manifest(corpus_dir: str) -> list[dict]:
    manifest = os.path.join(corpus_dir, "manifest.jsonl")
    with open(manifest) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_corpus_arrays(corpus_dir: str) -> tuple[np.ndarray, np.ndarray]:
    """Load all (hazy, clear) pairs as float32 (N, 3, H, W) batches."""
    records = read_manifest(corpus_dir)
    hazy = np.stack([pngio.read_png(os.path.join(corpus_dir, r["hazy"])) for r in records])
    clear = np.stack([pngio.read_png(os.path.join(corpus_dir, r["clear"])) for r in records])
    return hazy, clear
