"""Training loop, evaluation, the ablation matrix, and the gradient suite.

One iteration is an alternating pair of updates on a batch of (hazy,
clear) pairs: the discriminator maximizes log D(real) + log(1 - D(fake))
on prior-fused samples (skipped entirely in no-gan mode), then the
generator minimizes the weighted sum of pixel L1, SSIM, perceptual and
adversarial terms. Everything is seeded, so a (seed, config, corpus)
triple maps to bit-identical checkpoints.
"""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import losses
from .config import Config
from .checkpoint import load_module_state, module_state, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (BatchNorm2d, Conv2d, LeakyReLU, MaxPool2x2, Module, ReLU,
                     Sigmoid, UpsampleNearest2x, concat_channels, split_channels)
from .losses import (FeatureExtractor, LossParts, LossWeights,
                     adversarial_loss_g_grad, l1_loss_grad,
                     perceptual_loss_grad, psnr, ssim, ssim_loss_grad)
from .nets import (ArchSpec, DenseBlock, FusionDiscriminator, Generator,
                   ImageCritic, VARIANT_LABELS, assemble_fusion_backward,
                   assemble_fusion_input, build_discriminator, build_generator)
from .optim import Adam, TrainingAborted

MATRIX_MODES = ("no-gan", "plain-gan", "hf-only", "lf-only", "full")


@contextmanager
def frozen_batchnorm_stats(module: Module):
    """Run batch-stat normalization without touching running buffers."""
    bns = [m for m in module.modules() if isinstance(m, BatchNorm2d)]
    saved = [bn.update_stats for bn in bns]
    for bn in bns:
        bn.update_stats = False
    try:
        yield
    finally:
        for bn, flag in zip(bns, saved):
            bn.update_stats = flag


@dataclass
class StepReport:
    step: int
    l1: float
    ssim: float
    perceptual: float
    adversarial: float
    d_loss: float | None
    total: float
    wall_time: float = 0.0

    def to_record(self, running_l1: float) -> dict:
        return {
            "step": self.step, "l1": self.l1, "ssim": self.ssim,
            "perceptual": self.perceptual, "adversarial": self.adversarial,
            "d_loss": self.d_loss, "total": self.total,
            "running_l1": running_l1, "wall_time": self.wall_time,
        }


class Trainer:
    def __init__(self, cfg: Config, train_hazy: np.ndarray, train_clear: np.ndarray,
                 out_dir: str | None = None):
        cfg.validate()
        if train_hazy.shape != train_clear.shape:
            raise ValueError(f"hazy/clear corpus shapes differ: {train_hazy.shape} vs {train_clear.shape}")
        h, w = train_hazy.shape[2:]
        need = 16 if cfg.variant != "no-gan" else 8
        if h % need or w % need:
            raise ValueError(f"training images must have dims divisible by {need}, got {h}x{w}")
        self.cfg = cfg
        self.train_hazy = np.ascontiguousarray(train_hazy, dtype=np.float32)
        self.train_clear = np.ascontiguousarray(train_clear, dtype=np.float32)
        self.out_dir = out_dir
        self.arch = ArchSpec(gauss_size=cfg.gauss_size, gauss_sigma=cfg.gauss_sigma)
        self.weights = LossWeights(cfg.alpha1, cfg.alpha2, cfg.alpha3, cfg.alpha4)

        seeds = np.random.SeedSequence(cfg.seed).spawn(3)
        self.gen = build_generator(self.arch, seeds[0])
        self.disc = None
        self.opt_d = None
        if cfg.variant != "no-gan":
            self.disc = build_discriminator(self.arch, cfg.variant, seeds[1])
            self.opt_d = Adam(list(self.disc.named_parameters()), cfg.lr,
                              cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.extractor = FeatureExtractor(self.arch.image_channels)
        self.opt_g = Adam(list(self.gen.named_parameters()), cfg.lr,
                          cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        self._batch_rng = np.random.default_rng(seeds[2])
        self._perm = self._batch_rng.permutation(len(self.train_hazy))
        self._pos = 0
        self.step_count = 0
        self.running_l1 = None
        self.history: list[StepReport] = []
        self._ckpt_paths: list[str] = []
        self.last_checkpoint: str | None = None

    # ----------------------------------------------------------------- data

    def next_batch(self):
        n = len(self.train_hazy)
        take = min(self.cfg.batch_size, n)
        if self._pos + take > n:
            self._perm = self._batch_rng.permutation(n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + take]
        self._pos += take
        return self.train_hazy[idx], self.train_clear[idx]

    # ---------------------------------------------------------------- steps

    def _assemble(self, img: np.ndarray) -> np.ndarray:
        return assemble_fusion_input(img, self.cfg.variant, self.cfg.gauss_size, self.cfg.gauss_sigma)

    def _discriminator_step(self, fake: np.ndarray, clear: np.ndarray) -> float:
        """Maximize log D(real) + log(1 - D(fake)); fake is treated as a
        constant (no gradient flows back into the generator here)."""
        self.disc.train()
        self.disc.zero_grad()
        p_real = self.disc.forward(self._assemble(clear))
        real_term, g_real = losses.real_score_loss_grad(p_real)
        self.disc.backward(g_real)
        p_fake = self.disc.forward(self._assemble(fake))
        fake_term, g_fake = losses.fake_score_loss_grad(p_fake)
        self.disc.backward(g_fake)
        self.opt_d.step()
        return real_term + fake_term

    def _generator_step(self, fake: np.ndarray, clear: np.ndarray):
        """Minimize the weighted objective; assumes self.gen still holds the
        forward caches that produced `fake`."""
        cfg = self.cfg
        self.gen.zero_grad()
        l1_v, g_l1 = l1_loss_grad(fake, clear)
        ls_v, g_ls = ssim_loss_grad(fake, clear, cfg.ssim_window, cfg.ssim_sigma)
        lp_v, g_lp = perceptual_loss_grad(fake, clear, self.extractor)
        grad_fake = (cfg.alpha1 * g_l1 + cfg.alpha2 * g_ls + cfg.alpha3 * g_lp)
        lg_v = 0.0
        if self.disc is not None:
            with frozen_batchnorm_stats(self.disc):
                p_fake = self.disc.forward(self._assemble(fake))
                lg_v, g_p = adversarial_loss_g_grad(p_fake)
                grad_sample = self.disc.backward(g_p)
            g_adv = assemble_fusion_backward(grad_sample, cfg.variant, cfg.gauss_size, cfg.gauss_sigma)
            grad_fake = grad_fake + cfg.alpha4 * g_adv
        parts = LossParts(l1_v, ls_v, lp_v, lg_v)
        try:
            total = losses.total_loss(parts, self.weights)
        except ValueError as exc:
            raise TrainingAborted(
                f"{exc}; last good checkpoint: {self.last_checkpoint or 'none'}"
            ) from exc
        self.gen.backward(grad_fake.astype(np.float32, copy=False))
        self.opt_g.step()
        return parts, total

    def train_step(self, hazy: np.ndarray, clear: np.ndarray) -> StepReport:
        self.step_count += 1
        self.gen.train()
        fake = self.gen.forward(hazy)
        d_loss = self._discriminator_step(fake, clear) if self.disc is not None else None
        parts, total = self._generator_step(fake, clear)
        if not np.isfinite(total) or (d_loss is not None and not np.isfinite(d_loss)):
            raise TrainingAborted(
                f"non-finite loss at step {self.step_count}; "
                f"last good checkpoint: {self.last_checkpoint or 'none'}"
            )
        return StepReport(self.step_count, parts.l1, parts.ssim, parts.perceptual,
                          parts.adversarial, d_loss, total)

    # ------------------------------------------------------------ main loop

    def run(self, log_path: str | None = None, quiet: bool = True):
        log_fh = open(log_path, "w") if log_path else None
        try:
            for _ in range(self.cfg.iterations):
                hazy, clear = self.next_batch()
                t0 = time.perf_counter()
                report = self.train_step(hazy, clear)
                report.wall_time = time.perf_counter() - t0
                if self.running_l1 is None:
                    self.running_l1 = report.l1
                else:
                    self.running_l1 = 0.9 * self.running_l1 + 0.1 * report.l1
                self.history.append(report)
                if log_fh:
                    log_fh.write(json.dumps(report.to_record(self.running_l1)) + "\n")
                if not quiet and (report.step % self.cfg.log_every == 0 or report.step == 1):
                    d_txt = f"{report.d_loss:.4f}" if report.d_loss is not None else "-"
                    print(f"step {report.step:5d}  l1 {report.l1:.4f}  ssim {report.ssim:.4f}  "
                          f"perc {report.perceptual:.4f}  adv {report.adversarial:+.4f}  "
                          f"d {d_txt}  total {report.total:.4f}")
                if self.out_dir and self.step_count % self.cfg.checkpoint_every == 0:
                    self._save_rolling_checkpoint()
            if self.out_dir:
                self.save_checkpoint(os.path.join(self.out_dir, "checkpoint_final.ckpt"))
        finally:
            if log_fh:
                log_fh.close()
        return self.history

    # ------------------------------------------------------------ persisting

    def state(self) -> dict[str, np.ndarray]:
        state = module_state(self.gen, "gen.")
        state.update(module_state(self.extractor, "fe."))
        if self.disc is not None:
            state.update(module_state(self.disc, "disc."))
        return state

    def save_checkpoint(self, path: str) -> str:
        meta = {"step": self.step_count, "seed": self.cfg.seed}
        save_checkpoint(path, self.arch, self.cfg.variant, self.state(), meta)
        self.last_checkpoint = path
        return path

    def _save_rolling_checkpoint(self):
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, f"ckpt_{self.step_count:06d}.ckpt")
        self.save_checkpoint(path)
        self._ckpt_paths.append(path)
        while len(self._ckpt_paths) > self.cfg.checkpoint_keep:
            stale = self._ckpt_paths.pop(0)
            if os.path.exists(stale):
                os.remove(stale)


def load_generator(ckpt_path: str, expect_variant: str | None = None) -> tuple[Generator, str]:
    """Rebuild the exact generator recorded in a checkpoint header."""
    from .checkpoint import CheckpointError, load_checkpoint

    arch, variant, state, _meta = load_checkpoint(ckpt_path)
    if expect_variant is not None and expect_variant != variant:
        raise CheckpointError(
            f"checkpoint was trained with variant {variant!r} but {expect_variant!r} was requested"
        )
    gen = build_generator(arch, np.random.SeedSequence(0))
    load_module_state(gen, state, "gen.")
    return gen, variant


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def run_generator(gen: Generator, hazy: np.ndarray, batch_size: int = 8) -> np.ndarray:
    gen.eval()
    outs = [gen.forward(hazy[i:i + batch_size]) for i in range(0, len(hazy), batch_size)]
    return np.concatenate(outs, axis=0)


def image_metrics(a: np.ndarray, b: np.ndarray, ssim_window: int = 11, ssim_sigma: float = 1.5):
    return psnr(a, b), ssim(a, b, ssim_window, ssim_sigma)


def evaluate_pairs(outputs: np.ndarray, clear: np.ndarray,
                   ssim_window: int = 11, ssim_sigma: float = 1.5):
    """Per-image PSNR/SSIM records plus their means."""
    records = []
    for i in range(len(outputs)):
        p, s = image_metrics(outputs[i], clear[i], ssim_window, ssim_sigma)
        records.append({"index": i, "psnr": p, "ssim": s})
    finite = [r["psnr"] for r in records if np.isfinite(r["psnr"])]
    mean_psnr = float(np.mean(finite)) if finite else float("inf")
    mean_ssim = float(np.mean([r["ssim"] for r in records]))
    return records, {"psnr": mean_psnr, "ssim": mean_ssim}


def format_metrics_table(records, means) -> str:
    lines = [f"{'image':>8s}  {'PSNR (dB)':>10s}  {'SSIM':>8s}"]
    for r in records:
        p = "inf" if not np.isfinite(r["psnr"]) else f"{r['psnr']:.4f}"
        lines.append(f"{r['index']:>8d}  {p:>10s}  {r['ssim']:.4f}")
    p = "inf" if not np.isfinite(means["psnr"]) else f"{means['psnr']:.4f}"
    lines.append(f"{'mean':>8s}  {p:>10s}  {means['ssim']:.4f}")
    return "\n".join(lines) + "\n"


def dehaze_image(gen: Generator, img: np.ndarray) -> np.ndarray:
    """Run one (3, H, W) image of arbitrary size >= 16: reflect-pad both
    dims up to the next multiple of 8, run the generator, crop back."""
    _, h, w = img.shape
    ph = (8 - h % 8) % 8
    pw = (8 - w % 8) % 8
    x = img[None].astype(np.float32)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    out = run_generator(gen, x)
    return out[0, :, :h, :w]


# --------------------------------------------------------------------------
# Ablation matrix
# --------------------------------------------------------------------------

@dataclass
class MatrixCell:
    mode: str
    variant: str
    psnr: float = float("nan")
    ssim: float = float("nan")
    status: str = "ok"
    error: str = ""

    def to_record(self) -> dict:
        return {"mode": self.mode, "variant": self.variant, "psnr": self.psnr,
                "ssim": self.ssim, "status": self.status, "error": self.error}


def run_experiment_matrix(cfg: Config, train_hazy, train_clear, eval_hazy, eval_clear,
                          quiet: bool = True):
    """Train every mode on the same corpus and seed; evaluate on the eval
    split. A crashing cell is marked failed and the rest proceed. Returns
    (cells, reference) where reference scores the raw hazy inputs."""
    from dataclasses import replace

    cells = []
    for variant in MATRIX_MODES:
        cell = MatrixCell(mode=VARIANT_LABELS[variant], variant=variant)
        try:
            cell_cfg = replace(cfg, variant=variant)
            trainer = Trainer(cell_cfg, train_hazy, train_clear, out_dir=None)
            trainer.run(quiet=quiet)
            outputs = run_generator(trainer.gen, eval_hazy)
            _, means = evaluate_pairs(outputs, eval_clear, cfg.ssim_window, cfg.ssim_sigma)
            cell.psnr, cell.ssim = means["psnr"], means["ssim"]
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            cell.status = "failed"
            cell.error = f"{type(exc).__name__}: {exc}"
        cells.append(cell)
    _, reference = evaluate_pairs(eval_hazy, eval_clear, cfg.ssim_window, cfg.ssim_sigma)
    return cells, reference


def format_matrix_table(cells: list[MatrixCell], reference: dict) -> str:
    lines = [f"{'mode':<14s}  {'PSNR (dB)':>10s}  {'SSIM':>8s}",
             "-" * 38]
    for cell in cells:
        if cell.status == "ok":
            lines.append(f"{cell.mode:<14s}  {cell.psnr:>10.4f}  {cell.ssim:>8.4f}")
        else:
            lines.append(f"{cell.mode:<14s}  {'failed':>10s}  {'-':>8s}")
    lines.append("-" * 38)
    lines.append(f"{'hazy input':<14s}  {reference['psnr']:>10.4f}  {reference['ssim']:>8.4f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Gradient suite
# --------------------------------------------------------------------------

class _ScalarBlock(Module):
    """Adapts f(x) -> (value, grad_x) into a checkable block."""

    def __init__(self, fn):
        self.fn = fn
        self._grad = None

    def forward(self, x):
        value, self._grad = self.fn(x)
        return np.array([value], dtype=x.dtype)

    def backward(self, r):
        return float(r[0]) * self._grad


class _FreqBlock(Module):
    """Fixed linear frequency extractor as a block (no parameters)."""

    def __init__(self, fwd, bwd):
        self.fwd = fwd
        self.bwd = bwd

    def forward(self, x):
        return self.fwd(x)

    def backward(self, grad):
        return self.bwd(grad)


class _ConcatShuffleBlock(Module):
    """Splits channels and re-concatenates them reversed."""

    def __init__(self, sizes):
        self.sizes = list(sizes)

    def forward(self, x):
        return concat_channels(*reversed(split_channels(x, self.sizes)))

    def backward(self, grad):
        parts = split_channels(grad, list(reversed(self.sizes)))
        return concat_channels(*reversed(parts))


def gradcheck_all(seed: int = 0) -> list[GradCheckReport]:
    """Finite-difference checks for every layer type, both networks, and
    every differentiable loss, at the documented tolerances."""
    from . import freq

    streams = iter(np.random.SeedSequence(seed).spawn(64))

    def rng():
        return np.random.default_rng(next(streams))

    reports = []

    def check(name, block, x, tol, train=False):
        (block.train() if train else block.eval())
        reports.append(grad_check(block, x, tol, name=name, rng=rng()))

    data_rng = rng()
    x_small = data_rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    check("conv3x3", Conv2d(3, 4, 3, padding=1, rng=rng()), x_small, 1e-3)
    check("conv4x4-stride2", Conv2d(3, 4, 4, stride=2, padding=1, rng=rng()),
          data_rng.standard_normal((2, 3, 8, 8)).astype(np.float32), 1e-3)
    check("batchnorm-train", BatchNorm2d(3), x_small, 1e-3, train=True)
    check("batchnorm-eval", BatchNorm2d(3), x_small, 1e-3)
    check("relu", ReLU(), x_small, 1e-3)
    check("leaky-relu", LeakyReLU(0.2), x_small, 1e-3)
    check("sigmoid", Sigmoid(), x_small, 1e-3)
    check("maxpool2x2", MaxPool2x2(), x_small, 1e-3)
    check("upsample-nearest2x", UpsampleNearest2x(), data_rng.standard_normal((2, 3, 5, 5)).astype(np.float32), 1e-3)
    check("concat-channels", _ConcatShuffleBlock([2, 1]), x_small, 1e-3)
    check("dense-block", DenseBlock(6, 4, 3, rng()),
          data_rng.standard_normal((2, 6, 8, 8)).astype(np.float32), 1e-3, train=True)

    img = data_rng.uniform(0.1, 0.9, size=(1, 3, 16, 16)).astype(np.float32)
    check("lf-extractor", _FreqBlock(freq.extract_lf, freq.extract_lf_backward), img, 1e-3)
    check("hf-extractor", _FreqBlock(freq.extract_hf, freq.extract_hf_backward), img, 1e-3)

    # whole networks are checked in eval mode (the deterministic path the
    # harness precondition names); the train-mode batchnorm backward has its
    # own dedicated check above
    arch = ArchSpec()
    check("generator@16x16", Generator(arch, rng()), img, 5e-3)
    fused = data_rng.standard_normal((1, 7, 16, 16)).astype(np.float32)
    check("discriminator@16x16", FusionDiscriminator(arch, "full", rng()), fused, 5e-3)
    check("fused-critic@16x16", ImageCritic(FusionDiscriminator(arch, "full", rng())), img, 5e-3)

    # independent images keep feature differences away from the L1 kink
    target = data_rng.uniform(0.1, 0.9, size=(2, 3, 16, 16)).astype(np.float32)
    moved = data_rng.uniform(0.1, 0.9, size=(2, 3, 16, 16)).astype(np.float32)
    extractor = FeatureExtractor()
    check("loss-l1", _ScalarBlock(lambda x: l1_loss_grad(x, target.astype(x.dtype))), moved, 1e-3)
    check("loss-ssim", _ScalarBlock(lambda x: ssim_loss_grad(x, target.astype(x.dtype))), moved, 1e-3)
    check("loss-perceptual",
          _ScalarBlock(lambda x: perceptual_loss_grad(x, target.astype(x.dtype), extractor)), moved, 1e-3)

    probs = data_rng.uniform(0.2, 0.8, size=8).astype(np.float32)
    other = data_rng.uniform(0.2, 0.8, size=8).astype(np.float32)
    check("loss-adversarial-g", _ScalarBlock(adversarial_loss_g_grad), probs, 1e-3)

    def d_loss_wrt_real(p):
        value, g_real, _ = losses.discriminator_loss_grad(p, other.astype(p.dtype))
        return value, g_real

    def d_loss_wrt_fake(p):
        value, _, g_fake = losses.discriminator_loss_grad(other.astype(p.dtype), p)
        return value, g_fake

    check("loss-discriminator/real", _ScalarBlock(d_loss_wrt_real), probs, 1e-3)
    check("loss-discriminator/fake", _ScalarBlock(d_loss_wrt_fake), probs, 1e-3)
    return reports


def format_gradcheck_reports(reports: list[GradCheckReport]) -> str:
    lines = [r.summary() for r in reports]
    failed = [r.block for r in reports if not r.passed]
    lines.append("")
    if failed:
        lines.append(f"FAILED: {', '.join(failed)}")
    else:
        lines.append(f"all {len(reports)} gradient checks passed")
    return "\n".join(lines) + "\n"
