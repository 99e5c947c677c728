"""GAN-based single-image dehazing with frequency-prior discriminators,
built on a hand-written numpy layer/backprop core."""

__version__ = "0.1.0"

from .config import Config
from .haze import (HazeParams, PairedSample, generate_toy_corpus,
                   sample_haze_params, synthesize_hazy, transmission_from_depth)
from .losses import (LossParts, LossWeights, adversarial_loss_g,
                     discriminator_loss, l1_loss, perceptual_loss, psnr, ssim,
                     ssim_loss, total_loss)
from .nets import (ArchSpec, FusionDiscriminator, Generator,
                   assemble_fusion_input, build_discriminator, build_generator)
from .train import Trainer, dehaze_image, gradcheck_all, run_experiment_matrix

__all__ = [
    "ArchSpec", "Config", "FusionDiscriminator", "Generator", "HazeParams",
    "LossParts", "LossWeights", "PairedSample", "Trainer",
    "adversarial_loss_g", "assemble_fusion_input", "build_discriminator",
    "build_generator", "dehaze_image", "discriminator_loss",
    "generate_toy_corpus", "gradcheck_all", "l1_loss", "perceptual_loss",
    "psnr", "run_experiment_matrix", "sample_haze_params", "ssim",
    "ssim_loss", "synthesize_hazy", "total_loss", "transmission_from_depth",
]
