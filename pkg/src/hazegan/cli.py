"""Command-line surface.

Subcommands: synth, decompose, train, eval, dehaze, gradcheck, ablate.
Exit codes: 0 success, 1 usage/config error, 2 runtime failure. Every
command is deterministic given the same flags, seed and inputs; the
effective configuration is echoed into the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import freq, pngio
from .config import Config, ConfigError, echo_config, load_config
from .haze import generate_toy_corpus, load_corpus_arrays, write_corpus
from .train import (Trainer, dehaze_image, evaluate_pairs, format_gradcheck_reports,
                    format_matrix_table, format_metrics_table, gradcheck_all,
                    load_generator, run_experiment_matrix, run_generator)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_value(v):
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else "-inf"
    return v


def _write_jsonl(path: str, records: list[dict]):
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps({k: _json_value(v) for k, v in record.items()}, sort_keys=True) + "\n")


def _overrides(args, keys) -> dict:
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def _load_cfg(args, keys) -> Config:
    return load_config(getattr(args, "config", None), _overrides(args, keys))


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = _load_cfg(args, ("count", "size", "seed", "out"))
    if not cfg.out:
        raise UsageError("synth requires --out")
    samples = generate_toy_corpus(cfg.count, (cfg.size, cfg.size), cfg.seed,
                                  (cfg.a_min, cfg.a_max), (cfg.beta_min, cfg.beta_max))
    manifest = write_corpus(samples, cfg.out, cfg.seed)
    echo_config(cfg, cfg.out)
    print(f"wrote {len(samples)} paired samples to {cfg.out} (manifest: {manifest})")
    return 0


def cmd_decompose(args) -> int:
    cfg = _load_cfg(args, ())
    img = pngio.read_png(args.image)[None]
    lf = freq.extract_lf(img, cfg.gauss_size, cfg.gauss_sigma)[0]
    hf = freq.remap_hf_for_display(freq.extract_hf(img))[0]
    stem, _ = os.path.splitext(args.image)
    lf_path, hf_path = f"{stem}_lf.png", f"{stem}_hf.png"
    pngio.write_png(lf_path, lf)
    pngio.write_png(hf_path, hf)
    print(f"wrote {lf_path} and {hf_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args, ("corpus", "eval_corpus", "out", "seed", "variant",
                           "iterations", "batch_size", "lr"))
    if not cfg.corpus:
        raise UsageError("train requires --corpus")
    if not cfg.out:
        raise UsageError("train requires --out")
    hazy, clear = load_corpus_arrays(cfg.corpus)
    os.makedirs(cfg.out, exist_ok=True)
    echo_config(cfg, cfg.out)
    trainer = Trainer(cfg, hazy, clear, out_dir=cfg.out)
    trainer.run(log_path=os.path.join(cfg.out, "train_log.jsonl"), quiet=False)
    final = trainer.last_checkpoint
    print(f"training finished after {trainer.step_count} steps; checkpoint: {final}")
    if cfg.eval_corpus:
        eval_hazy, eval_clear = load_corpus_arrays(cfg.eval_corpus)
        outputs = run_generator(trainer.gen, eval_hazy)
        records, means = evaluate_pairs(outputs, eval_clear, cfg.ssim_window, cfg.ssim_sigma)
        table = format_metrics_table(records, means)
        print(table, end="")
        with open(os.path.join(cfg.out, "metrics.txt"), "w") as fh:
            fh.write(table)
        _write_jsonl(os.path.join(cfg.out, "metrics.jsonl"), records + [{"index": "mean", **means}])
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args, ("corpus", "out"))
    if not cfg.corpus:
        raise UsageError("eval requires --corpus")
    gen, _variant = load_generator(args.checkpoint, args.variant)
    hazy, clear = load_corpus_arrays(cfg.corpus)
    outputs = run_generator(gen, hazy)
    records, means = evaluate_pairs(outputs, clear, cfg.ssim_window, cfg.ssim_sigma)
    table = format_metrics_table(records, means)
    print(table, end="")
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "metrics.txt"), "w") as fh:
            fh.write(table)
        _write_jsonl(os.path.join(cfg.out, "metrics.jsonl"), records + [{"index": "mean", **means}])
    return 0


def cmd_dehaze(args) -> int:
    gen, _variant = load_generator(args.checkpoint, args.variant)
    img = pngio.read_png(args.image)
    if img.shape[1] < 16 or img.shape[2] < 16:
        raise UsageError(f"dehaze needs images of at least 16x16, got {img.shape[1]}x{img.shape[2]}")
    out = dehaze_image(gen, img)
    stem, _ = os.path.splitext(args.image)
    out_path = args.out or f"{stem}_dehazed.png"
    pngio.write_png(out_path, out)
    print(f"wrote {out_path}")
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradcheck_all(seed=args.seed if args.seed is not None else 0)
    print(format_gradcheck_reports(reports), end="")
    return 0 if all(r.passed for r in reports) else 2


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args, ("corpus", "eval_corpus", "out", "seed", "iterations", "batch_size"))
    if not cfg.corpus or not cfg.eval_corpus:
        raise UsageError("ablate requires --corpus and --eval-corpus")
    if not cfg.out:
        raise UsageError("ablate requires --out")
    hazy, clear = load_corpus_arrays(cfg.corpus)
    eval_hazy, eval_clear = load_corpus_arrays(cfg.eval_corpus)
    os.makedirs(cfg.out, exist_ok=True)
    echo_config(cfg, cfg.out)
    cells, reference = run_experiment_matrix(cfg, hazy, clear, eval_hazy, eval_clear)
    table = format_matrix_table(cells, reference)
    print(table, end="")
    with open(os.path.join(cfg.out, "ablation.txt"), "w") as fh:
        fh.write(table)
    records = [cell.to_record() for cell in cells]
    records.append({"mode": "hazy-input", "variant": "identity", "status": "reference", **reference})
    _write_jsonl(os.path.join(cfg.out, "ablation.jsonl"), records)
    return 0 if all(c.status == "ok" for c in cells) else 2


# ------------------------------------------------------------------ parser

def build_parser() -> _Parser:
    parser = _Parser(prog="hazegan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed for all randomness")

    p = sub.add_parser("synth", help="generate a paired hazy/clear toy corpus")
    common(p)
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--count", type=int, help="number of samples")
    p.add_argument("--size", type=int, help="square image size in pixels")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose", help="write the LF/HF decomposition of an image")
    common(p)
    p.add_argument("image", help="input image path")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train a dehazing model")
    common(p)
    p.add_argument("--corpus", help="training corpus directory")
    p.add_argument("--eval-corpus", dest="eval_corpus", help="held-out corpus for final metrics")
    p.add_argument("--out", help="output directory (checkpoints, logs)")
    p.add_argument("--variant", help="full | lf-only | hf-only | plain-gan | no-gan")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a paired corpus")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", help="paired corpus directory")
    p.add_argument("--out", help="optional directory for metrics files")
    p.add_argument("--variant", help="assert the checkpoint was trained with this variant")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dehaze", help="dehaze a single image with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("image", help="input image path")
    p.add_argument("--out", help="output image path")
    p.add_argument("--variant", help="assert the checkpoint was trained with this variant")
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare all five modes")
    common(p)
    p.add_argument("--corpus", help="training corpus directory")
    p.add_argument("--eval-corpus", dest="eval_corpus", help="evaluation corpus directory")
    p.add_argument("--out", help="output directory for the comparison table")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
