import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hazegan import pngio
from hazegan.cli import main, _write_jsonl
from hazegan.train import format_metrics_table


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def corpus_dirs(tmp_path_factory):
    """A 6-image train corpus and 3-image eval corpus at 16x16."""
    root = tmp_path_factory.mktemp("corpora")
    train_dir = str(root / "train")
    eval_dir = str(root / "eval")
    assert run_cli("synth", "--out", train_dir, "--count", "6", "--size", "16", "--seed", "3") == 0
    assert run_cli("synth", "--out", eval_dir, "--count", "3", "--size", "16", "--seed", "1003") == 0
    return train_dir, eval_dir


@pytest.fixture(scope="module")
def trained_run(corpus_dirs, tmp_path_factory):
    train_dir, eval_dir = corpus_dirs
    out = str(tmp_path_factory.mktemp("run"))
    code = run_cli("train", "--corpus", train_dir, "--eval-corpus", eval_dir,
                   "--out", out, "--seed", "5", "--iterations", "3",
                   "--batch-size", "2", "--variant", "full")
    assert code == 0
    return out


class TestSynth:
    def test_writes_triples_and_manifest(self, tmp_path):
        out = str(tmp_path / "c")
        assert run_cli("synth", "--out", out, "--count", "20", "--size", "64", "--seed", "7") == 0
        records = [json.loads(line) for line in open(os.path.join(out, "manifest.jsonl"))]
        assert len(records) == 20
        for sub in ("clear", "hazy", "trans"):
            assert len(os.listdir(os.path.join(out, sub))) == 20
        img = pngio.read_png(os.path.join(out, records[0]["hazy"]))
        assert img.shape == (3, 64, 64)

    def test_rerun_same_flags_identical_manifest(self, tmp_path):
        hashes = []
        for sub in ("a", "b"):
            out = str(tmp_path / sub)
            run_cli("synth", "--out", out, "--count", "4", "--size", "16", "--seed", "9")
            digest = hashlib.sha256(open(os.path.join(out, "manifest.jsonl"), "rb").read())
            hashes.append(digest.hexdigest())
        assert hashes[0] == hashes[1]

    def test_zero_count_is_usage_error(self, tmp_path, capsys):
        code = run_cli("synth", "--out", str(tmp_path / "x"), "--count", "0")
        assert code == 1
        assert "count" in capsys.readouterr().err

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sede = 7\n")
        code = run_cli("synth", "--out", str(tmp_path / "x"), "--config", str(cfg))
        assert code == 1
        assert "sede" in capsys.readouterr().err


class TestDecompose:
    def test_constant_image(self, tmp_path):
        img_path = str(tmp_path / "flat.png")
        pngio.write_png(img_path, np.full((3, 24, 24), 0.5, dtype=np.float32))
        assert run_cli("decompose", img_path) == 0
        lf = pngio.read_png(str(tmp_path / "flat_lf.png"))
        hf = pngio.read_png(str(tmp_path / "flat_hf.png"), gray=True)
        assert np.abs(lf - 0.5).max() <= 1 / 255
        assert np.abs(hf - 0.5).max() <= 1 / 255  # zero response remaps to mid-gray

    def test_impulse_stencil_visible(self, tmp_path):
        img = np.zeros((3, 21, 21), dtype=np.float32)
        img[:, 10, 10] = 1.0
        img_path = str(tmp_path / "dot.png")
        pngio.write_png(img_path, img)
        assert run_cli("decompose", img_path) == 0
        hf = pngio.read_png(str(tmp_path / "dot_hf.png"), gray=True)[0]
        assert hf[10, 10] < 0.1          # -4 maps to 0
        assert hf[9, 10] > 0.6           # +1 maps to 0.625
        assert abs(hf[0, 0] - 0.5) <= 1 / 255

    def test_output_dims_match_input(self, tmp_path, rng):
        img_path = str(tmp_path / "r.png")
        pngio.write_png(img_path, rng.uniform(0, 1, (3, 18, 30)).astype(np.float32))
        assert run_cli("decompose", img_path) == 0
        assert pngio.read_png(str(tmp_path / "r_lf.png")).shape == (3, 18, 30)
        assert pngio.read_png(str(tmp_path / "r_hf.png"), gray=True).shape == (1, 18, 30)

    def test_unreadable_image_is_runtime_error(self, tmp_path, capsys):
        path = tmp_path / "junk.png"
        path.write_bytes(b"nope")
        assert run_cli("decompose", str(path)) == 2
        assert "error" in capsys.readouterr().err


class TestTrainEvalDehaze:
    def test_train_writes_outputs(self, trained_run):
        for name in ("checkpoint_final.ckpt", "train_log.jsonl", "config.txt",
                     "metrics.txt", "metrics.jsonl"):
            assert os.path.exists(os.path.join(trained_run, name)), name

    def test_config_echo_reproduces_run(self, trained_run, tmp_path):
        out2 = str(tmp_path / "rerun")
        code = run_cli("train", "--config", os.path.join(trained_run, "config.txt"),
                       "--out", out2)
        assert code == 0
        a = open(os.path.join(trained_run, "checkpoint_final.ckpt"), "rb").read()
        b = open(os.path.join(out2, "checkpoint_final.ckpt"), "rb").read()
        assert a == b

    def test_eval_prints_table(self, trained_run, corpus_dirs, capsys):
        _, eval_dir = corpus_dirs
        code = run_cli("eval", "--checkpoint", os.path.join(trained_run, "checkpoint_final.ckpt"),
                       "--corpus", eval_dir)
        assert code == 0
        out = capsys.readouterr().out
        assert "PSNR" in out and "mean" in out

    def test_eval_variant_mismatch_fails(self, trained_run, corpus_dirs, capsys):
        _, eval_dir = corpus_dirs
        code = run_cli("eval", "--checkpoint", os.path.join(trained_run, "checkpoint_final.ckpt"),
                       "--corpus", eval_dir, "--variant", "no-gan")
        assert code == 2
        err = capsys.readouterr().err
        assert "full" in err and "no-gan" in err

    def test_dehaze_preserves_dims(self, trained_run, tmp_path, rng):
        img_path = str(tmp_path / "scene.png")
        pngio.write_png(img_path, rng.uniform(0, 1, (3, 20, 36)).astype(np.float32))
        out_path = str(tmp_path / "scene_out.png")
        code = run_cli("dehaze", "--checkpoint", os.path.join(trained_run, "checkpoint_final.ckpt"),
                       img_path, "--out", out_path)
        assert code == 0
        assert pngio.read_png(out_path).shape == (3, 20, 36)

    def test_missing_checkpoint_is_runtime_error(self, tmp_path, capsys):
        img_path = str(tmp_path / "i.png")
        pngio.write_png(img_path, np.zeros((3, 16, 16), dtype=np.float32))
        assert run_cli("dehaze", "--checkpoint", str(tmp_path / "nope.ckpt"), img_path) == 2


class TestAblate:
    def test_matrix_has_five_rows_and_reproduces(self, corpus_dirs, tmp_path):
        train_dir, eval_dir = corpus_dirs
        tables = []
        for sub in ("m1", "m2"):
            out = str(tmp_path / sub)
            code = run_cli("ablate", "--corpus", train_dir, "--eval-corpus", eval_dir,
                           "--out", out, "--seed", "2", "--iterations", "2",
                           "--batch-size", "2")
            assert code == 0
            tables.append(open(os.path.join(out, "ablation.txt"), "rb").read())
            records = [json.loads(line) for line in open(os.path.join(out, "ablation.jsonl"))]
            modes = [r["mode"] for r in records]
            assert modes == ["Baseline", "PlainGAN", "Fusion-HF", "Fusion-LF",
                             "Fusion-full", "hazy-input"]
            assert all(np.isfinite(r["psnr"]) for r in records[:5])
        assert tables[0] == tables[1]


class TestMetricsSentinel:
    def test_table_and_records_show_inf_for_identical_pairs(self, tmp_path):
        records = [{"index": 0, "psnr": float("inf"), "ssim": 1.0}]
        means = {"psnr": float("inf"), "ssim": 1.0}
        table = format_metrics_table(records, means)
        assert "inf" in table
        path = str(tmp_path / "m.jsonl")
        _write_jsonl(path, records)
        loaded = json.loads(open(path).read())
        assert loaded["psnr"] == "inf"


def test_gradcheck_command_exits_zero(capsys):
    assert run_cli("gradcheck", "--seed", "0") == 0
    assert "gradient checks passed" in capsys.readouterr().out


def test_module_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "hazegan", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("synth", "decompose", "train", "eval", "dehaze", "gradcheck", "ablate"):
        assert cmd in proc.stdout
