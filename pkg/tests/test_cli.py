import subprocess
import sys

import pytest

from cerfgan.cli import EXIT_CODES, main

SMALL = ["--train.total_epochs=1", "--train.iterations_per_epoch=2", "--variant.width=0.125", "--data.toy.n=16",
         "--output.checkpoint_every=1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_exit_code_table():
    assert EXIT_CODES["E_CONFIG"] == EXIT_CODES["E_USAGE"] == 2
    assert (EXIT_CODES["E_DATA"], EXIT_CODES["E_CHECKPOINT"], EXIT_CODES["E_DIVERGED"]) == (3, 4, 5)


def test_usage_errors(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and err.startswith("error[E_USAGE]:") and err.count("\n") == 1
    code, _, err = run(capsys, "make-toy", "stripes", 16, "x")
    assert code == 2 and "color-inversion" in err
    code, _, err = run(capsys, "report", "runs")
    assert code == 2 and "--params" in err


def test_config_error_exit(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("train:\n  momentum: 0.9\n")
    code, _, err = run(capsys, "train", p)
    assert code == 2 and "error[E_CONFIG]: " in err and "line 2" in err
    code, _, err = run(capsys, "train", "configs/toy.yaml", "--train.nope=1")
    assert code == 2 and "train.nope" in err


def test_missing_data_exit(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(f"data:\n  root: {tmp_path / 'nowhere'}\n")
    code, _, err = run(capsys, "train", p, "--run-dir", tmp_path / "run")
    assert code == 3 and err.startswith("error[E_DATA]")


def test_checkpoint_error_exit(capsys, tmp_path):
    (tmp_path / "x.png").write_bytes(b"")
    code, _, err = run(capsys, "translate", tmp_path, tmp_path / "x.png", "--target", "A", "--out", tmp_path / "o")
    assert code == 4 and err.startswith("error[E_CHECKPOINT]")


def test_make_toy_train_translate_report(capsys, tmp_path):
    code, out, _ = run(capsys, "make-toy", "shape-fill", 16, tmp_path / "toy", "--size", 64)
    assert code == 0
    assert len(list((tmp_path / "toy" / "A").glob("*.png"))) == 16

    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"data:\n  root: {tmp_path / 'toy'}\ntrain:\n  resolution: 64\nvariant:\n  n_down: 5\n")
    code, out, err = run(capsys, "train", cfg, "--run-dir", tmp_path / "run", *SMALL)
    assert code == 0, err
    run_dir = tmp_path / "run"
    assert (run_dir / "config.yaml").exists() and (run_dir / "metrics.csv").exists()

    ckpt = sorted((run_dir / "checkpoints").glob("step*"))[-1]
    src = tmp_path / "toy" / "A" / "00000.png"
    code, out, err = run(capsys, "translate", ckpt, src, "--target", "B", "--out", tmp_path / "tr")
    assert code == 0, err
    assert (tmp_path / "tr" / "00000_to_B.png").exists() and (tmp_path / "tr" / "00000_to_B.txt").exists()
    code, _, err = run(capsys, "translate", ckpt, src, "--target", "C", "--out", tmp_path / "tr")
    assert code == 2 and "E_DOMAIN" in err and "A, B" in err

    code, out, err = run(capsys, "report", run_dir, "--params", "--stability", "--out", tmp_path / "rep")
    assert code == 0, err
    assert (tmp_path / "rep" / "parameters.csv").read_text().startswith("model,part,parameters")
    assert (tmp_path / "rep" / "stability.png").exists()


def test_skip_depth_ablation(capsys, tmp_path):
    code, out, err = run(capsys, "ablate", "skip-depth", "configs/toy.yaml", "--out", tmp_path / "abl", *SMALL,
                         "--ablation.skip_depths=[1, 3]")
    assert code == 0, err
    assert (tmp_path / "abl" / "skip1_grid.png").exists() and (tmp_path / "abl" / "skip3_grid.png").exists()


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "cerfgan.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("train", "translate", "ablate", "report", "make-toy"):
        assert sub in res.stdout
