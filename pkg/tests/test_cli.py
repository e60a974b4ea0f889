import json

import numpy as np
import pytest
from click.testing import CliRunner

from hsifuse.cli import main
from hsifuse.cube import load_cube, save_cube
from hsifuse.degradation import make_gaussian_srf, random_blob_cube
from hsifuse.metrics import MetricsReport
from hsifuse.networks import load_checkpoint


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    """A ground-truth scene, response CSV, and desk-sized experiment config."""
    gt = random_blob_cube(6, 16, 16, blobs=12, seed=5, sigma_range=(1.0, 3.0))
    save_cube(gt, tmp_path / "scene")
    srf = make_gaussian_srf(3, 6)
    lines = [",".join(repr(float(v)) for v in row) for row in srf.weights]
    (tmp_path / "srf.csv").write_text("\n".join(lines) + "\n")
    config = {
        "gt": "scene.hsc.json",
        "srf": "srf.csv",
        "out_dir": "out",
        "scale": 4,
        "widths": [4, 8],
        "train": {"pretrain_iters": 10, "warmup_iters": 5, "anneal_iters": 5, "seed": 3},
    }
    (tmp_path / "exp.json").write_text(json.dumps(config))
    return tmp_path


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


# -- simulate -------------------------------------------------------------------


def test_simulate_writes_artifacts(runner, workspace):
    out = workspace / "sim"
    result = runner.invoke(
        main,
        ["simulate", "--gt", str(workspace / "scene"), "--srf", str(workspace / "srf.csv"),
         "--scale", "4", "--out", str(out), "--seed", "1"],
    )
    assert result.exit_code == 0, result.output
    for name in ("lr_hsi.hsc.json", "lr_hsi.hsc.bin", "hr_msi.hsc.json", "hr_msi.hsc.bin", "manifest.json"):
        assert (out / name).is_file(), name
    manifest = read_manifest(out)
    assert manifest["schema_version"] == 1
    assert all((out / a).is_file() for a in manifest["artifacts"])
    y = load_cube(out / "lr_hsi")
    z = load_cube(out / "hr_msi")
    assert y.shape == (6, 4, 4)
    assert z.shape == (3, 16, 16)


def test_simulate_rejects_bad_scale(runner, workspace):
    result = runner.invoke(
        main,
        ["simulate", "--gt", str(workspace / "scene"), "--srf", str(workspace / "srf.csv"),
         "--scale", "0", "--out", str(workspace / "x")],
    )
    assert result.exit_code == 2
    assert "error:" in result.output


def test_simulate_deterministic(runner, workspace):
    args = ["simulate", "--gt", str(workspace / "scene"), "--srf", str(workspace / "srf.csv"),
            "--scale", "4", "--noise-snr", "30", "--seed", "7"]
    assert runner.invoke(main, args + ["--out", str(workspace / "s1")]).exit_code == 0
    assert runner.invoke(main, args + ["--out", str(workspace / "s2")]).exit_code == 0
    for name in ("lr_hsi.hsc.bin", "hr_msi.hsc.bin"):
        a = (workspace / "s1" / name).read_bytes()
        b = (workspace / "s2" / name).read_bytes()
        assert a == b, name


# -- run ------------------------------------------------------------------------


def test_run_blind_writes_artifacts(runner, workspace):
    result = runner.invoke(main, ["run", "--config", str(workspace / "exp.json")])
    assert result.exit_code == 0, result.output
    out = workspace / "out"
    for name in ("fused.hsc.json", "fused.hsc.bin", "history.csv", "checkpoint.ckpt", "manifest.json"):
        assert (out / name).is_file(), name
    fused = load_cube(out / "fused")
    assert fused.shape == (6, 16, 16)
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "phase,iter,lr,mm,cyc,ide,total"
    assert len(history) == 1 + 10 + 10  # header + pretrain + train


def test_run_no_cycle_zeroes_column(runner, workspace):
    result = runner.invoke(main, ["run", "--config", str(workspace / "exp.json"), "--no-cycle"])
    assert result.exit_code == 0, result.output
    rows = (workspace / "out" / "history.csv").read_text().splitlines()[1:]
    cyc = [float(line.split(",")[4]) for line in rows]
    assert all(v == 0.0 for v in cyc)


def test_run_noblind_checkpoint_carries_injected_operators(runner, workspace):
    kernel = np.full((4, 4), 1.0 / 16)
    (workspace / "psf.csv").write_text(
        "\n".join(",".join(repr(float(v)) for v in row) for row in kernel) + "\n"
    )
    result = runner.invoke(
        main,
        ["run", "--config", str(workspace / "exp.json"), "--mode", "noblind",
         "--psf", str(workspace / "psf.csv"), "--srf", str(workspace / "srf.csv")],
    )
    assert result.exit_code == 0, result.output
    model, manifest = load_checkpoint(workspace / "out" / "checkpoint.ckpt")
    assert manifest["frozen_degradation"] is True
    assert np.abs(model.psf_kernel().weights - kernel).max() < 1e-6
    srf = make_gaussian_srf(3, 6)
    assert np.abs(model.srf_matrix().weights - srf.weights).max() < 1e-6
    # non-blind skips pretraining
    phases = {line.split(",")[0] for line in (workspace / "out" / "history.csv").read_text().splitlines()[1:]}
    assert phases == {"train"}


def test_run_noblind_kernel_from_config_psf(runner, workspace):
    kernel = np.full((4, 4), 1.0 / 16)
    (workspace / "psf.csv").write_text(
        "\n".join(",".join(repr(float(v)) for v in row) for row in kernel) + "\n"
    )
    cfg = json.loads((workspace / "exp.json").read_text())
    cfg["psf"] = "psf.csv"
    cfg["mode"] = "noblind"
    cfg["out_dir"] = "out_cfg_psf"
    (workspace / "exp_psf.json").write_text(json.dumps(cfg))
    result = runner.invoke(main, ["run", "--config", str(workspace / "exp_psf.json")])
    assert result.exit_code == 0, result.output
    model, _ = load_checkpoint(workspace / "out_cfg_psf" / "checkpoint.ckpt")
    assert np.abs(model.psf_kernel().weights - kernel).max() < 1e-6


def test_run_baseline_mode(runner, workspace):
    result = runner.invoke(main, ["run", "--config", str(workspace / "exp.json"), "--mode", "baseline"])
    assert result.exit_code == 0, result.output
    fused = load_cube(workspace / "out" / "fused")
    assert fused.shape == (6, 16, 16)
    assert not (workspace / "out" / "checkpoint.ckpt").exists()


def test_run_bad_config_exits_2(runner, workspace):
    (workspace / "bad.json").write_text(json.dumps({"out_dir": "out"}))
    result = runner.invoke(main, ["run", "--config", str(workspace / "bad.json")])
    assert result.exit_code == 2


def test_run_mismatched_pair_exits_3(runner, workspace):
    y = random_blob_cube(6, 4, 4, blobs=3, seed=1)
    z = random_blob_cube(3, 16, 12, blobs=3, seed=2)  # row ratio 4, col ratio 3
    save_cube(y, workspace / "y")
    save_cube(z, workspace / "z")
    config = {
        "lr_hsi": "y.hsc.json",
        "hr_msi": "z.hsc.json",
        "out_dir": "out3",
        "scale": 4,
        "widths": [4, 8],
        "train": {"pretrain_iters": 1, "warmup_iters": 1, "anneal_iters": 1},
    }
    (workspace / "pair.json").write_text(json.dumps(config))
    result = runner.invoke(main, ["run", "--config", str(workspace / "pair.json")])
    assert result.exit_code == 3
    assert "error:" in result.output


def test_run_divergence_exits_4(runner, workspace):
    cfg = json.loads((workspace / "exp.json").read_text())
    cfg["train"]["max_lr"] = 1e18
    cfg["train"]["pretrain_iters"] = 0
    cfg["train"]["warmup_iters"] = 0
    cfg["train"]["anneal_iters"] = 50
    (workspace / "diverge.json").write_text(json.dumps(cfg))
    result = runner.invoke(main, ["run", "--config", str(workspace / "diverge.json")])
    assert result.exit_code == 4
    assert "last finite iteration" in result.output


# -- evaluate -------------------------------------------------------------------


def test_evaluate_identical_cubes(runner, workspace):
    report_path = workspace / "report.json"
    result = runner.invoke(
        main,
        ["evaluate", "--gt", str(workspace / "scene"), "--est", str(workspace / "scene"),
         "--scale", "4", "--out", str(report_path)],
    )
    assert result.exit_code == 0, result.output
    assert "PSNR=inf" in result.output
    assert "SAM=0.0000" in result.output
    report = MetricsReport.load(report_path)
    assert report.ssim == pytest.approx(1.0, abs=1e-9)


def test_evaluate_matches_library(runner, workspace):
    from hsifuse.metrics import evaluate as lib_evaluate

    est = random_blob_cube(6, 16, 16, blobs=9, seed=8)
    save_cube(est, workspace / "est")
    report_path = workspace / "r.json"
    result = runner.invoke(
        main,
        ["evaluate", "--gt", str(workspace / "scene"), "--est", str(workspace / "est"),
         "--scale", "4", "--out", str(report_path)],
    )
    assert result.exit_code == 0, result.output
    gt = load_cube(workspace / "scene")
    expected = lib_evaluate(gt, load_cube(workspace / "est"), 4)
    assert MetricsReport.load(report_path) == expected


def test_evaluate_shape_mismatch_exits_2(runner, workspace):
    small = random_blob_cube(6, 8, 8, blobs=3, seed=1)
    save_cube(small, workspace / "small")
    result = runner.invoke(
        main,
        ["evaluate", "--gt", str(workspace / "scene"), "--est", str(workspace / "small"),
         "--scale", "4", "--out", str(workspace / "r.json")],
    )
    assert result.exit_code == 2


def test_evaluate_deterministic_bytes(runner, workspace):
    args = ["evaluate", "--gt", str(workspace / "scene"), "--est", str(workspace / "scene"),
            "--scale", "4"]
    assert runner.invoke(main, args + ["--out", str(workspace / "r1.json")]).exit_code == 0
    assert runner.invoke(main, args + ["--out", str(workspace / "r2.json")]).exit_code == 0
    assert (workspace / "r1.json").read_bytes() == (workspace / "r2.json").read_bytes()


# -- report ---------------------------------------------------------------------


def make_report(path, rmse, psnr_db=30.0):
    payload = {
        "psnr_db": psnr_db,
        "sam_deg": 2.0,
        "ergas": 0.4,
        "ssim": 0.95,
        "rmse_per_band": rmse,
    }
    path.write_text(json.dumps(payload))


def test_report_outputs(runner, tmp_path):
    make_report(tmp_path / "a.json", [0.0, 0.0, 0.0])
    make_report(tmp_path / "b.json", [1.0, 2.0, 3.0])
    out = tmp_path / "rep"
    result = runner.invoke(
        main,
        ["report", "--reports", str(tmp_path / "a.json"), "--reports", str(tmp_path / "b.json"),
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    lines = (out / "rmse_per_band.csv").read_text().splitlines()
    assert lines[0] == "band,a,b"
    assert len(lines) == 4  # header + one row per band
    assert lines[1].split(",") == ["0", "0.0", "1.0"]
    table = (out / "metrics.csv").read_text().splitlines()
    assert table[0] == "name,psnr_db,sam_deg,ergas,ssim"
    assert len(table) == 3
    assert (out / "rmse_per_band.png").stat().st_size > 0


def test_report_band_mismatch_exits_2(runner, tmp_path):
    make_report(tmp_path / "a.json", [0.0, 0.0])
    make_report(tmp_path / "b.json", [1.0, 2.0, 3.0])
    result = runner.invoke(
        main,
        ["report", "--reports", str(tmp_path / "a.json"), "--reports", str(tmp_path / "b.json"),
         "--out", str(tmp_path / "rep")],
    )
    assert result.exit_code == 2
