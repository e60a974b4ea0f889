"""Command line interface: simulate, run, evaluate, report.

Exit codes: 0 success, 2 usage/config problems, 3 data/shape problems,
4 numerical divergence. Every failure prints a one-line diagnostic on
stderr. Commands are idempotent for identical inputs and seeds; only
manifest timestamps differ between repeat runs.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config, serialize_config
from .cube import load_cube, save_cube
from .degradation import load_psf_csv, load_srf_csv, make_block_average_kernel, simulate_pair
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    FormatError,
    FusionToolError,
    IntegrityError,
    MetricUndefinedError,
    ModeError,
    ShapeError,
)
from .metrics import MetricsReport, evaluate
from .networks import bicubic_baseline, save_checkpoint
from .training import derive_seed, run_fusion

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_DATA_ERRORS = (ShapeError, DataError, FormatError, IntegrityError, MetricUndefinedError)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(
    out_dir: Path,
    command: str,
    config_snapshot: dict,
    seed: int,
    artifacts: list[str],
    started: str,
) -> None:
    manifest = {
        "schema_version": 1,
        "command": command,
        "config": config_snapshot,
        "seed": seed,
        "started_utc": started,
        "finished_utc": _utc_now(),
        "artifacts": artifacts,
        "library_version": __version__,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Hyperspectral and multispectral image fusion toolkit."""


@main.command("simulate")
@click.option("--gt", "gt_path", required=True, help="Ground-truth cube (header path or stem).")
@click.option("--srf", "srf_path", required=True, help="Spectral response CSV.")
@click.option("--scale", required=True, type=int, help="Spatial downsampling ratio.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--noise-snr", "noise_snr_db", type=float, default=None, help="Per-cube SNR in dB.")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_simulate(gt_path, srf_path, scale, out_dir, noise_snr_db, seed) -> None:
    """Degrade a reference cube into a (low-res HSI, high-res MSI) pair."""
    started = _utc_now()
    try:
        if scale < 1:
            raise ConfigError(f"scale must be >= 1, got {scale}")
        gt = load_cube(gt_path)
        srf = load_srf_csv(srf_path)
        kernel = make_block_average_kernel(scale)
        y, z = simulate_pair(
            gt, kernel, srf, noise_snr_db=noise_snr_db, seed=derive_seed(seed, "noise")
        )
    except (FusionToolError, ValueError) as exc:
        _fail(EXIT_USAGE, str(exc))
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cube(y, out / "lr_hsi")
    save_cube(z, out / "hr_msi")
    snapshot = {
        "gt": str(Path(gt_path)),
        "srf": str(Path(srf_path)),
        "scale": scale,
        "noise_snr_db": noise_snr_db,
    }
    _write_manifest(
        out,
        "simulate",
        snapshot,
        seed,
        ["lr_hsi.hsc.json", "lr_hsi.hsc.bin", "hr_msi.hsc.json", "hr_msi.hsc.bin"],
        started,
    )
    click.echo(f"wrote simulated pair to {out}")


def _load_pair(cfg: ExperimentConfig):
    """Return (y, z) from the configured pair, simulating from ground truth
    when no precomputed pair is given."""
    if cfg.lr_hsi is not None and cfg.hr_msi is not None:
        return load_cube(cfg.lr_hsi), load_cube(cfg.hr_msi), None
    gt = load_cube(cfg.gt)
    srf = load_srf_csv(cfg.srf)
    kernel = make_block_average_kernel(cfg.scale)
    y, z = simulate_pair(
        gt,
        kernel,
        srf,
        noise_snr_db=cfg.noise_snr_db,
        seed=derive_seed(cfg.train.seed, "noise"),
    )
    return y, z, kernel


@main.command("run")
@click.option("--config", "config_path", required=True, help="Experiment config JSON.")
@click.option(
    "--mode",
    type=click.Choice(["blind", "noblind", "baseline"]),
    default=None,
    help="Override the configured mode; 'baseline' writes band-wise bicubic upsampling.",
)
@click.option("--no-cycle", is_flag=True, help="Drop the cycle-consistency term.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--psf", "psf_path", default=None, help="True blur kernel CSV (non-blind mode).")
@click.option("--srf", "srf_path", default=None, help="True response CSV (non-blind mode).")
def cmd_run(config_path, mode, no_cycle, seed, psf_path, srf_path) -> None:
    """Train the fusion model on one observation pair and write the fused
    cube, checkpoint, and history."""
    started = _utc_now()
    try:
        cfg = parse_config(config_path)
        overrides = {}
        if mode is not None and mode != "baseline":
            overrides["mode"] = mode
        if seed is not None:
            overrides["seed"] = seed
        if no_cycle:
            overrides["use_cycle"] = False
        train_cfg = replace(cfg.train, **overrides)
        effective_mode = mode or cfg.mode
    except (ConfigError, ModeError) as exc:
        _fail(EXIT_USAGE, str(exc))
        return

    try:
        y, z, sim_kernel = _load_pair(cfg)
    except (FusionToolError, ValueError) as exc:
        _fail(EXIT_DATA if isinstance(exc, _DATA_ERRORS) else EXIT_USAGE, str(exc))
        return

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    snapshot = serialize_config(cfg)
    snapshot["effective_mode"] = effective_mode
    snapshot["use_cycle"] = train_cfg.use_cycle

    if effective_mode == "baseline":
        try:
            fused = bicubic_baseline(y, cfg.scale)
        except (FusionToolError, ValueError) as exc:
            _fail(EXIT_DATA if isinstance(exc, _DATA_ERRORS) else EXIT_USAGE, str(exc))
            return
        save_cube(fused, out / "fused")
        _write_manifest(
            out, "run", snapshot, train_cfg.seed, ["fused.hsc.json", "fused.hsc.bin"], started
        )
        click.echo(f"wrote baseline fusion to {out}")
        return

    try:
        kernel = srf = None
        if effective_mode == "noblind":
            if psf_path is not None:
                kernel = load_psf_csv(psf_path)
            elif cfg.psf is not None:
                kernel = load_psf_csv(cfg.psf)
            elif sim_kernel is not None:
                kernel = sim_kernel
            else:
                raise ConfigError("non-blind mode needs --psf (or a ground-truth simulation config)")
            if srf_path is not None:
                srf = load_srf_csv(srf_path)
            elif cfg.srf is not None:
                srf = load_srf_csv(cfg.srf)
            else:
                raise ConfigError("non-blind mode needs --srf (or a config 'srf' entry)")
        fused, history, model = run_fusion(
            y,
            z,
            train_cfg,
            widths=cfg.widths,
            kernel=kernel,
            srf=srf,
            logit_init=cfg.logit_init,
        )
    except (ConfigError, ModeError) as exc:
        _fail(EXIT_USAGE, str(exc))
        return
    except DivergenceError as exc:
        _fail(EXIT_DIVERGED, f"{exc} (last finite iteration: {exc.last_finite_iteration})")
        return
    except (FusionToolError, ValueError) as exc:
        _fail(EXIT_DATA if isinstance(exc, _DATA_ERRORS) else EXIT_USAGE, str(exc))
        return

    save_cube(fused, out / "fused")
    history.to_csv(out / "history.csv")
    save_checkpoint(
        model,
        out / "checkpoint.ckpt",
        extra={"seed": train_cfg.seed, "mode": effective_mode, "use_cycle": train_cfg.use_cycle},
    )
    artifacts = [
        "fused.hsc.json",
        "fused.hsc.bin",
        "history.csv",
        "checkpoint.ckpt",
    ]
    _write_manifest(out, "run", snapshot, train_cfg.seed, artifacts, started)
    click.echo(f"wrote fusion artifacts to {out}")


@main.command("evaluate")
@click.option("--gt", "gt_path", required=True, help="Ground-truth cube.")
@click.option("--est", "est_path", required=True, help="Estimated cube.")
@click.option("--scale", required=True, type=int, help="Spatial ratio used for ERGAS.")
@click.option("--out", "out_path", required=True, help="Report JSON path.")
def cmd_evaluate(gt_path, est_path, scale, out_path) -> None:
    """Score an estimated cube against ground truth."""
    try:
        gt = load_cube(gt_path)
        est = load_cube(est_path)
        report = evaluate(gt, est, scale)
    except (FusionToolError, ValueError) as exc:
        _fail(EXIT_USAGE, str(exc))
        return
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    if gt.wavelengths_nm is not None:
        payload["wavelengths_nm"] = list(gt.wavelengths_nm)
    out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    psnr_text = "inf" if report.psnr_db == float("inf") else f"{report.psnr_db:.4f}"
    click.echo(
        f"PSNR={psnr_text} SAM={report.sam_deg:.4f} "
        f"ERGAS={report.ergas:.4f} SSIM={report.ssim:.4f}"
    )


@main.command("report")
@click.option(
    "--reports",
    "report_paths",
    required=True,
    multiple=True,
    help="One or more report JSON files (repeat the flag).",
)
@click.option("--out", "out_dir", required=True, help="Output directory.")
def cmd_report(report_paths, out_dir) -> None:
    """Combine reports into per-band RMSE curves and a comparison table."""
    try:
        names = []
        reports: list[MetricsReport] = []
        wavelength_lists = []
        for path in report_paths:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            reports.append(MetricsReport.from_json_dict(raw))
            names.append(Path(path).name.removesuffix(".json"))
            wavelength_lists.append(raw.get("wavelengths_nm"))
        band_counts = {len(r.rmse_per_band) for r in reports}
        if len(band_counts) != 1:
            raise ShapeError(f"reports disagree on band count: {sorted(band_counts)}")
    except (FusionToolError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail(EXIT_USAGE, str(exc))
        return

    bands = band_counts.pop()
    wavelengths = wavelength_lists[0]
    if any(w != wavelengths for w in wavelength_lists):
        wavelengths = None

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    header = ["band"] + (["wavelength_nm"] if wavelengths else []) + names
    lines = [",".join(header)]
    for b in range(bands):
        row = [str(b)]
        if wavelengths:
            row.append(f"{wavelengths[b]!r}")
        row.extend(f"{r.rmse_per_band[b]!r}" for r in reports)
        lines.append(",".join(row))
    (out / "rmse_per_band.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["name,psnr_db,sam_deg,ergas,ssim"]
    for name, r in zip(names, reports):
        psnr_text = "inf" if r.psnr_db == float("inf") else repr(r.psnr_db)
        lines.append(f"{name},{psnr_text},{r.sam_deg!r},{r.ergas!r},{r.ssim!r}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    x_axis = wavelengths if wavelengths else np.arange(bands)
    for name, r in zip(names, reports):
        ax.plot(x_axis, r.rmse_per_band, label=name)
    ax.set_xlabel("wavelength (nm)" if wavelengths else "band index")
    ax.set_ylabel("RMSE (8-bit)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "rmse_per_band.png", dpi=120)
    plt.close(fig)
    click.echo(f"wrote report artifacts to {out}")


if __name__ == "__main__":
    main()
