"""Experiment configuration: JSON parsing, validation, and defaults.

Unknown keys are rejected outright so a typo in a long-running experiment
config fails immediately instead of silently falling back to defaults.
Relative paths are resolved against the config file's own directory; the
``HSIFUSE_OUT_ROOT`` environment variable re-roots a relative output
directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .training import MODES, TrainConfig

OUT_ROOT_ENV = "HSIFUSE_OUT_ROOT"

_TOP_KEYS = {
    "gt",
    "lr_hsi",
    "hr_msi",
    "srf",
    "psf",
    "out_dir",
    "scale",
    "msi_bands",
    "widths",
    "mode",
    "noise_snr_db",
    "logit_init",
    "train",
}
_TRAIN_KEY_MAP = {f.name: f.name for f in fields(TrainConfig) if f.name != "mode"}

DEFAULT_WIDTHS = (32, 64, 128, 128, 128)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one fusion experiment needs: data paths, the observation
    geometry, architecture widths, and the optimization settings."""

    out_dir: Path
    gt: Path | None = None
    lr_hsi: Path | None = None
    hr_msi: Path | None = None
    srf: Path | None = None
    psf: Path | None = None
    scale: int = 32
    msi_bands: int | None = None
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    mode: str = "blind"
    noise_snr_db: float | None = None
    logit_init: str = "kaiming"
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if self.scale < 2 or self.scale & (self.scale - 1):
            raise ConfigError(f"scale must be a power of two >= 2, got {self.scale}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigError(f"widths must all be >= 1, got {self.widths}")
        n_blocks = self.scale.bit_length() - 1
        if len(self.widths) < n_blocks:
            raise ConfigError(
                f"need at least log2(scale) = {n_blocks} widths, got {len(self.widths)}"
            )
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.logit_init not in ("kaiming", "uniform"):
            raise ConfigError(f"logit_init must be 'kaiming' or 'uniform', got {self.logit_init!r}")
        if self.msi_bands is not None and self.msi_bands < 1:
            raise ConfigError(f"msi_bands must be >= 1, got {self.msi_bands}")
        has_pair = self.lr_hsi is not None and self.hr_msi is not None
        has_gt = self.gt is not None and self.srf is not None
        if not (has_pair or has_gt):
            raise ConfigError(
                "config must name either a precomputed pair (lr_hsi + hr_msi) "
                "or a ground truth cube with a response CSV (gt + srf)"
            )


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def _resolve_out_dir(base: Path, value: str) -> Path:
    path = Path(value)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return (Path(root) / path).resolve()
    return path if path.is_absolute() else (base / path).resolve()


def config_from_dict(raw: dict, base_dir: Path) -> ExperimentConfig:
    """Build a validated config from a parsed JSON object."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = raw.keys() - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key: {sorted(unknown)[0]!r}")
    if "out_dir" not in raw:
        raise ConfigError("config must set 'out_dir'")

    train_raw = raw.get("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigError("'train' must be a JSON object")
    unknown = train_raw.keys() - _TRAIN_KEY_MAP.keys()
    if unknown:
        raise ConfigError(f"unknown config key: 'train.{sorted(unknown)[0]}'")
    mode = raw.get("mode", "blind")
    try:
        train_cfg = TrainConfig(mode=mode, **{k: train_raw[k] for k in train_raw})
    except TypeError as exc:
        raise ConfigError(f"invalid 'train' settings: {exc}") from exc

    def path_or_none(key: str) -> Path | None:
        value = raw.get(key)
        if value is None:
            return None
        if not isinstance(value, str) or not value:
            raise ConfigError(f"config key {key!r} must be a non-empty path string")
        return _resolve(base_dir, value)

    widths = raw.get("widths", list(DEFAULT_WIDTHS))
    if not isinstance(widths, list) or not all(
        isinstance(w, int) and not isinstance(w, bool) for w in widths
    ):
        raise ConfigError("'widths' must be a list of integers")

    noise = raw.get("noise_snr_db")
    if noise is not None and not isinstance(noise, (int, float)):
        raise ConfigError("'noise_snr_db' must be a number or null")

    scale = raw.get("scale", 32)
    if not isinstance(scale, int) or isinstance(scale, bool):
        raise ConfigError("'scale' must be an integer")

    msi_bands = raw.get("msi_bands")
    if msi_bands is not None and (not isinstance(msi_bands, int) or isinstance(msi_bands, bool)):
        raise ConfigError("'msi_bands' must be an integer")

    return ExperimentConfig(
        out_dir=_resolve_out_dir(base_dir, str(raw["out_dir"])),
        gt=path_or_none("gt"),
        lr_hsi=path_or_none("lr_hsi"),
        hr_msi=path_or_none("hr_msi"),
        srf=path_or_none("srf"),
        psf=path_or_none("psf"),
        scale=scale,
        msi_bands=msi_bands,
        widths=tuple(widths),
        mode=mode,
        noise_snr_db=float(noise) if noise is not None else None,
        logit_init=raw.get("logit_init", "kaiming"),
        train=train_cfg,
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, config_path.parent.resolve())


def serialize_config(cfg: ExperimentConfig) -> dict:
    """Dump a config back to the JSON shape accepted by
    :func:`config_from_dict`; parse(serialize(parse(x))) == parse(x)."""
    out: dict = {"out_dir": str(cfg.out_dir)}
    for key in ("gt", "lr_hsi", "hr_msi", "srf", "psf"):
        value = getattr(cfg, key)
        if value is not None:
            out[key] = str(value)
    out["scale"] = cfg.scale
    if cfg.msi_bands is not None:
        out["msi_bands"] = cfg.msi_bands
    out["widths"] = list(cfg.widths)
    out["mode"] = cfg.mode
    if cfg.noise_snr_db is not None:
        out["noise_snr_db"] = cfg.noise_snr_db
    out["logit_init"] = cfg.logit_init
    out["train"] = {
        "pretrain_iters": cfg.train.pretrain_iters,
        "pretrain_lr": cfg.train.pretrain_lr,
        "warmup_iters": cfg.train.warmup_iters,
        "anneal_iters": cfg.train.anneal_iters,
        "max_lr": cfg.train.max_lr,
        "seed": cfg.train.seed,
        "use_cycle": cfg.train.use_cycle,
        "adam_beta1": cfg.train.adam_beta1,
        "adam_beta2": cfg.train.adam_beta2,
        "adam_eps": cfg.train.adam_eps,
    }
    return out
