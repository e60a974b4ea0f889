"""Per-pair optimization: degradation pretraining followed by full training
under a one-cycle learning-rate schedule.

One iteration is one Adam step on the full observation pair. Blind runs
first estimate the degradation logits on the cross-degradation loss, then
keep refining them during full training; non-blind runs inject the known
operators and freeze them.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .cube import HsiCube
from .degradation import PsfKernel, SrfMatrix
from .errors import ConfigError, DivergenceError, FormatError, ModeError, ShapeError
from .losses import loss_pretrain, loss_total
from .networks import FusionModel, cube_to_tensor, fuse_pair, init_params, inject_degradation

MODES = ("blind", "noblind")


def derive_seed(master: int, label: str) -> int:
    """Fan a master seed out to a named consumer.

    Hash-based, so adding a consumer never perturbs the streams of existing
    ones."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults follow the published recipe
    (10k pretraining iterations at 1e-3, 10k warmup + 20k annealing with a
    0.01 peak learning rate)."""

    pretrain_iters: int = 10_000
    pretrain_lr: float = 1e-3
    warmup_iters: int = 10_000
    anneal_iters: int = 20_000
    max_lr: float = 0.01
    seed: int = 0
    mode: str = "blind"
    use_cycle: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("pretrain_iters", "warmup_iters", "anneal_iters", "seed"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("pretrain_lr", "max_lr", "adam_beta1", "adam_beta2", "adam_eps"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{name} must be a number, got {value!r}")
        for name in ("pretrain_iters", "warmup_iters", "anneal_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.max_lr <= 0 or self.pretrain_lr <= 0:
            raise ConfigError("learning rates must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError("adam_eps must be positive")
        if not isinstance(self.use_cycle, bool):
            raise ConfigError(f"use_cycle must be a boolean, got {self.use_cycle!r}")


@dataclass(frozen=True)
class HistoryRecord:
    phase: str  # "pretrain" | "train"
    iteration: int
    lr: float
    mm: float
    cyc: float
    ide: float
    total: float


@dataclass
class TrainHistory:
    """Per-iteration loss and learning-rate records across both phases."""

    records: list[HistoryRecord] = field(default_factory=list)

    def append(self, record: HistoryRecord) -> None:
        self.records.append(record)

    def phase(self, name: str) -> list[HistoryRecord]:
        return [r for r in self.records if r.phase == name]

    def extend(self, other: "TrainHistory") -> None:
        self.records.extend(other.records)

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, path: str | Path) -> None:
        """Write one row per iteration: phase,iter,lr,mm,cyc,ide,total."""
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        lines = ["phase,iter,lr,mm,cyc,ide,total"]
        for r in self.records:
            lines.append(
                f"{r.phase},{r.iteration},{r.lr!r},{r.mm!r},{r.cyc!r},{r.ide!r},{r.total!r}"
            )
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainHistory":
        history = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["phase", "iter", "lr", "mm", "cyc", "ide", "total"]:
                raise FormatError(f"{path}: unexpected history columns {reader.fieldnames}")
            for row in reader:
                history.append(
                    HistoryRecord(
                        phase=row["phase"],
                        iteration=int(row["iter"]),
                        lr=float(row["lr"]),
                        mm=float(row["mm"]),
                        cyc=float(row["cyc"]),
                        ide=float(row["ide"]),
                        total=float(row["total"]),
                    )
                )
        return history


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """One-cycle schedule: linear ramp from max_lr/25 to max_lr over the
    warmup, then cosine decay from max_lr to max_lr/1e4 over the annealing
    span. Continuous at the junction; the peak is hit exactly at
    ``iteration == warmup_iters``."""
    total = cfg.warmup_iters + cfg.anneal_iters
    if not 0 <= iteration < total:
        raise ValueError(f"iteration {iteration} outside schedule range [0, {total})")
    start = cfg.max_lr / 25.0
    if iteration < cfg.warmup_iters:
        return start + (cfg.max_lr - start) * iteration / cfg.warmup_iters
    final = cfg.max_lr / 1e4
    phase = (iteration - cfg.warmup_iters) / cfg.anneal_iters
    return final + (cfg.max_lr - final) * 0.5 * (1.0 + math.cos(math.pi * phase))


def _pair_tensors(model: FusionModel, y: HsiCube, z: HsiCube):
    if y.bands != model.hsi_bands:
        raise ShapeError(f"low-res cube has {y.bands} bands, model expects {model.hsi_bands}")
    if z.bands != model.msi_bands:
        raise ShapeError(f"high-res cube has {z.bands} bands, model expects {model.msi_bands}")
    if (z.rows, z.cols) != (y.rows * model.scale, y.cols * model.scale):
        raise ShapeError(
            f"pair sizes {y.rows}x{y.cols} and {z.rows}x{z.cols} are inconsistent "
            f"with scale {model.scale}"
        )
    dtype = model.psf_logits.dtype
    return cube_to_tensor(y, dtype), cube_to_tensor(z, dtype)


def pretrain(
    model: FusionModel, y: HsiCube, z: HsiCube, cfg: TrainConfig
) -> tuple[FusionModel, TrainHistory]:
    """Estimate the degradation logits on the cross-degradation loss.

    Runs ``pretrain_iters`` Adam steps at the fixed pretraining rate,
    updating only the blur and response logits. Blind mode only.
    """
    if cfg.mode != "blind":
        raise ModeError("pretraining is only defined in blind mode")
    y_t, z_t = _pair_tensors(model, y, z)
    history = TrainHistory()
    if cfg.pretrain_iters == 0:
        return model, history
    optimizer = torch.optim.Adam(
        [model.psf_logits, model.srf_logits],
        lr=cfg.pretrain_lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )
    for iteration in range(cfg.pretrain_iters):
        optimizer.zero_grad(set_to_none=True)
        loss = loss_pretrain(model, y_t, z_t)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise DivergenceError(
                f"non-finite pretraining loss at iteration {iteration}",
                last_finite_iteration=iteration - 1,
            )
        loss.backward()
        optimizer.step()
        history.append(
            HistoryRecord("pretrain", iteration, cfg.pretrain_lr, 0.0, 0.0, 0.0, value)
        )
    return model, history


def train(
    model: FusionModel, y: HsiCube, z: HsiCube, cfg: TrainConfig
) -> tuple[FusionModel, TrainHistory]:
    """Full training on the summed objective under the one-cycle schedule.

    In non-blind mode the degradation logits stay frozen; otherwise every
    parameter is optimized.
    """
    y_t, z_t = _pair_tensors(model, y, z)
    history = TrainHistory()
    total_iters = cfg.warmup_iters + cfg.anneal_iters
    if total_iters == 0:
        return model, history
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(
        trainable,
        lr=lr_at(0, cfg),
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )
    for iteration in range(total_iters):
        lr = lr_at(iteration, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad(set_to_none=True)
        total, breakdown = loss_total(model, y_t, z_t, use_cycle=cfg.use_cycle)
        if not math.isfinite(breakdown.total):
            raise DivergenceError(
                f"non-finite training loss at iteration {iteration}",
                last_finite_iteration=iteration - 1,
            )
        total.backward()
        optimizer.step()
        history.append(
            HistoryRecord(
                "train", iteration, lr, breakdown.mm, breakdown.cyc, breakdown.ide, breakdown.total
            )
        )
    return model, history


def run_fusion(
    y: HsiCube,
    z: HsiCube,
    cfg: TrainConfig,
    widths: tuple[int, ...],
    kernel: PsfKernel | None = None,
    srf: SrfMatrix | None = None,
    logit_init: str = "kaiming",
) -> tuple[HsiCube, TrainHistory, FusionModel]:
    """End-to-end fusion of one observation pair.

    Initializes the model from the derived init seed, runs pretraining
    (blind) or injects the supplied operators (non-blind), trains, and
    returns the fused cube with the history and final parameters.
    """
    if z.rows % y.rows or z.cols % y.cols:
        raise ShapeError(
            f"observation sizes {y.rows}x{y.cols} and {z.rows}x{z.cols} have no integer ratio"
        )
    scale = z.rows // y.rows
    if z.cols // y.cols != scale:
        raise ShapeError("row and column resolution ratios differ")
    model = init_params(
        hsi_bands=y.bands,
        msi_bands=z.bands,
        scale=scale,
        widths=tuple(widths),
        seed=derive_seed(cfg.seed, "init"),
        frozen_degradation=cfg.mode == "noblind",
        logit_init=logit_init,
    )
    history = TrainHistory()
    if cfg.mode == "noblind":
        if kernel is None or srf is None:
            raise ConfigError("non-blind mode requires the true kernel and response matrix")
        inject_degradation(model, kernel, srf)
    else:
        _, pre_history = pretrain(model, y, z, cfg)
        history.extend(pre_history)
    _, train_history = train(model, y, z, cfg)
    history.extend(train_history)
    fused = fuse_pair(model, y, z)
    return fused, history, model
