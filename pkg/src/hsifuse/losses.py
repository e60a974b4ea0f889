"""Training objectives.

Every term is a mean absolute error on [0, 1] data, so contributions from
the differently sized observations stay commensurate. The full objective is
the unit-weighted sum of marginal matching, cycle consistency, and fusion
identity; degradation pretraining uses a separate cross-degradation term.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .errors import ShapeError
from .networks import FusionModel


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss components for one iteration; total = mm + cyc + ide."""

    mm: float
    cyc: float
    ide: float
    total: float


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference of two same-shaped activations."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_mean: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
    return (a - b).abs().mean()


def loss_marginal(model: FusionModel, y: Tensor, z: Tensor) -> Tensor:
    """Each cross-domain composition must reproduce the observation in the
    other domain: z vs spectral-degraded spatial upsampling of y, and y vs
    spatial-degraded spectral upsampling of z."""
    z_hat = model.degrade_spectral(model.upsample_spatial(y))
    y_hat = model.degrade_spatial(model.upsample_spectral(z))
    return l1_mean(z, z_hat) + l1_mean(y, y_hat)


def loss_cycle(model: FusionModel, y: Tensor, z: Tensor) -> Tensor:
    """A round trip through both domains must return the original image."""
    y_cycle = model.degrade_spatial(
        model.upsample_spectral(model.degrade_spectral(model.upsample_spatial(y)))
    )
    z_cycle = model.degrade_spectral(
        model.upsample_spatial(model.degrade_spatial(model.upsample_spectral(z)))
    )
    return l1_mean(y, y_cycle) + l1_mean(z, z_cycle)


def loss_identity(model: FusionModel, y: Tensor, z: Tensor) -> Tensor:
    """The two super-resolved estimates must agree. Touches only the
    upsampler parameters."""
    return l1_mean(model.upsample_spatial(y), model.upsample_spectral(z))


def loss_total(
    model: FusionModel, y: Tensor, z: Tensor, use_cycle: bool = True
) -> tuple[Tensor, LossBreakdown]:
    """Unit-weighted sum of the three terms.

    ``use_cycle=False`` drops the cycle term (the ablation switch). Returns
    the differentiable total plus a float breakdown for logging. The first
    upsampling of each observation is shared between the terms; each term
    equals its standalone counterpart.
    """
    x_spa = model.upsample_spatial(y)
    x_spe = model.upsample_spectral(z)
    z_hat = model.degrade_spectral(x_spa)
    y_hat = model.degrade_spatial(x_spe)
    mm = l1_mean(z, z_hat) + l1_mean(y, y_hat)
    ide = l1_mean(x_spa, x_spe)
    if use_cycle:
        y_cycle = model.degrade_spatial(model.upsample_spectral(z_hat))
        z_cycle = model.degrade_spectral(model.upsample_spatial(y_hat))
        cyc = l1_mean(y, y_cycle) + l1_mean(z, z_cycle)
        total = mm + cyc + ide
        cyc_value = float(cyc.detach())
    else:
        total = mm + ide
        cyc_value = 0.0
    return total, LossBreakdown(
        mm=float(mm.detach()),
        cyc=cyc_value,
        ide=float(ide.detach()),
        total=float(total.detach()),
    )


def loss_pretrain(model: FusionModel, y: Tensor, z: Tensor) -> Tensor:
    """Cross-degradation consistency: spectrally degrading y and spatially
    degrading z both land in the low-resolution MSI domain and must match.
    Touches only the degradation logits."""
    return l1_mean(model.degrade_spectral(y), model.degrade_spatial(z))
