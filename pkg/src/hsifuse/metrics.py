"""Quantitative quality metrics for a (ground truth, estimate) cube pair.

All metrics follow the 8-bit convention: values are scaled by 255 before
any error is computed, so RMSE numbers are directly comparable across
datasets normalized to [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import HsiCube
from .errors import MetricUndefinedError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


@dataclass(frozen=True)
class MetricsReport:
    """The standard metric set; ideal values are (+inf, 0, 0, 1, zeros)."""

    psnr_db: float
    sam_deg: float
    ergas: float
    ssim: float
    rmse_per_band: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "psnr_db": "inf" if math.isinf(self.psnr_db) else self.psnr_db,
            "sam_deg": self.sam_deg,
            "ergas": self.ergas,
            "ssim": self.ssim,
            "rmse_per_band": list(self.rmse_per_band),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MetricsReport":
        psnr_value = data["psnr_db"]
        return cls(
            psnr_db=math.inf if psnr_value == "inf" else float(psnr_value),
            sam_deg=float(data["sam_deg"]),
            ergas=float(data["ergas"]),
            ssim=float(data["ssim"]),
            rmse_per_band=tuple(float(v) for v in data["rmse_per_band"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_shapes(gt: HsiCube, est: HsiCube) -> None:
    if gt.shape != est.shape:
        raise ShapeError(f"cube shapes differ: {gt.shape} vs {est.shape}")


def rmse_per_band(gt: HsiCube, est: HsiCube) -> np.ndarray:
    """Per-band root mean squared error in 8-bit units:
    sqrt(mean((255*gt - 255*est)^2)) over the pixels of each band."""
    _check_shapes(gt, est)
    diff = DYNAMIC_RANGE * (gt.data.astype(np.float64) - est.data.astype(np.float64))
    return np.sqrt(np.mean(diff**2, axis=(1, 2)))


def psnr(gt: HsiCube, est: HsiCube) -> float:
    """Mean over bands of 20*log10(255 / rmse_band); +inf when any band
    matches exactly (and therefore when the cubes are identical)."""
    rmse = rmse_per_band(gt, est)
    if np.any(rmse == 0.0):
        return math.inf
    return float(np.mean(20.0 * np.log10(DYNAMIC_RANGE / rmse)))


def sam(gt: HsiCube, est: HsiCube) -> float:
    """Mean angle in degrees between ground-truth and estimated pixel
    spectra. Pixels where either spectrum has near-zero norm are excluded;
    if that removes every pixel the metric is undefined.

    The angle is evaluated through the chord identity
    2*arcsin(|u - v| / 2) on the normalized spectra, which equals
    arccos(<g, e> / (|g| |e|)) but stays accurate near zero angle (and is
    exactly zero for identical spectra).
    """
    _check_shapes(gt, est)
    g = gt.data.astype(np.float64).reshape(gt.bands, -1)
    e = est.data.astype(np.float64).reshape(est.bands, -1)
    norm_g = np.linalg.norm(g, axis=0)
    norm_e = np.linalg.norm(e, axis=0)
    keep = (norm_g >= 1e-8) & (norm_e >= 1e-8)
    if not keep.any():
        raise MetricUndefinedError("all pixel spectra have near-zero norm")
    unit_g = g[:, keep] / norm_g[keep]
    unit_e = e[:, keep] / norm_e[keep]
    chord = np.linalg.norm(unit_g - unit_e, axis=0)
    angles = np.degrees(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0)))
    return float(angles.mean())


def ergas(gt: HsiCube, est: HsiCube, scale: int) -> float:
    """Scale-normalized average relative RMSE:
    (100/scale) * sqrt(mean_b((rmse_b / mean_b)^2)) with 8-bit band means."""
    rmse = rmse_per_band(gt, est)
    means = DYNAMIC_RANGE * gt.data.astype(np.float64).mean(axis=(1, 2))
    if np.any(means < 1e-8):
        band = int(np.argmax(means < 1e-8))
        raise MetricUndefinedError(f"band {band} of the reference has near-zero mean")
    return float(100.0 / scale * np.sqrt(np.mean((rmse / means) ** 2)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(gt: HsiCube, est: HsiCube) -> float:
    """Per-band structural similarity with an 11x11 Gaussian window
    (sigma 1.5), K1=0.01, K2=0.03, dynamic range 255; averaged over all
    fully interior window positions, then over bands."""
    _check_shapes(gt, est)
    if gt.rows < SSIM_WINDOW or gt.cols < SSIM_WINDOW:
        raise ValueError(
            f"spatial dims must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {gt.rows}x{gt.cols}"
        )
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    x_all = DYNAMIC_RANGE * gt.data.astype(np.float64)
    y_all = DYNAMIC_RANGE * est.data.astype(np.float64)
    shape = (SSIM_WINDOW, SSIM_WINDOW)
    per_band = []
    for b in range(gt.bands):
        xw = np.lib.stride_tricks.sliding_window_view(x_all[b], shape)
        yw = np.lib.stride_tricks.sliding_window_view(y_all[b], shape)
        mu_x = np.einsum("ijkl,kl->ij", xw, window)
        mu_y = np.einsum("ijkl,kl->ij", yw, window)
        var_x = np.einsum("ijkl,ijkl,kl->ij", xw, xw, window) - mu_x**2
        var_y = np.einsum("ijkl,ijkl,kl->ij", yw, yw, window) - mu_y**2
        cov = np.einsum("ijkl,ijkl,kl->ij", xw, yw, window) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        )
        per_band.append(ssim_map.mean())
    return float(np.mean(per_band))


def evaluate(gt: HsiCube, est: HsiCube, scale: int) -> MetricsReport:
    """Assemble the full metric set for one cube pair."""
    return MetricsReport(
        psnr_db=psnr(gt, est),
        sam_deg=sam(gt, est),
        ergas=ergas(gt, est, scale),
        ssim=ssim(gt, est),
        rmse_per_band=tuple(float(v) for v in rmse_per_band(gt, est)),
    )
