"""Linear observation operators relating a high-resolution cube to its
low-resolution observations.

Two operators cover the forward model: a shared blur kernel applied to
disjoint SxS blocks per band (spatial degradation, the PSF), and a
row-stochastic band-mixing matrix applied per pixel (spectral degradation,
the SRF). Both are used to simulate observation pairs from reference cubes
and serve as the fixed-math counterparts of the learnable modules in
:mod:`hsifuse.networks`.

Operator arithmetic accumulates in float64 and rounds the result once to
float32 so outputs agree with high-precision references to well under 1e-6.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import HsiCube
from .errors import DataError, FormatError, ShapeError

SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class PsfKernel:
    """A non-negative SxS blur kernel whose entries sum to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise DataError(f"kernel must be a square 2-D matrix, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise DataError("kernel contains non-finite weights")
        if w.min() < 0.0:
            raise DataError("kernel weights must be non-negative")
        total = float(w.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise DataError(f"kernel weights must sum to 1 within {SIMPLEX_TOL}, got {total!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def scale(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class SrfMatrix:
    """A spectral response matrix: one row per output band, each row a
    convex combination of the input bands."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or min(w.shape) < 1:
            raise DataError(f"response matrix must be 2-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise DataError("response matrix contains non-finite weights")
        if w.min() < 0.0:
            raise DataError("response weights must be non-negative")
        sums = w.sum(axis=1)
        bad = np.abs(sums - 1.0) > SIMPLEX_TOL
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(
                f"response row {row} sums to {sums[row]!r}, expected 1 within {SIMPLEX_TOL}"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def msi_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def hsi_bands(self) -> int:
        return self.weights.shape[1]


def spatial_degrade(x: HsiCube, kernel: PsfKernel) -> HsiCube:
    """Blur and decimate: each output pixel is the kernel-weighted sum of
    its disjoint SxS input block, per band.

    Rows and columns must be divisible by the kernel scale; there is no
    implicit padding or cropping.
    """
    s = kernel.scale
    if x.rows % s or x.cols % s:
        raise ShapeError(
            f"spatial size {x.rows}x{x.cols} not divisible by kernel scale {s}"
        )
    blocks = x.data.astype(np.float64).reshape(x.bands, x.rows // s, s, x.cols // s, s)
    out = np.einsum("bisjt,st->bij", blocks, kernel.weights)
    return HsiCube(
        data=np.clip(out, 0.0, 1.0).astype(np.float32),
        wavelengths_nm=x.wavelengths_nm,
        name=x.name,
    )


def spectral_degrade(x: HsiCube, srf: SrfMatrix) -> HsiCube:
    """Mix bands per pixel: output spectrum = srf.weights @ input spectrum."""
    if srf.hsi_bands != x.bands:
        raise ShapeError(
            f"response matrix expects {srf.hsi_bands} input bands, cube has {x.bands}"
        )
    out = np.einsum("kc,crw->krw", srf.weights, x.data.astype(np.float64))
    return HsiCube(data=np.clip(out, 0.0, 1.0).astype(np.float32), name=x.name)


def make_block_average_kernel(scale: int) -> PsfKernel:
    """Uniform kernel averaging each disjoint scale x scale block."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    return PsfKernel(np.full((scale, scale), 1.0 / (scale * scale)))


def _read_csv_rows(path: Path) -> list[list[float]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    rows: list[list[float]] = []
    for line_no, record in enumerate(csv.reader(text.splitlines()), start=1):
        if not record or (record[0].lstrip().startswith("#")):
            continue
        try:
            rows.append([float(cell) for cell in record])
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: non-numeric cell") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: ragged rows (expected {width} columns everywhere)")
    return rows


def load_srf_csv(path: str | Path) -> SrfMatrix:
    """Load a spectral response matrix from CSV, one output band per row.

    Rows are divided by their sums, so published (unnormalized) camera or
    satellite response curves can be used directly. A leading row starting
    with ``#`` is treated as a header and skipped.
    """
    raw = np.array(_read_csv_rows(Path(path)), dtype=np.float64)
    if raw.min() < 0.0:
        raise DataError(f"{path}: response entries must be non-negative")
    sums = raw.sum(axis=1)
    if (sums <= 0.0).any():
        row = int(np.argmax(sums <= 0.0))
        raise DataError(f"{path}: row {row} sums to zero")
    return SrfMatrix(raw / sums[:, None])


def load_psf_csv(path: str | Path) -> PsfKernel:
    """Load a blur kernel from CSV (S rows of S non-negative values).

    The matrix is divided by its grand total, mirroring the row
    normalization of :func:`load_srf_csv`.
    """
    raw = np.array(_read_csv_rows(Path(path)), dtype=np.float64)
    if raw.shape[0] != raw.shape[1]:
        raise FormatError(f"{path}: kernel must be square, got {raw.shape}")
    if raw.min() < 0.0:
        raise DataError(f"{path}: kernel entries must be non-negative")
    total = raw.sum()
    if total <= 0.0:
        raise DataError(f"{path}: kernel sums to zero")
    return PsfKernel(raw / total)


def simulate_pair(
    x: HsiCube,
    kernel: PsfKernel,
    srf: SrfMatrix,
    noise_snr_db: float | None = None,
    seed: int = 0,
) -> tuple[HsiCube, HsiCube]:
    """Produce the (low-res HSI, high-res MSI) observation pair for ``x``.

    With ``noise_snr_db`` set, independent white Gaussian noise is added to
    each observation, scaled so the per-cube SNR equals the requested value;
    outputs are clamped back into [0, 1]. Noiseless by default. Deterministic
    for a given seed.
    """
    y = spatial_degrade(x, kernel)
    z = spectral_degrade(x, srf)
    if noise_snr_db is None:
        return y, z
    factor = 10.0 ** (noise_snr_db / 10.0)
    noisy = []
    for stream, cube in ((0, y), (1, z)):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))
        clean = cube.data.astype(np.float64)
        sigma = float(np.sqrt(np.mean(clean**2) / factor))
        data = np.clip(clean + rng.normal(0.0, sigma, size=clean.shape), 0.0, 1.0)
        noisy.append(
            HsiCube(
                data=data.astype(np.float32),
                wavelengths_nm=cube.wavelengths_nm,
                name=cube.name,
            )
        )
    return noisy[0], noisy[1]


def make_gaussian_srf(msi_bands: int, hsi_bands: int, width: float | None = None) -> SrfMatrix:
    """Synthesize a camera-like response: overlapping Gaussian passbands
    spread evenly over the input bands, row-normalized."""
    if not 1 <= msi_bands <= hsi_bands:
        raise ValueError(
            f"need 1 <= msi_bands <= hsi_bands, got {msi_bands}, {hsi_bands}"
        )
    if width is None:
        width = hsi_bands / (2.0 * msi_bands)
    axis = np.arange(hsi_bands, dtype=np.float64)
    centers = (np.arange(msi_bands) + 0.5) * hsi_bands / msi_bands - 0.5
    rows = np.exp(-((axis[None, :] - centers[:, None]) ** 2) / (2.0 * width**2))
    return SrfMatrix(rows / rows.sum(axis=1, keepdims=True))


def random_blob_cube(
    bands: int,
    rows: int,
    cols: int,
    blobs: int = 10,
    seed: int = 0,
    value_range: tuple[float, float] = (0.05, 0.95),
    sigma_range: tuple[float, float] | None = None,
) -> HsiCube:
    """Generate a smooth synthetic scene: a sum of Gaussian blobs, each with
    its own spatial footprint and smooth spectral profile, rescaled into
    ``value_range``. Useful as ground truth for desk-scale experiments.

    ``sigma_range`` bounds the blob footprint radii in pixels; small radii
    give the sub-block texture that makes blur estimation well posed.
    """
    rng = np.random.default_rng(seed)
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    band_axis = np.arange(bands, dtype=np.float64)
    acc = np.zeros((bands, rows, cols), dtype=np.float64)
    if sigma_range is None:
        sigma_range = (min(rows, cols) / 16.0, min(rows, cols) / 5.0)
    for _ in range(blobs):
        center_r = rng.uniform(0, rows - 1)
        center_c = rng.uniform(0, cols - 1)
        sigma = rng.uniform(*sigma_range)
        footprint = np.exp(-((rr - center_r) ** 2 + (cc - center_c) ** 2) / (2 * sigma**2))
        band_center = rng.uniform(0, bands - 1)
        band_width = rng.uniform(bands / 8.0, bands / 2.0)
        amplitude = rng.uniform(0.3, 1.0)
        spectrum = amplitude * np.exp(-((band_axis - band_center) ** 2) / (2 * band_width**2))
        acc += spectrum[:, None, None] * footprint[None, :, :]
    lo, hi = value_range
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"value_range must satisfy 0 <= lo < hi <= 1, got {value_range}")
    span = acc.max() - acc.min()
    if span > 0:
        acc = (acc - acc.min()) / span
    else:
        acc = np.zeros_like(acc)
    data = lo + (hi - lo) * acc
    return HsiCube(data=data.astype(np.float32), name=f"blobs-{seed}")
