"""Learnable transformation modules and their forward evaluation.

Four modules cooperate: two constrained degradations (a softmax-simplex
blur kernel applied per band with stride = kernel size, and a row-softmax
band-mixing matrix applied per pixel) and two super-resolvers (a spatial
upsampler of bicubic x2 + 3x3 conv blocks with a 1x1 refining head, and a
pointwise 1x1 conv stack for spectral upsampling). All forwards are
differentiable; degradation logits can be frozen for the non-blind mode.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np
import torch
from torch import Tensor, nn

from .cube import HsiCube
from .degradation import PsfKernel, SrfMatrix
from .errors import ConfigError, FormatError, IntegrityError, ShapeError

# Catmull-Rom (a = -0.5) cubic weights for x2 upsampling, align-corners
# false: output samples sit 0.25 grid units left/right of the inputs.
# Even outputs weight taps [k-2, k-1, k, k+1]; odd outputs mirror them.
_CUBIC_EVEN = (-0.0234375, 0.2265625, 0.8671875, -0.0703125)
_CUBIC_ODD = tuple(reversed(_CUBIC_EVEN))


def bicubic_upsample_2x(x: Tensor) -> Tensor:
    """Double the two trailing spatial dimensions by separable bicubic
    interpolation (a = -0.5, mirror boundary). Spatial dims must be >= 3."""
    h, w = x.shape[-2], x.shape[-1]
    if h < 3 or w < 3:
        raise ShapeError(f"bicubic upsampling needs spatial dims >= 3, got {h}x{w}")
    flat = x.reshape(-1, 1, h, w) if x.dim() > 2 else x.reshape(1, 1, h, w)
    xp = nn.functional.pad(flat, (2, 2, 2, 2), mode="reflect")

    rows = xp.shape[-2] - 4
    even = sum(c * xp[..., j : j + rows, :] for j, c in enumerate(_CUBIC_EVEN))
    odd = sum(c * xp[..., j + 1 : j + 1 + rows, :] for j, c in enumerate(_CUBIC_ODD))
    xp = torch.stack((even, odd), dim=-2).reshape(*xp.shape[:-2], 2 * rows, xp.shape[-1])

    cols = xp.shape[-1] - 4
    even = sum(c * xp[..., j : j + cols] for j, c in enumerate(_CUBIC_EVEN))
    odd = sum(c * xp[..., j + 1 : j + 1 + cols] for j, c in enumerate(_CUBIC_ODD))
    out = torch.stack((even, odd), dim=-1).reshape(*xp.shape[:-1], 2 * cols)
    return out.reshape(*x.shape[:-2], 2 * h, 2 * w)


def cube_to_tensor(cube: HsiCube, dtype: torch.dtype = torch.float32) -> Tensor:
    """View a cube as a (bands, rows, cols) tensor."""
    return torch.from_numpy(np.array(cube.data)).to(dtype)


def tensor_to_cube(
    x: Tensor,
    name: str = "",
    wavelengths_nm: tuple[float, ...] | None = None,
) -> HsiCube:
    """Materialize a (bands, rows, cols) activation as a cube, clamping
    float round-off back into [0, 1]."""
    if x.dim() == 4 and x.shape[0] == 1:
        x = x[0]
    if x.dim() != 3:
        raise ShapeError(f"expected a (bands, rows, cols) activation, got shape {tuple(x.shape)}")
    data = x.detach().cpu().clamp(0.0, 1.0).numpy().astype(np.float32)
    return HsiCube(data=data, wavelengths_nm=wavelengths_nm, name=name)


def _as_batched(x: Tensor, channels: int | None, what: str) -> tuple[Tensor, bool]:
    if x.dim() == 3:
        x = x.unsqueeze(0)
        squeeze = True
    elif x.dim() == 4:
        squeeze = False
    else:
        raise ShapeError(f"{what}: expected 3-D or 4-D input, got {x.dim()}-D")
    if channels is not None and x.shape[1] != channels:
        raise ShapeError(f"{what}: expected {channels} bands, got {x.shape[1]}")
    return x, squeeze


class SpatialUpsampler(nn.Module):
    """log2(scale) blocks of [bicubic x2, 3x3 conv, instance norm, ReLU]
    followed by a two-layer 1x1 refining head with a sigmoid output."""

    def __init__(self, hsi_bands: int, scale: int, widths: tuple[int, ...]):
        super().__init__()
        n_blocks = scale.bit_length() - 1
        block_widths = widths[:n_blocks]
        self.hsi_bands = hsi_bands
        self.scale = scale
        self.convs = nn.ModuleList()
        self.norms = nn.ModuleList()
        in_ch = hsi_bands
        for width in block_widths:
            self.convs.append(nn.Conv2d(in_ch, width, kernel_size=3, padding=1))
            self.norms.append(nn.InstanceNorm2d(width, affine=True))
            in_ch = width
        refine_width = block_widths[-1]
        self.refine_conv = nn.Conv2d(in_ch, refine_width, kernel_size=1)
        self.refine_norm = nn.InstanceNorm2d(refine_width, affine=True)
        self.out_conv = nn.Conv2d(refine_width, hsi_bands, kernel_size=1)

    def forward(self, y: Tensor) -> Tensor:
        for conv, norm in zip(self.convs, self.norms):
            y = bicubic_upsample_2x(y)
            y = torch.relu(norm(conv(y)))
        y = torch.relu(self.refine_norm(self.refine_conv(y)))
        return torch.sigmoid(self.out_conv(y))


class SpectralUpsampler(nn.Module):
    """A stack of [1x1 conv, instance norm, ReLU] layers mapping the few
    observed bands back to the full spectrum, sigmoid output."""

    def __init__(self, msi_bands: int, hsi_bands: int, widths: tuple[int, ...]):
        super().__init__()
        self.msi_bands = msi_bands
        self.hsi_bands = hsi_bands
        self.convs = nn.ModuleList()
        self.norms = nn.ModuleList()
        in_ch = msi_bands
        for width in widths:
            self.convs.append(nn.Conv2d(in_ch, width, kernel_size=1))
            self.norms.append(nn.InstanceNorm2d(width, affine=True))
            in_ch = width
        self.out_conv = nn.Conv2d(in_ch, hsi_bands, kernel_size=1)

    def forward(self, z: Tensor) -> Tensor:
        for conv, norm in zip(self.convs, self.norms):
            z = torch.relu(norm(conv(z)))
        return torch.sigmoid(self.out_conv(z))


class FusionModel(nn.Module):
    """The complete parameter set: degradation logits plus both upsamplers.

    ``frozen_degradation`` marks the non-blind mode, where the blur kernel
    and response matrix are injected and excluded from optimization.
    """

    def __init__(
        self,
        hsi_bands: int,
        msi_bands: int,
        scale: int,
        widths: tuple[int, ...],
        frozen_degradation: bool = False,
    ):
        super().__init__()
        if scale < 2 or scale & (scale - 1):
            raise ConfigError(f"scale must be a power of two >= 2, got {scale}")
        if not widths:
            raise ConfigError("widths must be non-empty")
        if any(w < 1 for w in widths):
            raise ConfigError(f"widths must be positive, got {widths}")
        n_blocks = scale.bit_length() - 1
        if len(widths) < n_blocks:
            raise ConfigError(
                f"need at least log2(scale) = {n_blocks} widths for the spatial upsampler, got {len(widths)}"
            )
        if not 1 <= msi_bands < hsi_bands:
            raise ConfigError(
                f"need 1 <= msi_bands < hsi_bands, got {msi_bands}, {hsi_bands}"
            )
        self.hsi_bands = hsi_bands
        self.msi_bands = msi_bands
        self.scale = scale
        self.widths = tuple(int(w) for w in widths)
        self.psf_logits = nn.Parameter(torch.zeros(scale, scale))
        self.srf_logits = nn.Parameter(torch.zeros(msi_bands, hsi_bands))
        self.spatial_up = SpatialUpsampler(hsi_bands, scale, self.widths)
        self.spectral_up = SpectralUpsampler(msi_bands, hsi_bands, self.widths)
        self.frozen_degradation = frozen_degradation
        if frozen_degradation:
            self.psf_logits.requires_grad_(False)
            self.srf_logits.requires_grad_(False)

    # -- constrained parameters ------------------------------------------

    def psf_tensor(self) -> Tensor:
        """Softmax over the full logit grid: non-negative, sums to one."""
        return torch.softmax(self.psf_logits.reshape(-1), dim=0).reshape(
            self.scale, self.scale
        )

    def srf_tensor(self) -> Tensor:
        """Row-wise softmax: each output band mixes the inputs convexly."""
        return torch.softmax(self.srf_logits, dim=1)

    def psf_kernel(self) -> PsfKernel:
        logits = self.psf_logits.detach().cpu().double().reshape(-1)
        probs = torch.softmax(logits, dim=0).reshape(self.scale, self.scale)
        return PsfKernel(probs.numpy())

    def srf_matrix(self) -> SrfMatrix:
        logits = self.srf_logits.detach().cpu().double()
        return SrfMatrix(torch.softmax(logits, dim=1).numpy())

    # -- forward transforms ----------------------------------------------

    def degrade_spatial(self, x: Tensor) -> Tensor:
        """Kernel-weighted sum over disjoint SxS blocks; the shared kernel
        applies to any number of bands."""
        x, squeeze = _as_batched(x, None, "degrade_spatial")
        s = self.scale
        if x.shape[-2] % s or x.shape[-1] % s:
            raise ShapeError(
                f"degrade_spatial: spatial size {x.shape[-2]}x{x.shape[-1]} not divisible by {s}"
            )
        blocks = x.reshape(
            x.shape[0], x.shape[1], x.shape[-2] // s, s, x.shape[-1] // s, s
        )
        out = torch.einsum("bcisjt,st->bcij", blocks, self.psf_tensor().to(x.dtype))
        return out[0] if squeeze else out

    def degrade_spectral(self, x: Tensor) -> Tensor:
        """Per-pixel convex band mixing."""
        x, squeeze = _as_batched(x, self.hsi_bands, "degrade_spectral")
        out = torch.einsum("kc,bchw->bkhw", self.srf_tensor().to(x.dtype), x)
        return out[0] if squeeze else out

    def upsample_spatial(self, y: Tensor) -> Tensor:
        y, squeeze = _as_batched(y, self.hsi_bands, "upsample_spatial")
        out = self.spatial_up(y)
        return out[0] if squeeze else out

    def upsample_spectral(self, z: Tensor) -> Tensor:
        z, squeeze = _as_batched(z, self.msi_bands, "upsample_spectral")
        out = self.spectral_up(z)
        return out[0] if squeeze else out

    def fuse(self, y: Tensor, z: Tensor) -> Tensor:
        """Elementwise mean of the two super-resolved estimates."""
        a = self.upsample_spatial(y)
        b = self.upsample_spectral(z)
        if a.shape != b.shape:
            raise ShapeError(
                f"fusion branches disagree: spatial gives {tuple(a.shape)}, spectral gives {tuple(b.shape)}"
            )
        return 0.5 * (a + b)


def _kaiming_fill(weight: Tensor, generator: torch.Generator) -> None:
    # fan-in mode with the rectifier gain sqrt(2)
    fan_in = weight.shape[1] * (weight.shape[2] * weight.shape[3] if weight.dim() == 4 else 1)
    std = math.sqrt(2.0 / fan_in)
    with torch.no_grad():
        weight.normal_(0.0, std, generator=generator)


def init_params(
    hsi_bands: int,
    msi_bands: int,
    scale: int,
    widths: tuple[int, ...],
    seed: int,
    frozen_degradation: bool = False,
    logit_init: str = "kaiming",
) -> FusionModel:
    """Build a model with all weights drawn from the seeded initializer.

    Convolution weights are Kaiming-normal (fan-in, rectifier gain), biases
    zero, normalization affine pairs (1, 0). Degradation logits are
    Kaiming-normal by default; ``logit_init="uniform"`` zeroes them, which
    starts both softmax simplices at their centers.
    """
    if logit_init not in ("kaiming", "uniform"):
        raise ConfigError(f"logit_init must be 'kaiming' or 'uniform', got {logit_init!r}")
    model = FusionModel(hsi_bands, msi_bands, scale, tuple(widths), frozen_degradation)
    generator = torch.Generator().manual_seed(seed & 0xFFFFFFFF)
    with torch.no_grad():
        if logit_init == "kaiming":
            model.psf_logits.normal_(0.0, math.sqrt(2.0 / scale), generator=generator)
            model.srf_logits.normal_(0.0, math.sqrt(2.0 / hsi_bands), generator=generator)
        else:
            model.psf_logits.zero_()
            model.srf_logits.zero_()
        for module in model.modules():
            if isinstance(module, nn.Conv2d):
                _kaiming_fill(module.weight, generator)
                module.bias.zero_()
            elif isinstance(module, nn.InstanceNorm2d):
                module.weight.fill_(1.0)
                module.bias.zero_()
    return model


def inject_degradation(model: FusionModel, kernel: PsfKernel, srf: SrfMatrix) -> None:
    """Load known degradation operators into the logits and freeze them.

    Logits are set to log(weights floored at 1e-12); the softmax then
    reproduces the targets up to renormalization.
    """
    if kernel.scale != model.scale:
        raise ShapeError(f"kernel scale {kernel.scale} does not match model scale {model.scale}")
    if (srf.msi_bands, srf.hsi_bands) != (model.msi_bands, model.hsi_bands):
        raise ShapeError(
            f"response matrix is {srf.msi_bands}x{srf.hsi_bands}, model expects "
            f"{model.msi_bands}x{model.hsi_bands}"
        )
    with torch.no_grad():
        dtype = model.psf_logits.dtype
        model.psf_logits.copy_(
            torch.from_numpy(np.log(np.maximum(kernel.weights, 1e-12))).to(dtype)
        )
        model.srf_logits.copy_(
            torch.from_numpy(np.log(np.maximum(srf.weights, 1e-12))).to(dtype)
        )
    model.psf_logits.requires_grad_(False)
    model.srf_logits.requires_grad_(False)
    model.frozen_degradation = True


def fuse_pair(model: FusionModel, y: HsiCube, z: HsiCube) -> HsiCube:
    """Fuse an observation pair into a full-resolution cube."""
    dtype = model.psf_logits.dtype
    with torch.no_grad():
        fused = model.fuse(cube_to_tensor(y, dtype), cube_to_tensor(z, dtype))
    return tensor_to_cube(fused, name="fused", wavelengths_nm=y.wavelengths_nm)


def bicubic_baseline(y: HsiCube, scale: int) -> HsiCube:
    """Band-wise bicubic upsampling of the low-resolution cube to full
    resolution; the no-training reference for sanity comparisons."""
    if scale < 2 or scale & (scale - 1):
        raise ConfigError(f"scale must be a power of two >= 2, got {scale}")
    x = cube_to_tensor(y, torch.float64)
    for _ in range(scale.bit_length() - 1):
        x = bicubic_upsample_2x(x)
    return tensor_to_cube(x.clamp(0.0, 1.0), name=f"{y.name}-bicubic", wavelengths_nm=y.wavelengths_nm)


# -- checkpoint persistence ------------------------------------------------

_CHECKPOINT_MAGIC = b"HSFCKPT1"


def save_checkpoint(model: FusionModel, path: str | Path, extra: dict | None = None) -> None:
    """Write a single-file checkpoint: a JSON manifest (shapes, widths,
    mode, tensor table) followed by the concatenated little-endian float32
    parameter payloads in manifest order."""
    tensors = [(name, param) for name, param in model.named_parameters()]
    manifest = {
        "format": "fusion-checkpoint",
        "version": 1,
        "hsi_bands": model.hsi_bands,
        "msi_bands": model.msi_bands,
        "scale": model.scale,
        "widths": list(model.widths),
        "frozen_degradation": model.frozen_degradation,
        "tensors": [{"name": name, "shape": list(p.shape)} for name, p in tensors],
    }
    if extra:
        manifest["extra"] = extra
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, param in tensors:
            fh.write(param.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[FusionModel, dict]:
    """Rebuild a model from :func:`save_checkpoint` output."""
    raw = Path(path).read_bytes()
    if raw[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a fusion checkpoint")
    offset = len(_CHECKPOINT_MAGIC)
    (manifest_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        manifest = json.loads(raw[offset : offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint manifest") from exc
    offset += manifest_len
    model = FusionModel(
        hsi_bands=manifest["hsi_bands"],
        msi_bands=manifest["msi_bands"],
        scale=manifest["scale"],
        widths=tuple(manifest["widths"]),
        frozen_degradation=manifest["frozen_degradation"],
    )
    params = dict(model.named_parameters())
    for entry in manifest["tensors"]:
        param = params[entry["name"]]
        n_bytes = param.numel() * 4
        if offset + n_bytes > len(raw):
            raise IntegrityError(f"{path}: checkpoint payload truncated at {entry['name']}")
        values = np.frombuffer(raw, dtype="<f4", count=param.numel(), offset=offset)
        with torch.no_grad():
            param.copy_(torch.from_numpy(values.reshape(entry["shape"]).copy()))
        offset += n_bytes
    if offset != len(raw):
        raise IntegrityError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return model, manifest
