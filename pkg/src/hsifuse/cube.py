"""Hyperspectral cube type and its portable on-disk format.

A cube is a band-major ``(bands, rows, cols)`` float32 array with values in
[0, 1]. On disk it is a pair of files: a small UTF-8 JSON header
``<stem>.hsc.json`` describing shape and layout, and a raw payload
``<stem>.hsc.bin`` of 32-bit IEEE-754 little-endian floats in band-major
order (index = band*rows*cols + row*cols + col). The format is bit-exact
across platforms and trivially memory-mappable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, IntegrityError

HEADER_SUFFIX = ".hsc.json"
PAYLOAD_SUFFIX = ".hsc.bin"

_DTYPE_TAG = "f32le"
_LAYOUT_TAG = "band-row-col"


@dataclass(frozen=True)
class HsiCube:
    """An immutable radiance cube with values normalized to [0, 1].

    Attributes:
        data: float32 array of shape (bands, rows, cols), band-major.
        wavelengths_nm: optional strictly increasing band centers, one per band.
        name: free-form label carried through processing steps.
    """

    data: np.ndarray
    wavelengths_nm: tuple[float, ...] | None = None
    name: str = ""

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise DataError(f"cube data must be 3-D (bands, rows, cols), got {data.ndim}-D")
        if min(data.shape) < 1:
            raise DataError(f"cube dimensions must be positive, got {data.shape}")
        if not np.isfinite(data).all():
            raise DataError("cube contains non-finite values")
        lo = float(data.min())
        hi = float(data.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(f"cube values must lie in [0, 1], got [{lo:g}, {hi:g}]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.wavelengths_nm is not None:
            wl = tuple(float(w) for w in self.wavelengths_nm)
            if len(wl) != data.shape[0]:
                raise DataError(
                    f"wavelengths count {len(wl)} does not match {data.shape[0]} bands"
                )
            if any(b <= a for a, b in zip(wl, wl[1:])):
                raise DataError("wavelengths_nm must be strictly increasing")
            object.__setattr__(self, "wavelengths_nm", wl)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def band(self, index: int) -> np.ndarray:
        """Return one spectral band as a read-only (rows, cols) view."""
        if not 0 <= index < self.bands:
            raise IndexError(f"band {index} out of range [0, {self.bands})")
        return self.data[index]


def _split_stem(path: Path) -> Path:
    name = path.name
    if name.endswith(HEADER_SUFFIX):
        return path.with_name(name[: -len(HEADER_SUFFIX)])
    if name.endswith(PAYLOAD_SUFFIX):
        return path.with_name(name[: -len(PAYLOAD_SUFFIX)])
    return path


def save_cube(cube: HsiCube, path: str | Path) -> None:
    """Write ``cube`` as a header/payload pair.

    ``path`` may be the header path, the payload path, or a bare stem; the
    two sibling files are derived from it. Identical cubes produce identical
    bytes.
    """
    stem = _split_stem(Path(path))
    stem.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "bands": cube.bands,
        "rows": cube.rows,
        "cols": cube.cols,
        "dtype": _DTYPE_TAG,
        "layout": _LAYOUT_TAG,
        "payload": stem.name + PAYLOAD_SUFFIX,
        "normalized": True,
    }
    if cube.wavelengths_nm is not None:
        header["wavelengths_nm"] = list(cube.wavelengths_nm)
    if cube.name:
        header["name"] = cube.name
    header_path = stem.with_name(stem.name + HEADER_SUFFIX)
    payload_path = stem.with_name(stem.name + PAYLOAD_SUFFIX)
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    payload_path.write_bytes(cube.data.astype("<f4", copy=False).tobytes())


_HEADER_REQUIRED = {"bands", "rows", "cols", "dtype", "layout", "payload"}
_HEADER_OPTIONAL = {"wavelengths_nm", "name", "normalized"}


def load_cube(path: str | Path) -> HsiCube:
    """Load a cube from its header file (or stem).

    Pre-normalized payloads (header ``normalized`` true, the default) are
    clamped into [0, 1]. Otherwise the payload is min-max normalized per
    cube and the applied (min, max) is recorded in the returned cube's name.
    """
    stem = _split_stem(Path(path))
    header_path = stem.with_name(stem.name + HEADER_SUFFIX)
    if not header_path.is_file():
        raise FormatError(f"missing header file: {header_path}")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header {header_path}: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"header {header_path} is not a JSON object")
    missing = _HEADER_REQUIRED - header.keys()
    if missing:
        raise FormatError(f"header {header_path} missing keys: {sorted(missing)}")
    unknown = header.keys() - _HEADER_REQUIRED - _HEADER_OPTIONAL
    if unknown:
        raise FormatError(f"header {header_path} has unknown keys: {sorted(unknown)}")
    for key in ("bands", "rows", "cols"):
        value = header[key]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise FormatError(f"header field {key!r} must be a positive integer")
    if header["dtype"] != _DTYPE_TAG:
        raise FormatError(f"unsupported dtype tag {header['dtype']!r}")
    if header["layout"] != _LAYOUT_TAG:
        raise FormatError(f"unsupported layout tag {header['layout']!r}")

    bands, rows, cols = header["bands"], header["rows"], header["cols"]
    payload_path = header_path.parent / header["payload"]
    if not payload_path.is_file():
        raise IntegrityError(f"missing payload file: {payload_path}")
    raw = payload_path.read_bytes()
    expected = bands * rows * cols * 4
    if len(raw) != expected:
        raise IntegrityError(
            f"payload {payload_path} is {len(raw)} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(bands, rows, cols)
    if not np.isfinite(values).all():
        raise DataError(f"payload {payload_path} contains non-finite values")

    name = header.get("name", stem.name)
    if header.get("normalized", True):
        data = np.clip(values, 0.0, 1.0)
    else:
        vmin = float(values.min())
        vmax = float(values.max())
        if vmax > vmin:
            data = (values.astype(np.float64) - vmin) / (vmax - vmin)
        else:
            data = np.zeros_like(values, dtype=np.float64)
        name = f"{name} (scaled from [{vmin:g}, {vmax:g}])"
    wavelengths = header.get("wavelengths_nm")
    return HsiCube(
        data=np.asarray(data, dtype=np.float32),
        wavelengths_nm=tuple(wavelengths) if wavelengths is not None else None,
        name=name,
    )


def export_band_image(cube: HsiCube, band: int, path: str | Path) -> None:
    """Write one band as a binary PGM (P5) raster, maxval 255.

    Pixel values are round(255 * v) with halves rounded away from zero.
    """
    plane = cube.band(band)
    pixels = np.floor(plane.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(f"P5\n{cube.cols} {cube.rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
