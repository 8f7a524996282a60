"""
MVOL volume container and slice helpers.

Layout (little-endian): magic "MVOL1\\0" (6 bytes), u16 version, 3 x u32 dims,
3 x f32 spacing, u8 kind (0 = float volume, 1 = mask), then nx*ny*nz samples
x-fastest, f32 for volumes and u8 in {0, 1} for masks.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    MaskPayloadError,
    MvolFormatError,
    NonFiniteSampleError,
    SliceIndexError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ZeroDimensionError,
)
from .logging_config import get_logger
from .models import Mask3D, Spacing, Volume3D

log = get_logger(__name__)

MAGIC = b"MVOL1\x00"
VERSION = 1
KIND_VOLUME = 0
KIND_MASK = 1

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S6"),
        ("version", "<u2"),
        ("dims", "<u4", (3,)),
        ("spacing", "<f4", (3,)),
        ("kind", "u1"),
    ]
)
HEADER_SIZE = HEADER_DTYPE.itemsize  # 33

_PAYLOAD_DTYPE = {KIND_VOLUME: np.dtype("<f4"), KIND_MASK: np.dtype("u1")}


def encode_mvol(item: Volume3D | Mask3D) -> bytes:
    kind = KIND_MASK if isinstance(item, Mask3D) else KIND_VOLUME
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["dims"] = item.dims
    header["spacing"] = item.spacing
    header["kind"] = kind
    payload = item.data.astype(_PAYLOAD_DTYPE[kind], copy=False)
    return header.tobytes() + payload.tobytes(order="C")


def decode_mvol(raw: bytes) -> Volume3D | Mask3D:
    if len(raw) < HEADER_SIZE:
        if not MAGIC.startswith(raw[:6]):
            raise BadMagicError(f"bad magic {raw[:6]!r}")
        raise TruncatedPayloadError(f"header needs {HEADER_SIZE} bytes, got {len(raw)}")
    # numpy strips trailing NULs from S6, so compare the raw prefix
    if raw[:6] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:6]!r}")
    header = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    version = int(header["version"])
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported MVOL version {version}")
    nx, ny, nz = (int(d) for d in header["dims"])
    if min(nx, ny, nz) == 0:
        raise ZeroDimensionError(f"zero dimension in header dims {(nx, ny, nz)}")
    kind = int(header["kind"])
    if kind not in _PAYLOAD_DTYPE:
        raise MvolFormatError(f"unknown kind {kind}")
    spacing: Spacing = tuple(float(s) for s in header["spacing"])  # type: ignore[assignment]

    dtype = _PAYLOAD_DTYPE[kind]
    n = nx * ny * nz
    expected = HEADER_SIZE + n * dtype.itemsize
    if len(raw) < expected:
        raise TruncatedPayloadError(f"payload needs {expected - HEADER_SIZE} bytes, got {len(raw) - HEADER_SIZE}")
    if len(raw) > expected:
        raise MvolFormatError(f"{len(raw) - expected} trailing bytes after payload")

    payload = np.frombuffer(raw, dtype=dtype, count=n, offset=HEADER_SIZE).reshape(nz, ny, nx)
    if kind == KIND_MASK:
        if payload.size and int(payload.max()) > 1:
            raise MaskPayloadError("mask payload holds values other than 0 and 1")
        return Mask3D((nx, ny, nz), payload.astype(bool), spacing)
    if not np.isfinite(payload).all():
        raise NonFiniteSampleError("payload contains NaN or Inf samples")
    return Volume3D((nx, ny, nz), spacing, payload)


def read_mvol(path: str | os.PathLike) -> Volume3D | Mask3D:
    """Read an MVOL file; float volumes come back as Volume3D, masks as Mask3D."""
    raw = Path(path).read_bytes()
    item = decode_mvol(raw)
    log.debug("read %s kind=%s dims=%s", path, type(item).__name__, item.dims)
    return item


def read_volume(path: str | os.PathLike) -> Volume3D:
    item = read_mvol(path)
    if not isinstance(item, Volume3D):
        raise MvolFormatError(f"{path}: expected a float volume, found a mask")
    return item


def read_mask(path: str | os.PathLike) -> Mask3D:
    item = read_mvol(path)
    if not isinstance(item, Mask3D):
        raise MvolFormatError(f"{path}: expected a mask, found a float volume")
    return item


def write_mvol(item: Volume3D | Mask3D, path: str | os.PathLike) -> None:
    Path(path).write_bytes(encode_mvol(item))
    log.debug("wrote %s kind=%s dims=%s", path, type(item).__name__, item.dims)


def mvol_size(dims: tuple[int, int, int], mask: bool = False) -> int:
    """Expected file size in bytes for the given dims."""
    nx, ny, nz = dims
    return HEADER_SIZE + nx * ny * nz * (1 if mask else 4)


def _check_z(v: Volume3D, z: int) -> None:
    nz = v.dims[2]
    if not 0 <= z < nz:
        raise SliceIndexError(f"slice {z} outside [0, {nz})")


def extract_slice(v: Volume3D, z: int) -> np.ndarray:
    """Transverse plane z as an (ny, nx) array indexed [y, x]."""
    _check_z(v, z)
    return v.data[z].copy()


def insert_slice(v: Volume3D, z: int, img: np.ndarray) -> Volume3D:
    _check_z(v, z)
    nx, ny, _ = v.dims
    img = np.asarray(img)
    if img.shape != (ny, nx):
        raise DimensionMismatchError(f"slice shape {img.shape} does not match ({ny}, {nx})")
    data = v.data.copy()
    data[z] = img
    return Volume3D(v.dims, v.spacing, data)


def stack_slices(images: Iterable[np.ndarray], spacing: Spacing = (1.0, 1.0, 1.0)) -> Volume3D:
    planes = [np.asarray(img, dtype=np.float32) for img in images]
    if not planes:
        raise ZeroDimensionError("no slices to stack")
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"slices have differing shapes {sorted(shapes)}")
    return Volume3D.from_array(np.stack(planes, axis=0), spacing)
