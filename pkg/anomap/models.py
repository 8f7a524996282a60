"""
Core volumetric data types shared by every module.

Samples are stored as numpy arrays of shape (nz, ny, nx) in C order, so the
flat buffer is x-fastest: voxel (x, y, z) sits at x + nx*(y + ny*z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AnomapError, DimensionMismatchError, NonFiniteSampleError, ZeroDimensionError

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]


def _check_dims(dims: Dims) -> Dims:
    if len(dims) != 3:
        raise ZeroDimensionError(f"expected 3 dims, got {dims!r}")
    nx, ny, nz = (int(d) for d in dims)
    if min(nx, ny, nz) <= 0:
        raise ZeroDimensionError(f"dims must be positive, got {dims!r}")
    return nx, ny, nz


def _spacing(spacing: Spacing) -> Spacing:
    # stored at f32 precision so file round-trips compare equal
    sx, sy, sz = (float(np.float32(s)) for s in spacing)
    return sx, sy, sz


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Volume3D:
    dims: Dims
    spacing: Spacing
    data: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        nx, ny, nz = dims
        arr = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if arr.size != nx * ny * nz:
            raise DimensionMismatchError(f"data has {arr.size} samples, dims {dims} need {nx * ny * nz}")
        arr = arr.reshape(nz, ny, nx)
        if not np.isfinite(arr).all():
            raise NonFiniteSampleError("volume contains NaN or Inf samples")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", _spacing(self.spacing))
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_array(cls, arr: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)) -> "Volume3D":
        """Build from an array shaped (nz, ny, nx)."""
        arr = np.asarray(arr)
        if arr.ndim != 3:
            raise DimensionMismatchError(f"expected a 3D array, got shape {arr.shape}")
        nz, ny, nx = arr.shape
        return cls((nx, ny, nz), spacing, arr)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def value(self, x: int, y: int, z: int) -> float:
        return float(self.data[z, y, x])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Mask3D:
    dims: Dims
    data: np.ndarray
    spacing: Spacing = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        dims = _check_dims(self.dims)
        nx, ny, nz = dims
        arr = np.array(self.data, dtype=bool, order="C", copy=True)
        if arr.size != nx * ny * nz:
            raise DimensionMismatchError(f"mask has {arr.size} samples, dims {dims} need {nx * ny * nz}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", _spacing(self.spacing))
        object.__setattr__(self, "data", _frozen(arr.reshape(nz, ny, nx)))

    @classmethod
    def from_array(cls, arr: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)) -> "Mask3D":
        arr = np.asarray(arr)
        if arr.ndim != 3:
            raise DimensionMismatchError(f"expected a 3D array, got shape {arr.shape}")
        nz, ny, nx = arr.shape
        return cls((nx, ny, nz), arr, spacing)

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask3D):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.data, other.data))


# Anomaly scores live in an ordinary float volume.
AnomalyMap = Volume3D


def require_same_dims(*items: Volume3D | Mask3D) -> Dims:
    dims = items[0].dims
    for item in items[1:]:
        if item.dims != dims:
            raise DimensionMismatchError(f"dims differ: {dims} vs {item.dims}")
    return dims


@dataclass(frozen=True, eq=False)
class Case:
    """One evaluated volume: lesion truth and brain mask, plus the input and
    reconstruction when scores are still to be computed."""

    volume_id: str
    role: str  # "val" or "test"
    gt: Mask3D
    brain: Mask3D
    x: Volume3D | None = None
    rec: Volume3D | None = None

    def __post_init__(self):
        if self.role not in ("val", "test"):
            raise AnomapError(f"role must be 'val' or 'test', got {self.role!r}")
        if (self.x is None) != (self.rec is None):
            raise AnomapError(f"{self.volume_id}: input and reconstruction must be given together")
        items = [self.gt, self.brain] + ([self.x, self.rec] if self.x is not None else [])
        require_same_dims(*items)
