"""
Numeric kernels: Gaussian windows, separable 2D Gaussian filtering, 3D median
filtering, binary erosion and connected-component labeling.

Borders use reflect padding (d c b a | a b c d) for the filters and zero
padding for erosion. Components use 26-connectivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import KernelError
from .logging_config import get_logger
from .models import Mask3D, Volume3D

log = get_logger(__name__)

_CUBE = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class GaussianKernel1D:
    sigma: float
    taps: np.ndarray
    radius: int

    def __len__(self) -> int:
        return len(self.taps)


def kernel_length(sigma: float) -> int:
    """Window size int(3.5*sigma + 0.5)*2 + 1, with int() truncating."""
    return int(3.5 * sigma + 0.5) * 2 + 1


def gaussian_kernel(sigma: float) -> GaussianKernel1D:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0:
        raise KernelError(f"sigma must be positive and finite, got {sigma}")
    length = kernel_length(sigma)
    radius = (length - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma**2))
    taps /= taps.sum()
    taps.flags.writeable = False
    return GaussianKernel1D(sigma=sigma, taps=taps, radius=radius)


def gaussian_filter_2d(img: np.ndarray, k: GaussianKernel1D) -> np.ndarray:
    """Separable Gaussian smoothing of an (ny, nx) image: rows first, then columns."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise KernelError(f"expected a non-empty 2D image, got shape {img.shape}")
    rows = ndimage.correlate1d(img, k.taps, axis=1, mode="reflect")
    return ndimage.correlate1d(rows, k.taps, axis=0, mode="reflect")


def _check_window(k: int) -> int:
    if int(k) != k or k < 1 or k % 2 == 0:
        raise KernelError(f"median window must be a positive odd integer, got {k}")
    return int(k)


def median_filter_3d(v: Volume3D, k: int) -> Volume3D:
    k = _check_window(k)
    if k == 1:
        return v
    out = ndimage.median_filter(v.data, size=k, mode="reflect")
    return Volume3D(v.dims, v.spacing, out)


def erode_mask(m: Mask3D, iterations: int) -> Mask3D:
    """Erode with the full 3x3x3 element; outside the grid counts as unset."""
    if iterations < 0:
        raise KernelError(f"iterations must be >= 0, got {iterations}")
    # scipy treats iterations < 1 as "until stable"
    if iterations == 0 or m.count() == 0:
        return m
    out = ndimage.binary_erosion(m.data, structure=_CUBE, iterations=int(iterations), border_value=0)
    return Mask3D(m.dims, out, m.spacing)


@dataclass(frozen=True)
class ComponentLabels:
    labels: np.ndarray  # int32, (nz, ny, nx), 0 = background
    sizes: np.ndarray  # sizes[i] = voxel count of component i; sizes[0] = 0

    @property
    def count(self) -> int:
        return len(self.sizes) - 1


def _raster_order(labels: np.ndarray, n: int) -> np.ndarray:
    if n <= 1:
        return labels
    ids, first = np.unique(labels.reshape(-1), return_index=True)
    fg = ids > 0
    ids, first = ids[fg], first[fg]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[np.argsort(first)]] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labels]


def connected_components(m: Mask3D) -> ComponentLabels:
    """Label set voxels under 26-connectivity.

    Ids follow the raster order (x fastest, then y, then z) of each
    component's first voxel.
    """
    labels, n = ndimage.label(m.data, structure=_CUBE)
    labels = _raster_order(labels.astype(np.int32, copy=False), n)
    sizes = np.bincount(labels.reshape(-1), minlength=n + 1).astype(np.int64)
    sizes[0] = 0
    log.debug("connected_components dims=%s components=%s", m.dims, n)
    return ComponentLabels(labels=labels, sizes=sizes)


def remove_small_components(m: Mask3D, min_size: int) -> Mask3D:
    if min_size < 0:
        raise KernelError(f"min_size must be >= 0, got {min_size}")
    if min_size <= 1 or m.count() == 0:
        return m
    cc = connected_components(m)
    keep = cc.sizes >= min_size
    keep[0] = False
    return Mask3D(m.dims, keep[cc.labels], m.spacing)
