"""
Anomaly maps from an input volume and its healthy reconstruction.

Three scores are available:
- l1: per-voxel absolute residual.
- ssim:<sigma>: one minus the Gaussian-windowed SSIM at a single spread.
- ssim-ens: one minus a softmax(-SSIM)-weighted average of SSIM maps over a
  set of spreads, so scales that see a discrepancy dominate the score.

SSIM is computed per transverse slice and restacked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .errors import (
    AnomapError,
    DimensionMismatchError,
    EmptySigmaSetError,
    IntensityRangeError,
    KernelError,
)
from .imageops import GaussianKernel1D, gaussian_filter_2d, gaussian_kernel
from .logging_config import get_logger
from .models import AnomalyMap, Mask3D, Volume3D, require_same_dims
from .volgrid import extract_slice

log = get_logger(__name__)

WeightMode = Literal["pervoxel", "scalar", "uniform"]
WEIGHT_MODES: tuple[str, ...] = ("pervoxel", "scalar", "uniform")

DEFAULT_SIGMAS: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7)
RANGE_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SsimConstants:
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        for name in ("k1", "k2", "dynamic_range"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise AnomapError(f"{name} must be positive, got {value}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True)
class SigmaSet:
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        if not sigmas:
            raise EmptySigmaSetError("sigma set is empty")
        for s in sigmas:
            if not math.isfinite(s) or s <= 0:
                raise KernelError(f"sigma must be positive, got {s}")
        if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
            raise AnomapError(f"sigmas must be strictly increasing, got {sigmas}")
        object.__setattr__(self, "sigmas", sigmas)

    @classmethod
    def parse(cls, text: str) -> "SigmaSet":
        """Parse a comma list such as "0.3,0.5,0.7"."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        try:
            values = tuple(float(p) for p in parts)
        except ValueError:
            raise AnomapError(f"bad sigma list {text!r}") from None
        return cls(values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.sigmas)

    def __len__(self) -> int:
        return len(self.sigmas)


def _check_range(arr: np.ndarray, c: SsimConstants, what: str) -> None:
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -RANGE_TOLERANCE or hi > c.dynamic_range + RANGE_TOLERANCE:
        raise IntensityRangeError(
            f"{what} intensities span [{lo:.6g}, {hi:.6g}], expected [0, {c.dynamic_range:g}]"
        )


def l1_map(x: Volume3D, rec: Volume3D) -> AnomalyMap:
    require_same_dims(x, rec)
    return Volume3D(x.dims, x.spacing, np.abs(x.data - rec.data))


def _ssim_2d(x: np.ndarray, y: np.ndarray, k: GaussianKernel1D, c: SsimConstants) -> np.ndarray:
    mu_x = gaussian_filter_2d(x, k)
    mu_y = gaussian_filter_2d(y, k)
    var_x = gaussian_filter_2d(x * x, k) - mu_x * mu_x
    var_y = gaussian_filter_2d(y * y, k) - mu_y * mu_y
    cov = gaussian_filter_2d(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c.c1) * (2.0 * cov + c.c2)
    den = (mu_x * mu_x + mu_y * mu_y + c.c1) * (var_x + var_y + c.c2)
    return num / den


def ssim_map_2d(x: np.ndarray, y: np.ndarray, sigma: float, c: SsimConstants = SsimConstants()) -> np.ndarray:
    """Per-pixel SSIM of two (ny, nx) images with a Gaussian window of spread sigma."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"image shapes differ: {x.shape} vs {y.shape}")
    k = gaussian_kernel(sigma)
    _check_range(x, c, "x")
    _check_range(y, c, "y")
    return _ssim_2d(x, y, k, c)


def ssim_maps_volume(x: Volume3D, rec: Volume3D, sigma: float, c: SsimConstants = SsimConstants()) -> Volume3D:
    """Slice-by-slice SSIM, restacked into a volume of SSIM values."""
    require_same_dims(x, rec)
    k = gaussian_kernel(sigma)
    _check_range(x.data, c, "input")
    _check_range(rec.data, c, "reconstruction")
    out = np.empty(x.data.shape, dtype=np.float32)
    for z in range(x.dims[2]):
        xs = extract_slice(x, z).astype(np.float64)
        ys = extract_slice(rec, z).astype(np.float64)
        out[z] = _ssim_2d(xs, ys, k, c)
    log.debug("ssim volume dims=%s sigma=%s taps=%s", x.dims, sigma, len(k))
    return Volume3D(x.dims, x.spacing, out)


def anomaly_from_ssim(s: Volume3D) -> AnomalyMap:
    return Volume3D(s.dims, s.spacing, 1.0 - s.data.astype(np.float64))


def ssim_anomaly_map(x: Volume3D, rec: Volume3D, sigma: float, c: SsimConstants = SsimConstants()) -> AnomalyMap:
    return anomaly_from_ssim(ssim_maps_volume(x, rec, sigma, c))


def _softmax_neg(values: np.ndarray) -> np.ndarray:
    e = -values
    e = np.exp(e - e.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def ensemble_weights(stack: np.ndarray, mode: WeightMode = "pervoxel") -> np.ndarray:
    """Weights for a (n_sigma, nz, ny, nx) stack of SSIM values.

    pervoxel: softmax(-SSIM) at every voxel.
    scalar: softmax(-mean SSIM of the slice), one weight per scale and slice.
    uniform: 1/n everywhere.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 4 or stack.shape[0] == 0:
        raise EmptySigmaSetError(f"expected a non-empty (n, nz, ny, nx) stack, got {stack.shape}")
    if mode == "pervoxel":
        return _softmax_neg(stack)
    if mode == "scalar":
        per_slice = stack.mean(axis=(2, 3), keepdims=True)
        return np.broadcast_to(_softmax_neg(per_slice), stack.shape)
    if mode == "uniform":
        return np.full(stack.shape, 1.0 / stack.shape[0])
    raise AnomapError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")


def ssim_ens_from_maps(ssim_volumes: Sequence[Volume3D], mode: WeightMode = "pervoxel") -> AnomalyMap:
    """Combine precomputed per-sigma SSIM volumes into the ensemble score."""
    if not ssim_volumes:
        raise EmptySigmaSetError("no SSIM maps to combine")
    require_same_dims(*ssim_volumes)
    stack = np.stack([v.data.astype(np.float64) for v in ssim_volumes], axis=0)
    w = ensemble_weights(stack, mode)
    score = 1.0 - (w * stack).sum(axis=0)
    first = ssim_volumes[0]
    return Volume3D(first.dims, first.spacing, score)


def ssim_ens_map(
    x: Volume3D,
    rec: Volume3D,
    sigmas: SigmaSet | Iterable[float],
    c: SsimConstants = SsimConstants(),
    mode: WeightMode = "pervoxel",
) -> AnomalyMap:
    if not isinstance(sigmas, SigmaSet):
        sigmas = SigmaSet(tuple(sigmas))
    require_same_dims(x, rec)
    maps = [ssim_maps_volume(x, rec, s, c) for s in sigmas]
    log.debug("ssim-ens dims=%s sigmas=%s mode=%s", x.dims, sigmas.sigmas, mode)
    return ssim_ens_from_maps(maps, mode)


def masked(amap: AnomalyMap, brain: Mask3D) -> AnomalyMap:
    """Zero every score outside the brain mask."""
    require_same_dims(amap, brain)
    return Volume3D(amap.dims, amap.spacing, np.where(brain.data, amap.data, np.float32(0.0)))


@dataclass(frozen=True)
class ScoreMethod:
    kind: Literal["l1", "ssim", "ssim-ens"]
    sigma: float | None = None

    @classmethod
    def parse(cls, text: str) -> "ScoreMethod":
        text = text.strip()
        if text == "l1":
            return cls("l1")
        if text == "ssim-ens":
            return cls("ssim-ens")
        if text.startswith("ssim:"):
            try:
                sigma = float(text.split(":", 1)[1])
            except ValueError:
                raise AnomapError(f"bad sigma in method {text!r}") from None
            if not math.isfinite(sigma) or sigma <= 0:
                raise KernelError(f"sigma must be positive, got {sigma}")
            return cls("ssim", sigma)
        raise AnomapError(f"unknown method {text!r}; expected l1, ssim:<sigma> or ssim-ens")

    @property
    def label(self) -> str:
        return f"ssim:{self.sigma:g}" if self.kind == "ssim" else self.kind


def score_volume(
    method: ScoreMethod,
    x: Volume3D,
    rec: Volume3D,
    sigmas: SigmaSet = SigmaSet(),
    c: SsimConstants = SsimConstants(),
    mode: WeightMode = "pervoxel",
) -> AnomalyMap:
    if method.kind == "l1":
        return l1_map(x, rec)
    if method.kind == "ssim":
        return ssim_anomaly_map(x, rec, method.sigma, c)
    return ssim_ens_map(x, rec, sigmas, c, mode)
