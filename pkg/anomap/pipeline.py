"""
Post-processing and binarization of anomaly maps.

A raw map is median filtered and zeroed outside the eroded brain mask. It is
then thresholded and small connected components are dropped. The threshold is
the candidate with the best pooled Dice on the validation volumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AnomapError, KernelError, ThresholdSelectionError
from .imageops import erode_mask, median_filter_3d, remove_small_components
from .logging_config import get_logger
from .metrics import dice_from_counts, overlap_counts
from .models import AnomalyMap, Mask3D, require_same_dims
from .parallel import ordered_map
from .scoring import masked

log = get_logger(__name__)


@dataclass(frozen=True)
class PostprocessConfig:
    median_kernel: int = 5
    erosion_iterations: int = 1
    min_component_size: int = 8
    median_first: bool = True

    def __post_init__(self):
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise KernelError(f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if self.erosion_iterations < 0:
            raise AnomapError(f"erosion_iterations must be >= 0, got {self.erosion_iterations}")
        if self.min_component_size < 0:
            raise AnomapError(f"min_component_size must be >= 0, got {self.min_component_size}")


@dataclass(frozen=True)
class ThresholdSearch:
    num_candidates: int = 100

    def __post_init__(self):
        if self.num_candidates < 2:
            raise AnomapError(f"num_candidates must be >= 2, got {self.num_candidates}")


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    dice: float
    candidates: np.ndarray
    dices: np.ndarray


def postprocess_map(amap: AnomalyMap, brain: Mask3D, cfg: PostprocessConfig = PostprocessConfig()) -> AnomalyMap:
    require_same_dims(amap, brain)
    eroded = erode_mask(brain, cfg.erosion_iterations)
    if cfg.median_first:
        return masked(median_filter_3d(amap, cfg.median_kernel), eroded)
    return median_filter_3d(masked(amap, eroded), cfg.median_kernel)


def _binarize_data(data: np.ndarray, t: float, min_size: int, like: AnomalyMap) -> Mask3D:
    pred = Mask3D(like.dims, data > t, like.spacing)
    return remove_small_components(pred, min_size)


def binarize(amap: AnomalyMap, t: float, cfg: PostprocessConfig = PostprocessConfig()) -> Mask3D:
    """Voxels scoring strictly above t, minus components under the size floor."""
    if math.isnan(t):
        raise AnomapError("threshold is NaN")
    return _binarize_data(amap.data, t, cfg.min_component_size, amap)


def candidate_thresholds(
    maps: Sequence[AnomalyMap],
    search: ThresholdSearch = ThresholdSearch(),
    brains: Sequence[Mask3D] | None = None,
) -> np.ndarray:
    """Ascending, unique thresholds drawn from the pooled in-brain scores.

    If there are no more distinct scores than candidates, every distinct score
    is a candidate and the search is exhaustive.
    """
    if brains is None:
        pooled = np.concatenate([m.flat() for m in maps])
    else:
        pooled = np.concatenate([m.data[b.data] for m, b in zip(maps, brains)])
        if pooled.size == 0:
            pooled = np.concatenate([m.flat() for m in maps])
    distinct = np.unique(pooled)
    if distinct.size <= search.num_candidates:
        return distinct.astype(np.float64)
    qs = np.linspace(0.0, 1.0, search.num_candidates)
    return np.unique(np.quantile(pooled, qs, method="lower")).astype(np.float64)


def select_threshold(
    val_maps: Sequence[AnomalyMap],
    val_gts: Sequence[Mask3D],
    search: ThresholdSearch = ThresholdSearch(),
    cfg: PostprocessConfig = PostprocessConfig(),
    brains: Sequence[Mask3D] | None = None,
) -> ThresholdChoice:
    """Pick the candidate threshold with the highest pooled validation Dice.

    Ties go to the larger threshold.
    """
    if not val_maps:
        raise ThresholdSelectionError("validation set is empty")
    if len(val_maps) != len(val_gts) or (brains is not None and len(brains) != len(val_maps)):
        raise ThresholdSelectionError("validation maps, masks and brains differ in length")
    for i, (m, g) in enumerate(zip(val_maps, val_gts)):
        require_same_dims(m, g)
        if brains is not None:
            require_same_dims(m, brains[i])
    if sum(g.count() for g in val_gts) == 0:
        raise ThresholdSelectionError("validation ground truth is empty in every volume; Dice is undefined")

    candidates = candidate_thresholds(val_maps, search, brains)

    def pooled_at(t: float) -> float:
        inter = n_pred = n_gt = 0
        for m, g in zip(val_maps, val_gts):
            pred = _binarize_data(m.data, t, cfg.min_component_size, m)
            i, a, b = overlap_counts(pred.data, g.data)
            inter += i
            n_pred += a
            n_gt += b
        return dice_from_counts(inter, n_pred, n_gt)

    dices = np.asarray(ordered_map(pooled_at, candidates.tolist()), dtype=np.float64)
    best = dices.max()
    idx = int(np.flatnonzero(dices == best)[-1])
    choice = ThresholdChoice(float(candidates[idx]), float(best), candidates, dices)
    log.debug("select_threshold candidates=%s best t=%.6g dice=%.6g", len(candidates), choice.threshold, choice.dice)
    return choice
