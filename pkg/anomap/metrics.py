"""
Segmentation overlap metrics.

Dice is 2|A∩B| / (|A| + |B|). It is undefined when both masks are empty,
which raises instead of returning a perfect score.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import AnomapError, UndefinedDiceError
from .models import Mask3D, require_same_dims


def overlap_counts(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int]:
    """(|pred ∩ gt|, |pred|, |gt|) for two boolean arrays."""
    inter = int(np.count_nonzero(pred & gt))
    return inter, int(np.count_nonzero(pred)), int(np.count_nonzero(gt))


def dice_from_counts(inter: int, n_pred: int, n_gt: int) -> float:
    total = n_pred + n_gt
    if total == 0:
        raise UndefinedDiceError("Dice is undefined when both masks are empty")
    return 2.0 * inter / total


def dice(pred: Mask3D, gt: Mask3D) -> float:
    require_same_dims(pred, gt)
    return dice_from_counts(*overlap_counts(pred.data, gt.data))


def pooled_dice(preds: Sequence[Mask3D], gts: Sequence[Mask3D]) -> float:
    """Dice over the voxels of all volumes taken together."""
    if not preds or len(preds) != len(gts):
        raise AnomapError(f"need equal, non-empty lists, got {len(preds)} predictions and {len(gts)} masks")
    inter = n_pred = n_gt = 0
    for p, g in zip(preds, gts):
        require_same_dims(p, g)
        i, a, b = overlap_counts(p.data, g.data)
        inter += i
        n_pred += a
        n_gt += b
    return dice_from_counts(inter, n_pred, n_gt)
