"""
Evaluation harness: score -> post-process -> validation threshold -> test Dice,
for every single-sigma SSIM score, the SSIM ensemble and the l1 baseline.

Each method gets its own best validation threshold. Results are merged in
sigma order, then ssim-ens, then l1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import AnomapError, UndefinedDiceError
from .logging_config import get_logger
from .metrics import dice, pooled_dice
from .models import AnomalyMap, Case
from .parallel import ordered_map
from .pipeline import PostprocessConfig, ThresholdSearch, binarize, postprocess_map, select_threshold
from .scoring import (
    SigmaSet,
    SsimConstants,
    WeightMode,
    anomaly_from_ssim,
    l1_map,
    ssim_ens_from_maps,
    ssim_maps_volume,
)

log = get_logger(__name__)


@dataclass(frozen=True)
class MethodResult:
    method: str  # "ssim", "ssim-ens" or "l1"
    sigma: float | None
    threshold: float
    validation_dice: float
    dataset_dice: float
    per_volume_dice: tuple[tuple[str, float | None], ...]


@dataclass(frozen=True)
class EvalReport:
    results: tuple[MethodResult, ...]
    config: dict[str, Any] = field(default_factory=dict)

    def method(self, name: str) -> MethodResult:
        for r in self.results:
            if r.method == name:
                return r
        raise KeyError(name)

    @property
    def ensemble(self) -> MethodResult:
        return self.method("ssim-ens")

    @property
    def l1(self) -> MethodResult:
        return self.method("l1")

    @property
    def singles(self) -> tuple[MethodResult, ...]:
        return tuple(r for r in self.results if r.method == "ssim")

    @property
    def per_sigma_curve(self) -> list[tuple[float, float]]:
        return [(r.sigma, r.dataset_dice) for r in self.singles]

    @property
    def dataset_dice(self) -> float:
        return self.ensemble.dataset_dice

    @property
    def chosen_threshold(self) -> float:
        return self.ensemble.threshold

    @property
    def per_volume_dice(self) -> tuple[tuple[str, float | None], ...]:
        return self.ensemble.per_volume_dice

    def best_sigma(self) -> float:
        """Sigma with the highest test Dice; ties go to the smaller sigma."""
        best = max(r.dataset_dice for r in self.singles)
        return min(r.sigma for r in self.singles if r.dataset_dice == best)


def split_cases(cases: Sequence[Case]) -> tuple[list[int], list[int]]:
    val = [i for i, c in enumerate(cases) if c.role == "val"]
    test = [i for i, c in enumerate(cases) if c.role == "test"]
    if not val:
        raise AnomapError("split has no validation volumes")
    if not test:
        raise AnomapError("split has no test volumes")
    return val, test


def evaluate_method(
    method: str,
    sigma: float | None,
    maps: Sequence[AnomalyMap],
    cases: Sequence[Case],
    cfg: PostprocessConfig = PostprocessConfig(),
    search: ThresholdSearch = ThresholdSearch(),
) -> MethodResult:
    """Threshold on the validation cases, report Dice on the test cases."""
    if len(maps) != len(cases):
        raise AnomapError(f"{len(maps)} maps for {len(cases)} cases")
    val, test = split_cases(cases)
    post = [postprocess_map(m, c.brain, cfg) for m, c in zip(maps, cases)]
    choice = select_threshold(
        [post[i] for i in val],
        [cases[i].gt for i in val],
        search,
        cfg,
        brains=[cases[i].brain for i in val],
    )
    preds = [binarize(post[i], choice.threshold, cfg) for i in test]
    gts = [cases[i].gt for i in test]
    dataset = pooled_dice(preds, gts)
    per_volume: list[tuple[str, float | None]] = []
    for i, p, g in zip(test, preds, gts):
        try:
            per_volume.append((cases[i].volume_id, dice(p, g)))
        except UndefinedDiceError:
            per_volume.append((cases[i].volume_id, None))
    log.debug(
        "method=%s sigma=%s threshold=%.6g val_dice=%.4f test_dice=%.4f",
        method, sigma, choice.threshold, choice.dice, dataset,
    )
    return MethodResult(method, sigma, choice.threshold, choice.dice, dataset, tuple(per_volume))


def sigma_sweep(
    cases: Sequence[Case],
    sigmas: SigmaSet = SigmaSet(),
    constants: SsimConstants = SsimConstants(),
    cfg: PostprocessConfig = PostprocessConfig(),
    search: ThresholdSearch = ThresholdSearch(),
    weight_mode: WeightMode = "pervoxel",
    config: dict[str, Any] | None = None,
) -> EvalReport:
    """Dice per single sigma, for the ensemble over all sigmas, and for l1."""
    if not cases:
        raise AnomapError("no cases to evaluate")
    split_cases(cases)
    missing = [c.volume_id for c in cases if c.x is None]
    if missing:
        raise AnomapError(f"cases without input and reconstruction: {', '.join(missing)}")

    def ssim_for(sigma: float):
        return [ssim_maps_volume(c.x, c.rec, sigma, constants) for c in cases]

    per_sigma = ordered_map(ssim_for, list(sigmas))
    jobs: list[tuple[str, float | None, list[AnomalyMap]]] = []
    for sigma, ssims in zip(sigmas, per_sigma):
        jobs.append(("ssim", sigma, [anomaly_from_ssim(s) for s in ssims]))
    ens = [ssim_ens_from_maps([per_sigma[j][i] for j in range(len(sigmas))], weight_mode) for i in range(len(cases))]
    jobs.append(("ssim-ens", None, ens))
    jobs.append(("l1", None, [l1_map(c.x, c.rec) for c in cases]))

    results = ordered_map(lambda job: evaluate_method(job[0], job[1], job[2], cases, cfg, search), jobs)
    return EvalReport(tuple(results), dict(config or {}))
