"""
Run configuration: a flat key=value text file, parsed with python-dotenv.

Example:
    sigma_set=0.3,0.5,0.7,0.9,1.1,1.3,1.5,1.7
    median_kernel=5
    weight_mode=pervoxel
    seed=42

Unknown keys and malformed values raise ConfigError. Missing keys take the
defaults below.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from typing import Any, Callable

from dotenv import dotenv_values

from .errors import AnomapError, ConfigError
from .logging_config import get_logger
from .phantom import Lesion, PhantomSpec, place_lesions
from .pipeline import PostprocessConfig, ThresholdSearch
from .scoring import WEIGHT_MODES, SigmaSet, SsimConstants

log = get_logger(__name__)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"dims need three values, got {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_lesions(text: str) -> tuple[Lesion, ...]:
    """x:y:z:radius:offset:texture entries separated by ';'."""
    out = []
    for entry in (e.strip() for e in text.split(";")):
        if not entry:
            continue
        parts = [float(p) for p in entry.split(":")]
        if len(parts) != 6:
            raise ValueError(f"lesion entry needs 6 fields, got {entry!r}")
        x, y, z, radius, offset, texture = parts
        out.append(Lesion((x, y, z), radius, offset, texture))
    return tuple(out)


def _parse_weight_mode(text: str) -> str:
    mode = text.strip()
    if mode not in WEIGHT_MODES:
        raise ValueError(f"weight_mode must be one of {', '.join(WEIGHT_MODES)}")
    return mode


_PARSERS: dict[str, Callable[[str], Any]] = {
    "sigma_set": SigmaSet.parse,
    "k1": float,
    "k2": float,
    "dynamic_range": float,
    "median_kernel": int,
    "erosion_iterations": int,
    "min_component_size": int,
    "num_thresholds": int,
    "weight_mode": _parse_weight_mode,
    "median_first": _parse_bool,
    "seed": int,
    "dims": _parse_dims,
    "noise_level": float,
    "recon_drift": float,
    "texture_scale": float,
    "lesions": _parse_lesions,
    "lesion_radius": float,
    "lesion_offset": float,
    "lesion_texture": float,
    "lesions_per_case": int,
}


@dataclass(frozen=True)
class RunConfig:
    sigma_set: SigmaSet = SigmaSet()
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    median_kernel: int = 5
    erosion_iterations: int = 1
    min_component_size: int = 8
    num_thresholds: int = 100
    weight_mode: str = "pervoxel"
    median_first: bool = True
    seed: int = 42
    dims: tuple[int, int, int] = (96, 96, 50)
    noise_level: float = 0.02
    recon_drift: float = 0.0
    texture_scale: float = 24.0
    lesions: tuple[Lesion, ...] = ()
    lesion_radius: float = 4.0
    lesion_offset: float = 0.3
    lesion_texture: float = 0.0
    lesions_per_case: int = 2

    def __post_init__(self):
        # the derived objects carry the invariants
        try:
            self.constants()
            self.postprocess()
            self.search()
            self.base_spec()
        except AnomapError as e:
            raise ConfigError(str(e)) from e
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {', '.join(WEIGHT_MODES)}")
        if self.lesions_per_case < 0:
            raise ConfigError(f"lesions_per_case must be >= 0, got {self.lesions_per_case}")

    def sigmas(self) -> SigmaSet:
        return self.sigma_set

    def constants(self) -> SsimConstants:
        return SsimConstants(self.k1, self.k2, self.dynamic_range)

    def postprocess(self) -> PostprocessConfig:
        return PostprocessConfig(
            median_kernel=self.median_kernel,
            erosion_iterations=self.erosion_iterations,
            min_component_size=self.min_component_size,
            median_first=self.median_first,
        )

    def search(self) -> ThresholdSearch:
        return ThresholdSearch(self.num_thresholds)

    def base_spec(self, seed: int | None = None) -> PhantomSpec:
        """Phantom spec without lesions."""
        return PhantomSpec(
            dims=self.dims,
            seed=self.seed if seed is None else seed,
            texture_scale=self.texture_scale,
            noise_level=self.noise_level,
            recon_drift=self.recon_drift,
        )

    def phantom_spec(self, seed: int | None = None) -> PhantomSpec:
        """Phantom spec for one case; lesions are drawn at random unless listed explicitly."""
        spec = self.base_spec(seed)
        if self.lesions:
            return replace(spec, lesions=self.lesions)
        lesions = place_lesions(spec, self.lesions_per_case, self.lesion_radius, self.lesion_offset, self.lesion_texture)
        return replace(spec, lesions=lesions)

    def snapshot(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SigmaSet):
                out[f.name] = ",".join(f"{s:g}" for s in value)
            elif f.name == "dims":
                out[f.name] = ",".join(str(d) for d in value)
            elif f.name == "lesions":
                out[f.name] = ";".join(
                    ":".join(f"{v:g}" for v in (*les.center, les.radius, les.intensity_offset, les.texture_amplitude))
                    for les in value
                )
            else:
                out[f.name] = str(value).lower() if isinstance(value, bool) else str(value)
        return out


def parse_run_config(values: dict[str, str | None]) -> RunConfig:
    kwargs: dict[str, Any] = {}
    for key, raw in values.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        if raw is None or raw.strip() == "":
            if key == "lesions":
                continue
            raise ConfigError(f"config key {key!r} has no value")
        try:
            kwargs[key] = _PARSERS[key](raw)
        except ValueError as e:
            raise ConfigError(f"config key {key!r}: {e}") from e
    return RunConfig(**kwargs)


def load_run_config(path: str | os.PathLike | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    cfg = parse_run_config(dict(values))
    log.debug("loaded config %s -> %s", path, cfg.snapshot())
    return cfg
