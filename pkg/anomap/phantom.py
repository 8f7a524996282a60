"""
Deterministic synthetic brain phantoms.

A phantom is a centred ellipsoidal brain with smooth sinusoidal texture,
spherical lesions with exactly known extent, and a pseudo-reconstruction
(healthy volume plus noise) standing in for a generative model's output.

Every random draw comes from a Philox counter-based generator keyed by
(seed, stream), so outputs are a pure function of the spec on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import AnomapError, DimensionMismatchError, LesionPlacementError, ZeroDimensionError
from .logging_config import get_logger
from .models import Case, Dims, Mask3D, Spacing, Volume3D

log = get_logger(__name__)

# stream ids for independent random draws
_BACKGROUND = 1
_LESION = 2
_NOISE = 3
_DRIFT = 4
_PLACEMENT = 5

BRAIN_FRACTION = 0.8
TEXTURE_WAVES = 4


@dataclass(frozen=True)
class Lesion:
    center: tuple[float, float, float]  # (x, y, z) voxels
    radius: float
    intensity_offset: float = 0.3
    texture_amplitude: float = 0.0

    def __post_init__(self):
        if self.radius < 1:
            raise AnomapError(f"lesion radius must be >= 1, got {self.radius}")


@dataclass(frozen=True)
class PhantomSpec:
    dims: Dims = (96, 96, 50)
    seed: int = 42
    lesions: tuple[Lesion, ...] = ()
    texture_scale: float = 24.0  # wavelength of the background texture, voxels
    noise_level: float = 0.02
    recon_drift: float = 0.0
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ZeroDimensionError(f"phantom dims must be positive, got {self.dims}")
        if not 0 <= self.seed < 2**64:
            raise AnomapError(f"seed must fit in 64 bits, got {self.seed}")
        if self.noise_level < 0:
            raise AnomapError(f"noise_level must be >= 0, got {self.noise_level}")
        if self.recon_drift < 0:
            raise AnomapError(f"recon_drift must be >= 0, got {self.recon_drift}")
        if self.texture_scale <= 0:
            raise AnomapError(f"texture_scale must be positive, got {self.texture_scale}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "lesions", tuple(self.lesions))


@dataclass(frozen=True, eq=False)
class PhantomVolumes:
    healthy: Volume3D
    unhealthy: Volume3D
    gt: Mask3D
    brain: Mask3D
    rec: Volume3D


def _rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    key = np.array([seed, (stream << 32) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _grid(dims: Dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nx, ny, nz = dims
    z, y, x = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    return x, y, z


def brain_mask(spec: PhantomSpec) -> Mask3D:
    """Centred ellipsoid with semi-axes 0.8 * dims / 2."""
    x, y, z = _grid(spec.dims)
    r2 = np.zeros_like(x)
    for coord, n in zip((x, y, z), spec.dims):
        centre = (n - 1) / 2.0
        semi = BRAIN_FRACTION * n / 2.0
        r2 += ((coord - centre) / semi) ** 2
    return Mask3D(spec.dims, r2 <= 1.0, spec.spacing)


def sphere_mask(dims: Dims, center: tuple[float, float, float], radius: float) -> np.ndarray:
    """Voxels whose centre lies within radius of center (inclusive)."""
    x, y, z = _grid(dims)
    cx, cy, cz = center
    return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= radius**2


def _wave_field(rng: np.random.Generator, dims: Dims, wavelength: float, waves: int) -> np.ndarray:
    """Mean of plane cosines with random direction and phase, in [-1, 1]."""
    x, y, z = _grid(dims)
    field_ = np.zeros_like(x)
    for _ in range(waves):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        k = 2.0 * math.pi / (wavelength * rng.uniform(0.75, 1.25))
        phase = rng.uniform(0.0, 2.0 * math.pi)
        field_ += np.cos(k * (direction[0] * x + direction[1] * y + direction[2] * z) + phase)
    return field_ / waves


def generate_healthy(spec: PhantomSpec) -> tuple[Volume3D, Mask3D]:
    brain = brain_mask(spec)
    texture = _wave_field(_rng(spec.seed, _BACKGROUND), spec.dims, spec.texture_scale, TEXTURE_WAVES)
    data = np.where(brain.data, 0.5 + 0.4 * texture, 0.0)
    log.debug("healthy phantom dims=%s seed=%s brain voxels=%s", spec.dims, spec.seed, brain.count())
    return Volume3D(spec.dims, spec.spacing, data), brain


def _require_spec_dims(healthy: Volume3D, spec: PhantomSpec) -> None:
    if healthy.dims != spec.dims:
        raise DimensionMismatchError(f"healthy volume dims {healthy.dims} do not match phantom dims {spec.dims}")


def inject_lesions(healthy: Volume3D, spec: PhantomSpec) -> tuple[Volume3D, Mask3D]:
    """Add each lesion's offset and texture inside its sphere; gt is the union of spheres."""
    _require_spec_dims(healthy, spec)
    brain = brain_mask(spec)
    data = healthy.data.astype(np.float64)
    gt = np.zeros(data.shape, dtype=bool)
    for i, lesion in enumerate(spec.lesions):
        sphere = sphere_mask(spec.dims, lesion.center, lesion.radius)
        if not sphere.any():
            raise LesionPlacementError(i, f"centre {lesion.center} lies outside the grid")
        if (sphere & ~brain.data).any():
            raise LesionPlacementError(i, f"sphere at {lesion.center} r={lesion.radius} leaves the brain")
        texture = _rng(spec.seed, _LESION, i).uniform(-1.0, 1.0, size=int(sphere.sum()))
        data[sphere] += lesion.intensity_offset + lesion.texture_amplitude * texture
        gt |= sphere
    data[gt] = np.clip(data[gt], 0.0, 1.0)
    return Volume3D(spec.dims, spec.spacing, data), Mask3D(spec.dims, gt, spec.spacing)


def pseudo_reconstruct(healthy: Volume3D, spec: PhantomSpec) -> Volume3D:
    """Healthy volume plus in-brain Gaussian noise of std noise_level (and optional drift)."""
    _require_spec_dims(healthy, spec)
    if spec.noise_level == 0 and spec.recon_drift == 0:
        return healthy
    brain = brain_mask(spec).data
    data = healthy.data.astype(np.float64)
    perturb = np.zeros_like(data)
    if spec.noise_level > 0:
        perturb += _rng(spec.seed, _NOISE).normal(0.0, spec.noise_level, size=data.shape)
    if spec.recon_drift > 0:
        wavelength = 1.5 * max(spec.dims)
        perturb += spec.recon_drift * _wave_field(_rng(spec.seed, _DRIFT), spec.dims, wavelength, 1)
    data[brain] = np.clip(data[brain] + perturb[brain], 0.0, 1.0)
    return Volume3D(spec.dims, spec.spacing, data)


def generate(spec: PhantomSpec) -> PhantomVolumes:
    healthy, brain = generate_healthy(spec)
    unhealthy, gt = inject_lesions(healthy, spec)
    rec = pseudo_reconstruct(healthy, spec)
    return PhantomVolumes(healthy=healthy, unhealthy=unhealthy, gt=gt, brain=brain, rec=rec)


def _ball(radius: float) -> np.ndarray:
    r = int(math.ceil(radius))
    ax = np.arange(-r, r + 1)
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    return x**2 + y**2 + z**2 <= radius**2


def place_lesions(
    spec: PhantomSpec,
    count: int,
    radius: float,
    intensity_offset: float = 0.3,
    texture_amplitude: float = 0.0,
    max_tries: int = 1000,
) -> tuple[Lesion, ...]:
    """Draw non-overlapping lesion centres whose spheres fit inside the brain."""
    if count <= 0:
        return ()
    brain = brain_mask(spec).data
    valid = ndimage.binary_erosion(brain, structure=_ball(radius), border_value=0)
    candidates = np.argwhere(valid)  # rows of (z, y, x)
    if candidates.size == 0:
        raise LesionPlacementError(0, f"no room for a radius {radius} lesion in dims {spec.dims}")
    rng = _rng(spec.seed, _PLACEMENT)
    centres: list[tuple[float, float, float]] = []
    min_gap = 2.0 * radius + 2.0
    tries = 0
    while len(centres) < count:
        if tries >= max_tries:
            raise LesionPlacementError(len(centres), f"could not place {count} lesions of radius {radius}")
        tries += 1
        z, y, x = candidates[int(rng.integers(len(candidates)))]
        c = (float(x), float(y), float(z))
        if all(math.dist(c, other) >= min_gap for other in centres):
            centres.append(c)
    return tuple(Lesion(c, radius, intensity_offset, texture_amplitude) for c in centres)


def family_specs(
    base: PhantomSpec,
    cases: int,
    radius: float,
    intensity_offset: float = 0.3,
    texture_amplitude: float = 0.0,
    lesions_per_case: int = 2,
) -> list[tuple[str, str, PhantomSpec]]:
    """(volume_id, role, spec) per case; case i uses seed base.seed + i.

    Even indices validate, odd indices test.
    """
    if cases < 2:
        raise AnomapError(f"a family needs at least 2 cases for a val/test split, got {cases}")
    out = []
    for i in range(cases):
        spec = replace(base, seed=base.seed + i, lesions=())
        lesions = place_lesions(spec, lesions_per_case, radius, intensity_offset, texture_amplitude)
        out.append((f"case_{i:02d}", "val" if i % 2 == 0 else "test", replace(spec, lesions=lesions)))
    return out


def build_family(
    base: PhantomSpec,
    cases: int,
    radius: float,
    intensity_offset: float = 0.3,
    texture_amplitude: float = 0.0,
    lesions_per_case: int = 2,
) -> list[Case]:
    """Phantom cases sharing one lesion type, ready for sigma_sweep."""
    out: list[Case] = []
    for volume_id, role, spec in family_specs(
        base, cases, radius, intensity_offset, texture_amplitude, lesions_per_case
    ):
        vols = generate(spec)
        out.append(Case(volume_id, role, vols.gt, vols.brain, x=vols.unhealthy, rec=vols.rec))
    log.debug("built family cases=%s radius=%s offset=%s texture=%s", cases, radius, intensity_offset, texture_amplitude)
    return out
