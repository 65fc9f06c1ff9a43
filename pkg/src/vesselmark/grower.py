"""Iterative sphere-growing bifurcation localizer with vesselness fallback.

The force balance: an opposing force field is derived from the intensity
gradient; each iteration moves the sphere center by the mean force over the
voxels inside the sphere and grows the radius by a constant internal force
plus the mean radial force component. The center settles at the vessel's
widest point (the bifurcation) while the wall force stalls radial growth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from vesselmark import _kernels
from vesselmark.errors import (
    EmptySupportError,
    GeometryMismatchError,
    InvalidDiameterError,
    OutOfBoundsError,
    SeedBelowThresholdError,
)
from vesselmark.evaluation import PairType
from vesselmark.filters import (
    RegionGrowParams,
    VesselnessParams,
    frangi_vesselness,
    region_grow_mask,
    smoothed_gradient,
)
from vesselmark.volume import (
    ScalarVolume,
    VectorField,
    VolumeGeometry,
    as_point,
    extract_subvolume,
    resample_isotropic,
    threshold_normalize,
)

PATCH_SIDE_MM = 100.0
EPS_GRAD = 1e-6


class GrowSource(enum.Enum):
    ORIGINAL = "original"
    VESSELNESS_MASK = "vesselness_mask"
    MANUAL_MASK = "manual_mask"


class GrowOutcome(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    CAPPED = "capped"


@dataclass
class GrowConfig:
    """Sphere-growing parameters (lengths in voxels unless noted)."""

    lambda1: float = 0.2          # center step scale
    lambda2: float = 0.3          # radius step scale
    f_int: float = 0.1            # constant outward force, voxels/iteration
    iterations: int = 30
    init_radius: float = 0.5
    target_spacing: float = 0.7   # mm
    window: tuple = (-160.0, 240.0)  # HU
    sigma: float = 1.0
    max_radius: float = 20.0      # divergence bound
    max_center_drift: float = 15.0  # mm, divergence bound
    conv_window: int = 5          # equilibrium test lookback
    conv_tol_voxels: float = 0.5  # net motion below this counts as converged

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0 or self.f_int <= 0:
            raise ValueError("lambda1, lambda2 and f_int must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.init_radius <= 0:
            raise ValueError("init_radius must be > 0")
        self.window = (float(self.window[0]), float(self.window[1]))

    def to_items(self) -> dict:
        """Flat key-value form (strings), round-trippable via from_items."""
        return {
            "lambda1": repr(self.lambda1),
            "lambda2": repr(self.lambda2),
            "f_int": repr(self.f_int),
            "iterations": str(self.iterations),
            "init_radius": repr(self.init_radius),
            "target_spacing": repr(self.target_spacing),
            "window": f"{self.window[0]!r},{self.window[1]!r}",
            "sigma": repr(self.sigma),
            "max_radius": repr(self.max_radius),
            "max_center_drift": repr(self.max_center_drift),
            "conv_window": str(self.conv_window),
            "conv_tol_voxels": repr(self.conv_tol_voxels),
        }

    @classmethod
    def from_items(cls, items: dict) -> "GrowConfig":
        kwargs = {}
        for key, raw in items.items():
            if key == "window":
                lo, hi = raw.split(",")
                kwargs["window"] = (float(lo), float(hi))
            elif key in ("iterations", "conv_window"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class SphereState:
    """Sphere center (continuous voxel coordinates), radius (voxels), iteration."""

    center: tuple
    radius: float
    iteration: int

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center)


@dataclass
class GrowTrace:
    """Per-iteration sphere states plus provenance and outcome."""

    states: list
    source: GrowSource
    outcome: GrowOutcome
    geometry: VolumeGeometry

    def final_state(self) -> SphereState:
        return self.states[-1]

    def to_table(self, config: GrowConfig | None = None) -> str:
        """Tab-separated audit table: iteration, center in mm, radius in mm."""
        lines = []
        if config is not None:
            cfg_items = " ".join(f"{k}={v}" for k, v in config.to_items().items())
            lines.append(f"# {cfg_items}")
        lines.append(f"# source={self.source.value} outcome={self.outcome.value}")
        lines.append("iteration\tx_mm\ty_mm\tz_mm\tradius_mm\tsource")
        spacing = np.array(self.geometry.spacing)
        for s in self.states:
            w = self.geometry.world_of(s.center_array)
            r_mm = s.radius * float(spacing[0])
            lines.append(
                f"{s.iteration}\t{w[0]!r}\t{w[1]!r}\t{w[2]!r}\t{r_mm!r}\t{self.source.value}"
            )
        return "\n".join(lines) + "\n"


def opposing_force_field(vol: ScalarVolume, grad: VectorField) -> VectorField:
    """u = -(1 - I) * grad I / |grad I|, zero where |grad I| < 1e-6.

    `vol` must be normalized to [0, 1] and `grad` computed from it on the
    same grid; |u| <= 1 everywhere.
    """
    if vol.geometry != grad.geometry:
        raise GeometryMismatchError("volume and gradient grids differ")
    g = grad.vectors
    norm = np.sqrt(np.sum(g * g, axis=-1))
    scale = np.zeros_like(norm)
    ok = norm >= EPS_GRAD
    scale[ok] = -(1.0 - vol.values[ok]) / norm[ok]
    return VectorField(vol.geometry, g * scale[..., None])


def sphere_step(state: SphereState, u: VectorField, cfg: GrowConfig) -> SphereState:
    """One force-balance update of the sphere center and radius.

    The support set is the lattice points inside the sphere (and inside the
    volume); the center moves by lambda1 times the mean force, the radius by
    f_int plus lambda2 times the mean of the unit-radial force component.
    """
    cx, cy, cz = state.center
    sum_ux, sum_uy, sum_uz, sum_rad, count = _kernels.sphere_accumulate(
        u.vectors, cx, cy, cz, state.radius
    )
    if count == 0:
        raise EmptySupportError(
            f"no voxel inside sphere r={state.radius:.3f} at {state.center}"
        )
    mean_u = np.array([sum_ux, sum_uy, sum_uz]) / count
    mean_radial = sum_rad / count
    new_center = state.center_array + cfg.lambda1 * mean_u
    new_radius = state.radius + cfg.f_int + cfg.lambda2 * mean_radial
    if new_radius <= 0:
        raise EmptySupportError(
            f"sphere collapsed (radius {new_radius:.3f}) at iteration {state.iteration + 1}"
        )
    return SphereState(tuple(new_center), float(new_radius), state.iteration + 1)


def _equilibrated(states, cfg: GrowConfig) -> bool:
    w = min(cfg.conv_window, len(states) - 1)
    if w < 1:
        return False
    a, b = states[-1 - w], states[-1]
    net_c = float(np.linalg.norm(b.center_array - a.center_array))
    net_r = abs(b.radius - a.radius)
    return net_c < cfg.conv_tol_voxels and net_r < cfg.conv_tol_voxels


def wall_force_field(patch01: ScalarVolume, grad: VectorField) -> VectorField:
    """(1 - I) * grad I / |grad I|: the growth-opposing wall force.

    This is the published force with its sign corrected: the gradient of a
    bright vessel points inward at the wall, so the down-gradient form is
    outward there and inflates instead of confining. Interior voxels (I = 1)
    are force-free; the darker wall side pushes the sphere back inside.
    """
    eq1 = opposing_force_field(patch01, grad)
    return VectorField(patch01.geometry, -eq1.vectors)


def _grow_on_normalized(patch01: ScalarVolume, seed, cfg: GrowConfig,
                        source: GrowSource):
    """Run the iteration on a [0,1] patch; returns (world point, trace)."""
    g = patch01.geometry
    grad = smoothed_gradient(patch01, cfg.sigma)
    u = wall_force_field(patch01, grad)

    seed_vox = g.voxel_of(as_point(seed))
    start = np.clip(np.round(seed_vox), 0, np.array(g.dims) - 1)
    state = SphereState(tuple(start), cfg.init_radius, 0)
    states = [state]
    spacing = np.array(g.spacing)

    outcome = None
    for _ in range(cfg.iterations):
        state = sphere_step(state, u, cfg)
        states.append(state)
        drift_mm = float(np.linalg.norm((state.center_array - start) * spacing))
        if state.radius > cfg.max_radius or drift_mm > cfg.max_center_drift:
            outcome = GrowOutcome.DIVERGED
            break
    if outcome is None:
        outcome = (
            GrowOutcome.CONVERGED if _equilibrated(states, cfg) else GrowOutcome.CAPPED
        )

    trace = GrowTrace(states, source, outcome, g)
    point = g.world_of(states[-1].center_array)
    return point, trace


def prepare_patch(image: ScalarVolume, seed, cfg: GrowConfig) -> ScalarVolume:
    """Extract the working sub-volume: cube, isotropic resample, windowing."""
    patch = extract_subvolume(image, seed, PATCH_SIDE_MM)
    patch = resample_isotropic(patch, cfg.target_spacing)
    return threshold_normalize(patch, *cfg.window)


def refine_bifurcation(image: ScalarVolume, seed, cfg: GrowConfig | None = None):
    """Refine a seed point to the nearby vessel bifurcation center.

    Returns (refined world point, GrowTrace). Raises OutOfBoundsError for a
    seed outside the image; EmptySupportError propagates if the sphere loses
    all support mid-run.
    """
    cfg = cfg or GrowConfig()
    seed = as_point(seed)
    if not image.geometry.contains_world(seed):
        raise OutOfBoundsError(f"seed {seed} mm lies outside the image")
    patch01 = prepare_patch(image, seed, cfg)
    return _grow_on_normalized(patch01, seed, cfg, GrowSource.ORIGINAL)


def _binarized_patch(mask_image: ScalarVolume, seed, cfg: GrowConfig) -> ScalarVolume:
    patch = extract_subvolume(mask_image, seed, PATCH_SIDE_MM)
    patch = resample_isotropic(patch, cfg.target_spacing)
    return ScalarVolume(patch.geometry, (patch.values >= 0.5).astype(np.float64))


def refine_with_fallback(
    image: ScalarVolume,
    seed,
    cfg: GrowConfig | None = None,
    vesselness_params: VesselnessParams | None = None,
    region_params: RegionGrowParams | None = None,
    manual_mask: ScalarVolume | None = None,
):
    """Refine on the raw image, falling back to a vesselness-grown mask.

    If the raw-image run does not converge, a mask is region-grown from the
    seed on the vesselness image and the grower reruns on the binary mask; a
    supplied manual mask is the final tier. Returns the first converged
    (point, trace); otherwise the last attempt with its non-converged
    outcome (source vesselness_mask when no manual mask was given).
    """
    cfg = cfg or GrowConfig()
    vesselness_params = vesselness_params or VesselnessParams()
    region_params = region_params or RegionGrowParams()
    seed = as_point(seed)
    if not image.geometry.contains_world(seed):
        raise OutOfBoundsError(f"seed {seed} mm lies outside the image")

    windowed = prepare_patch(image, seed, cfg)
    result = None
    try:
        result = _grow_on_normalized(windowed, seed, cfg, GrowSource.ORIGINAL)
        if result[1].outcome is GrowOutcome.CONVERGED:
            return result
    except EmptySupportError:
        result = None

    vness = frangi_vesselness(windowed, vesselness_params)
    mask_result = None
    try:
        grown = region_grow_mask(vness, seed, region_params)
        mask_result = _grow_on_normalized(
            grown.as_volume(), seed, cfg, GrowSource.VESSELNESS_MASK
        )
        if mask_result[1].outcome is GrowOutcome.CONVERGED:
            return mask_result
    except (SeedBelowThresholdError, EmptySupportError):
        mask_result = None

    if manual_mask is not None:
        try:
            manual_result = _grow_on_normalized(
                _binarized_patch(manual_mask, seed, cfg), seed, cfg,
                GrowSource.MANUAL_MASK,
            )
            if manual_result[1].outcome is GrowOutcome.CONVERGED:
                return manual_result
            return manual_result
        except EmptySupportError:
            pass

    if mask_result is not None:
        return mask_result
    # both mask paths failed outright; report a diverged mask-sourced trace
    g = windowed.geometry
    start = np.clip(
        np.round(g.voxel_of(seed)), 0, np.array(g.dims) - 1
    )
    trace = GrowTrace(
        [SphereState(tuple(start), cfg.init_radius, 0)],
        GrowSource.VESSELNESS_MASK,
        GrowOutcome.DIVERGED,
        g,
    )
    return g.world_of(start), trace


def classify_pair_type(d_large: float, d_small: float) -> PairType:
    """Bifurcation typing by diameter ratio: type 2 at ratio >= 2.5."""
    if d_large <= 0 or d_small <= 0:
        raise InvalidDiameterError(
            f"diameters must be > 0, got ({d_large}, {d_small})"
        )
    return PairType.TYPE2 if d_large / d_small >= 2.5 else PairType.TYPE1
