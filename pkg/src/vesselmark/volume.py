"""Physical-space 3D volumes: geometry, interpolation, resampling, windowing.

Conventions
-----------
Arrays are indexed ``values[ix, iy, iz]`` with shape ``(nx, ny, nz)``; world
coordinates are millimetres with ``world = origin + index * spacing`` per
axis (axis-aligned grids, no rotation). Points are ``(3,)`` float arrays
``(x, y, z)`` in world mm unless a function says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vesselmark import _kernels
from vesselmark.errors import (
    GeometryMismatchError,
    InvalidWindowError,
    OutOfBoundsError,
)

_EDGE_TOL = 1e-9  # slack, in voxels, for points sitting exactly on a face


def as_point(p) -> np.ndarray:
    """Validate and convert a point-like to a (3,) float64 array."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-component point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite components: {arr}")
    return arr


@dataclass(frozen=True)
class VolumeGeometry:
    """Grid dims (voxels), spacing (mm/voxel) and origin (mm of voxel 0)."""

    dims: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("geometry fields must have 3 components")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def extent_mm(self) -> np.ndarray:
        """Distance between first and last voxel centers per axis."""
        return (np.array(self.dims) - 1) * np.array(self.spacing)

    def world_of(self, voxel_coords) -> np.ndarray:
        """Continuous voxel coordinates -> world mm (broadcasts over leading axes)."""
        v = np.asarray(voxel_coords, dtype=np.float64)
        return np.asarray(self.origin) + v * np.asarray(self.spacing)

    def voxel_of(self, world) -> np.ndarray:
        """World mm -> continuous voxel coordinates."""
        w = np.asarray(world, dtype=np.float64)
        return (w - np.asarray(self.origin)) / np.asarray(self.spacing)

    def contains_world(self, p) -> bool:
        v = self.voxel_of(as_point(p))
        return bool(
            np.all(v >= -_EDGE_TOL) and np.all(v <= np.array(self.dims) - 1 + _EDGE_TOL)
        )


class ScalarVolume:
    """A real scalar per voxel on a VolumeGeometry grid.

    Values are float64. Construction copies unless the array already matches
    dtype and layout; instances are treated as immutable by every operation
    in this package.
    """

    def __init__(self, geometry: VolumeGeometry, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != geometry.dims:
            raise ValueError(
                f"values shape {values.shape} does not match dims {geometry.dims}"
            )
        self.geometry = geometry
        self.values = values

    @classmethod
    def filled(cls, geometry: VolumeGeometry, fill=0.0) -> "ScalarVolume":
        return cls(geometry, np.full(geometry.dims, float(fill)))

    def copy(self) -> "ScalarVolume":
        return ScalarVolume(self.geometry, self.values.copy())


class VectorField:
    """A real 3-vector per voxel (mm displacements for DVFs)."""

    def __init__(self, geometry: VolumeGeometry, vectors):
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.shape != geometry.dims + (3,):
            raise ValueError(
                f"vectors shape {vectors.shape} does not match dims {geometry.dims}"
            )
        self.geometry = geometry
        self.vectors = vectors


@dataclass
class OrganMaskSet:
    """Ordered (mask, fill_value) pairs; later entries win overlaps.

    Masks are boolean arrays on a single shared geometry; fill values are HU.
    """

    geometry: VolumeGeometry
    entries: list

    def __post_init__(self):
        checked = []
        for mask, fill in self.entries:
            mask = np.asarray(mask)
            if mask.shape != self.geometry.dims:
                raise GeometryMismatchError(
                    f"mask shape {mask.shape} does not match dims {self.geometry.dims}"
                )
            fill = float(fill)
            if not np.isfinite(fill):
                raise ValueError(f"fill value must be finite, got {fill}")
            checked.append((mask.astype(bool), fill))
        self.entries = checked


def _clamped_voxel_coords(geometry: VolumeGeometry, points: np.ndarray):
    """World points -> per-axis voxel coordinate arrays, validated in-domain."""
    v = geometry.voxel_of(points)
    hi = np.array(geometry.dims, dtype=np.float64) - 1
    bad = np.any((v < -_EDGE_TOL) | (v > hi + _EDGE_TOL), axis=-1)
    if np.any(bad):
        idx = int(np.argmax(bad))
        p = np.atleast_2d(points)[idx] if points.ndim > 1 else points
        raise OutOfBoundsError(
            f"point index {idx} at {np.asarray(p)} mm is outside the sampling domain"
        )
    v = np.clip(v, 0.0, hi)
    return v


def sample_trilinear(vol: ScalarVolume, p):
    """Trilinear interpolation of the volume at world point(s) `p`.

    Accepts a single (3,) point or an (n, 3) array; returns a float or an
    (n,) array. Raises OutOfBoundsError if any point leaves [0, dims-1] in
    continuous voxel coordinates.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts2 = np.atleast_2d(pts)
    v = _clamped_voxel_coords(vol.geometry, pts2)
    out = _kernels.trilinear_gather(
        vol.values,
        np.ascontiguousarray(v[:, 0]),
        np.ascontiguousarray(v[:, 1]),
        np.ascontiguousarray(v[:, 2]),
    )
    return float(out[0]) if single else out


def sample_trilinear_clamped(vol: ScalarVolume, voxel_coords: np.ndarray):
    """Trilinear samples at continuous voxel coordinates, clamped to the grid.

    Internal resampling path: coordinates outside the domain take the nearest
    face value instead of raising.
    """
    hi = np.array(vol.geometry.dims, dtype=np.float64) - 1
    v = np.clip(voxel_coords, 0.0, hi)
    return _kernels.trilinear_gather(
        vol.values,
        np.ascontiguousarray(v[:, 0]),
        np.ascontiguousarray(v[:, 1]),
        np.ascontiguousarray(v[:, 2]),
    )


def sample_vector_trilinear(field: VectorField, p):
    """Trilinear interpolation of a vector field at world point(s)."""
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts2 = np.atleast_2d(pts)
    v = _clamped_voxel_coords(field.geometry, pts2)
    xs = np.ascontiguousarray(v[:, 0])
    ys = np.ascontiguousarray(v[:, 1])
    zs = np.ascontiguousarray(v[:, 2])
    comps = [
        _kernels.trilinear_gather(np.ascontiguousarray(field.vectors[..., c]), xs, ys, zs)
        for c in range(3)
    ]
    out = np.stack(comps, axis=-1)
    return out[0] if single else out


def resample_isotropic(vol: ScalarVolume, target_spacing: float) -> ScalarVolume:
    """Resample to an isotropic grid of `target_spacing` mm.

    The origin is preserved and the output has floor(extent/t)+1 voxels per
    axis, so the physical extent is preserved within one output voxel. Edge
    samples clamp to the boundary face.
    """
    t = float(target_spacing)
    if t <= 0:
        raise ValueError(f"target_spacing must be > 0, got {t}")
    g = vol.geometry
    if g.spacing == (t, t, t):
        return vol.copy()
    extent = g.extent_mm
    out_dims = tuple(int(np.floor(e / t + _EDGE_TOL)) + 1 for e in extent)
    out_geom = VolumeGeometry(out_dims, (t, t, t), g.origin)

    # sample slab-by-slab along x to bound transient memory on large grids
    ax = [np.arange(n, dtype=np.float64) * t / s for n, s in zip(out_dims, g.spacing)]
    out = np.empty(out_dims)
    slab_len = len(ax[1]) * len(ax[2])
    jj, kk = np.meshgrid(ax[1], ax[2], indexing="ij")
    coords = np.empty((slab_len, 3))
    coords[:, 1] = jj.ravel()
    coords[:, 2] = kk.ravel()
    for i, xv in enumerate(ax[0]):
        coords[:, 0] = xv
        out[i] = sample_trilinear_clamped(vol, coords).reshape(out_dims[1:])
    return ScalarVolume(out_geom, out)


def extract_subvolume(vol: ScalarVolume, center, side_mm: float) -> ScalarVolume:
    """Cube of side `side_mm` centered on `center`, clipped at volume borders.

    Retained voxels keep their world coordinates: the output origin is the
    world position of the lowest retained voxel.
    """
    c = as_point(center)
    if side_mm <= 0:
        raise ValueError(f"side_mm must be > 0, got {side_mm}")
    g = vol.geometry
    if not g.contains_world(c):
        raise OutOfBoundsError(f"center {c} mm lies outside the volume")

    half = side_mm / 2.0
    lo_w = c - half
    hi_w = c + half
    lo_v = np.ceil(g.voxel_of(lo_w) - _EDGE_TOL).astype(int)
    hi_v = np.floor(g.voxel_of(hi_w) + _EDGE_TOL).astype(int)
    lo_v = np.clip(lo_v, 0, np.array(g.dims) - 1)
    hi_v = np.clip(hi_v, 0, np.array(g.dims) - 1)
    center_v = np.clip(np.round(g.voxel_of(c)).astype(int), 0, np.array(g.dims) - 1)
    # a degenerate window still keeps the voxel nearest the center
    lo_v = np.minimum(lo_v, center_v)
    hi_v = np.maximum(hi_v, center_v)

    sub = vol.values[
        lo_v[0] : hi_v[0] + 1, lo_v[1] : hi_v[1] + 1, lo_v[2] : hi_v[2] + 1
    ]
    out_geom = VolumeGeometry(sub.shape, g.spacing, tuple(g.world_of(lo_v)))
    return ScalarVolume(out_geom, sub.copy())


def threshold_normalize(vol: ScalarVolume, lo: float, hi: float) -> ScalarVolume:
    """Clamp values to [lo, hi] then map linearly so lo -> 0 and hi -> 1."""
    lo, hi = float(lo), float(hi)
    if lo >= hi:
        raise InvalidWindowError(f"window lo ({lo}) must be < hi ({hi})")
    clipped = np.clip(vol.values, lo, hi)
    return ScalarVolume(vol.geometry, (clipped - lo) / (hi - lo))


def overwrite_organ_intensities(vol: ScalarVolume, masks: OrganMaskSet) -> ScalarVolume:
    """Set voxels inside each mask to its fill value, list order winning overlaps."""
    if masks.entries and masks.geometry != vol.geometry:
        raise GeometryMismatchError(
            f"mask geometry {masks.geometry} does not match volume {vol.geometry}"
        )
    out = vol.values.copy()
    for mask, fill in masks.entries:
        out[mask] = fill
    return ScalarVolume(vol.geometry, out)
