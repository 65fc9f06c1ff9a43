"""Synthetic ground-truth generation: random transforms, warped patch pairs
with exact point mapping, and blinded observer patches.

A transform composes, about its pivot: uniform scaling, rotation about a
random axis, then a per-axis sinusoidal displacement field. Each axis a is
displaced by A_a * sin(2*pi * p_w / W_a + phi_a) where w is the next axis
(x driven by y, y by z, z by x). Randomized constructors are pure functions
of their integer seed (PCG64).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vesselmark.errors import NoConvergenceError, OutOfBoundsError
from vesselmark.volume import (
    ScalarVolume,
    as_point,
    extract_subvolume,
    resample_isotropic,
    sample_trilinear_clamped,
)
from vesselmark import volume_io

ANGLE_RANGE_DEG = (0.0, 50.0)
SCALE_RANGE = (0.9, 1.1)
AMPLITUDE_RANGE_MM = (2.0, 5.0)
WAVELENGTH_RANGE_MM = (40.0, 80.0)
PHANTOM_PATCH_SIDE_MM = 200.0
PHANTOM_SPACING_MM = 0.7
OBSERVER_PATCH_SIDE_MM = 100.0
OBSERVER_MAX_SHIFT = 3  # voxels per axis


@dataclass
class SyntheticTransform:
    """Rotation/scale/sinusoid with an exact forward point mapping."""

    axis: np.ndarray
    angle_deg: float
    scale: float
    amplitudes_mm: np.ndarray
    wavelengths_mm: np.ndarray
    phases_rad: np.ndarray
    pivot: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=np.float64)
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError(f"axis must be unit length, |axis|={np.linalg.norm(self.axis)}")
        lo, hi = ANGLE_RANGE_DEG
        if not lo <= self.angle_deg <= hi:
            raise ValueError(f"angle {self.angle_deg} outside [{lo}, {hi}] degrees")
        lo, hi = SCALE_RANGE
        if not lo <= self.scale <= hi:
            raise ValueError(f"scale {self.scale} outside [{lo}, {hi}]")
        self.amplitudes_mm = np.asarray(self.amplitudes_mm, dtype=np.float64)
        self.wavelengths_mm = np.asarray(self.wavelengths_mm, dtype=np.float64)
        self.phases_rad = np.asarray(self.phases_rad, dtype=np.float64)
        self.pivot = as_point(self.pivot)
        if np.any(self.wavelengths_mm <= 0):
            raise ValueError("wavelengths must be > 0")

    @classmethod
    def identity(cls, pivot, seed: int = 0) -> "SyntheticTransform":
        return cls(
            axis=(0.0, 0.0, 1.0),
            angle_deg=0.0,
            scale=1.0,
            amplitudes_mm=(0.0, 0.0, 0.0),
            wavelengths_mm=(50.0, 50.0, 50.0),
            phases_rad=(0.0, 0.0, 0.0),
            pivot=pivot,
            seed=seed,
        )

    @property
    def rotation_matrix(self) -> np.ndarray:
        """Rodrigues rotation about `axis` by `angle_deg` (right-handed)."""
        kx, ky, kz = self.axis
        k_cross = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
        theta = np.deg2rad(self.angle_deg)
        return (
            np.eye(3)
            + np.sin(theta) * k_cross
            + (1.0 - np.cos(theta)) * (k_cross @ k_cross)
        )

    def to_json_dict(self) -> dict:
        return {
            "axis": [float(v) for v in self.axis],
            "angle_deg": float(self.angle_deg),
            "scale": float(self.scale),
            "amplitudes_mm": [float(v) for v in self.amplitudes_mm],
            "wavelengths_mm": [float(v) for v in self.wavelengths_mm],
            "phases_rad": [float(v) for v in self.phases_rad],
            "pivot_mm": [float(v) for v in self.pivot],
            "seed": int(self.seed),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SyntheticTransform":
        return cls(
            axis=d["axis"],
            angle_deg=d["angle_deg"],
            scale=d["scale"],
            amplitudes_mm=d["amplitudes_mm"],
            wavelengths_mm=d["wavelengths_mm"],
            phases_rad=d["phases_rad"],
            pivot=d["pivot_mm"],
            seed=d.get("seed", 0),
        )


def random_transform(seed: int, pivot) -> SyntheticTransform:
    """Draw a transform: axis uniform on the sphere, angle U[0,50] deg,
    scale U[0.9,1.1], sinusoid amplitudes U[2,5] mm / wavelengths U[40,80] mm.

    The amplitude/wavelength ranges keep the displacement Jacobian below 1
    (max slope 2*pi*5/40 ~ 0.79), so the forward map stays injective.
    """
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(*ANGLE_RANGE_DEG)
    scale = rng.uniform(*SCALE_RANGE)
    amplitudes = rng.uniform(*AMPLITUDE_RANGE_MM, size=3)
    wavelengths = rng.uniform(*WAVELENGTH_RANGE_MM, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    return SyntheticTransform(
        axis, angle, scale, amplitudes, wavelengths, phases, as_point(pivot), seed
    )


def _sinusoid_displacement(t: SyntheticTransform, pts: np.ndarray) -> np.ndarray:
    drive = pts[..., [1, 2, 0]]
    return t.amplitudes_mm * np.sin(
        2.0 * np.pi * drive / t.wavelengths_mm + t.phases_rad
    )


def map_points_forward(t: SyntheticTransform, pts) -> np.ndarray:
    """Forward mapping of (n, 3) world points: scale, rotate, then sinusoid."""
    pts = np.asarray(pts, dtype=np.float64)
    y = t.pivot + (t.scale * (pts - t.pivot)) @ t.rotation_matrix.T
    return y + _sinusoid_displacement(t, y)


def map_point_forward(t: SyntheticTransform, p) -> np.ndarray:
    """Forward mapping of a single world point."""
    return map_points_forward(t, as_point(p)[None, :])[0]


def invert_points(t: SyntheticTransform, qs, tol_mm: float = 0.005,
                  max_iter: int = 100) -> np.ndarray:
    """Inverse mapping of (n, 3) points via fixed-point iteration.

    Solves y + d(y) = q by y <- q - d(y); the final step size bounds the
    forward residual, so convergence below tol_mm guarantees the round trip
    is within tol_mm. Raises NoConvergenceError when the sinusoid folds
    (displacement Jacobian >= 1).
    """
    qs = np.asarray(qs, dtype=np.float64)
    y = qs.copy()
    for _ in range(max_iter):
        y_next = qs - _sinusoid_displacement(t, y)
        step = float(np.max(np.abs(y_next - y)))
        y = y_next
        if step < tol_mm:
            break
    else:
        raise NoConvergenceError(
            f"sinusoid inversion did not converge in {max_iter} steps "
            f"(last step {step:.4g} mm); the field likely folds"
        )
    rot_inv = t.rotation_matrix.T
    return t.pivot + ((y - t.pivot) @ rot_inv.T) / t.scale


def invert_point(t: SyntheticTransform, q, tol_mm: float = 0.005,
                 max_iter: int = 100) -> np.ndarray:
    """Inverse mapping of a single point (round trip within 0.01 mm)."""
    return invert_points(t, as_point(q)[None, :], tol_mm, max_iter)[0]


@dataclass
class PhantomPair:
    """A patch and its warped twin with exactly known point correspondence."""

    patch1: ScalarVolume
    patch2: ScalarVolume
    transform: SyntheticTransform
    gt_landmark1: np.ndarray
    gt_landmark2: np.ndarray


def warp_volume(vol: ScalarVolume, t: SyntheticTransform) -> ScalarVolume:
    """Backward-map `vol` through `t` onto the same grid.

    Each output voxel center q samples the input at the inverse-mapped
    position; samples falling outside clamp to the boundary face. Work is
    chunked along x to bound transient memory on large grids.
    """
    g = vol.geometry
    ax = [o + np.arange(n) * s for n, s, o in zip(g.dims, g.spacing, g.origin)]
    out = np.empty(g.dims)
    yy, zz = np.meshgrid(ax[1], ax[2], indexing="ij")
    centers = np.empty((yy.size, 3))
    centers[:, 1] = yy.ravel()
    centers[:, 2] = zz.ravel()
    origin = np.asarray(g.origin)
    spacing = np.asarray(g.spacing)
    for i, xv in enumerate(ax[0]):
        centers[:, 0] = xv
        src = invert_points(t, centers)
        vox = (src - origin) / spacing
        out[i] = sample_trilinear_clamped(vol, vox).reshape(g.dims[1:])
    return ScalarVolume(g, out)


def make_phantom_pair(
    image: ScalarVolume,
    landmark,
    seed: int,
    transform: SyntheticTransform | None = None,
    side_mm: float = PHANTOM_PATCH_SIDE_MM,
    spacing_mm: float = PHANTOM_SPACING_MM,
) -> PhantomPair:
    """Extract an isotropic patch around the landmark and warp a twin.

    The transform (random from `seed` unless supplied) is pivoted at the
    landmark; gt_landmark2 is its exact forward mapping of the landmark.
    """
    landmark = as_point(landmark)
    patch1 = extract_subvolume(image, landmark, side_mm)
    patch1 = resample_isotropic(patch1, spacing_mm)
    t = transform if transform is not None else random_transform(seed, landmark)
    patch2 = warp_volume(patch1, t)
    gt2 = map_point_forward(t, landmark)
    return PhantomPair(patch1, patch2, t, landmark, gt2)


def make_observer_patch_pair(img1: ScalarVolume, img2: ScalarVolume, pair,
                             seed: int):
    """Blinded observer patches: 100 mm cubes with patch 2 randomly shifted.

    The shift is an integer number of voxels in [-3, 3] per axis; it is
    returned so the study can be unblinded.
    """
    p1 = as_point(pair.p1)
    p2 = as_point(pair.p2)
    rng = np.random.default_rng(seed)
    shift = rng.integers(-OBSERVER_MAX_SHIFT, OBSERVER_MAX_SHIFT + 1, size=3)
    patch1 = extract_subvolume(img1, p1, OBSERVER_PATCH_SIDE_MM)
    center2 = p2 + shift * np.asarray(img2.geometry.spacing)
    if not img2.geometry.contains_world(center2):
        raise OutOfBoundsError(
            f"shifted patch center {center2} mm lies outside image 2"
        )
    patch2 = extract_subvolume(img2, center2, OBSERVER_PATCH_SIDE_MM)
    return patch1, patch2, tuple(int(s) for s in shift)


def save_phantom_pair(pair: PhantomPair, dir_path, volume_suffix: str = ".nii.gz"):
    """Persist both patches plus a manifest sufficient to re-verify gt points."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    volume_io.save_volume(pair.patch1, out / f"patch1{volume_suffix}")
    volume_io.save_volume(pair.patch2, out / f"patch2{volume_suffix}")
    manifest = {
        "transform": pair.transform.to_json_dict(),
        "gt_landmark1_mm": [float(v) for v in pair.gt_landmark1],
        "gt_landmark2_mm": [float(v) for v in pair.gt_landmark2],
        "patch_files": [f"patch1{volume_suffix}", f"patch2{volume_suffix}"],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def load_phantom_pair(dir_path) -> PhantomPair:
    out = Path(dir_path)
    manifest = json.loads((out / "manifest.json").read_text())
    t = SyntheticTransform.from_json_dict(manifest["transform"])
    f1, f2 = manifest["patch_files"]
    return PhantomPair(
        volume_io.load_volume(out / f1),
        volume_io.load_volume(out / f2),
        t,
        np.array(manifest["gt_landmark1_mm"]),
        np.array(manifest["gt_landmark2_mm"]),
    )
