"""Shared synthetic fixtures: digitized vessels in HU and oracle helpers.

Digitization convention: a voxel is inside a tube when its center lies
within (radius - 0.5) voxels of the axis, putting the intensity wall
midplane at the nominal radius.
"""

import numpy as np
from scipy import ndimage

from vesselmark.grower import GrowConfig
from vesselmark.volume import ScalarVolume, VolumeGeometry, sample_trilinear_clamped

HU_VESSEL = 240.0
HU_BACKGROUND = -160.0

# benchmark grower profile: smaller internal force and a long budget give the
# wall equilibrium time to settle (the library default stays at the published
# 30-iteration profile)
BENCH_CFG = dict(f_int=0.05, iterations=400)


def bench_config(**overrides) -> GrowConfig:
    kwargs = dict(BENCH_CFG)
    kwargs.update(overrides)
    return GrowConfig(**kwargs)


def _segment_distance(P, origin, direction, length):
    rel = P - origin
    t = np.clip(rel @ direction, 0.0, length)
    return np.linalg.norm(P - (origin + t[..., None] * direction), axis=-1)


def _voxel_grid(n):
    x = np.arange(n, dtype=float)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    return np.stack([X, Y, Z], axis=-1)


def cylinder_volume(radius_vox, n=57, spacing=0.7, axis=2):
    """Binary HU cylinder along one axis through the central voxel.

    Returns (volume, axis center world point, inside mask).
    """
    g = VolumeGeometry((n, n, n), (spacing,) * 3, (0.0, 0.0, 0.0))
    c = float(n // 2)
    x = np.arange(n, dtype=float)
    X, Y = np.meshgrid(x, x, indexing="ij")
    d2d = np.hypot(X - c, Y - c)
    inside2d = d2d <= radius_vox - 0.5
    planes = [0, 1, 2]
    planes.remove(axis)
    inside = np.zeros((n, n, n), dtype=bool)
    idx = [None, None, None]
    idx[planes[0]] = slice(None)
    idx[planes[1]] = slice(None)
    # broadcast the 2D disc along the tube axis
    inside = np.moveaxis(
        np.broadcast_to(inside2d[..., None], (n, n, n)), 2, axis
    ).copy()
    vals = np.where(inside, HU_VESSEL, HU_BACKGROUND)
    center = g.world_of(np.array([c, c, c]))
    return ScalarVolume(g, vals), center, inside


def junction_volume(rng_or_angles, n=64, spacing=0.7, r_trunk=4.0,
                    r_branch=2.8, taper=0.0, extra_segments=()):
    """Y-junction in HU: a trunk along -z meeting two branches.

    `rng_or_angles` is either a numpy Generator (random branch angles and
    azimuths) or a tuple (theta1_deg, theta2_deg, phi1_rad, delta_phi_rad).
    A positive `taper` shrinks every segment's radius by that many voxels
    per voxel of distance from the junction, making the junction the unique
    widest point. Returns (volume, junction world point, main-tree mask).
    """
    g = VolumeGeometry((n, n, n), (spacing,) * 3, (0.0, 0.0, 0.0))
    j = np.array([n // 2, n // 2, n // 2], dtype=float)
    if isinstance(rng_or_angles, tuple):
        th1, th2, phi1, dphi = rng_or_angles
    else:
        rng = rng_or_angles
        th1 = rng.uniform(30, 50)
        th2 = rng.uniform(30, 50)
        phi1 = rng.uniform(0, 2 * np.pi)
        dphi = np.deg2rad(rng.uniform(140, 220))

    dirs = [(np.array([0.0, 0.0, -1.0]), r_trunk)]
    for th_deg, ph in ((th1, phi1), (th2, phi1 + dphi)):
        th = np.deg2rad(th_deg)
        dirs.append(
            (np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                       np.cos(th)]), r_branch)
        )

    P = _voxel_grid(n)
    inside = np.zeros((n, n, n), dtype=bool)
    for direction, radius in dirs:
        rel = P - j
        t = np.clip(rel @ direction, 0.0, float(n))
        dax = np.linalg.norm(P - (j + t[..., None] * direction), axis=-1)
        inside |= dax <= (radius - taper * t) - 0.5
    main_inside = inside.copy()
    for origin, direction, radius in extra_segments:
        rel = P - origin
        t = np.clip(rel @ direction, -float(n), float(n))
        dist = np.linalg.norm(P - (origin + t[..., None] * direction), axis=-1)
        inside |= dist <= radius - 0.5

    vals = np.where(inside, HU_VESSEL, HU_BACKGROUND)
    return ScalarVolume(g, vals), g.world_of(j), main_inside


def junction_with_fat_neighbor(n=64, spacing=0.7, r_trunk=4.0, r_branch=2.8,
                               r_fat=9.0, overlap=3.0):
    """Junction whose trunk overlaps a much wider parallel tube.

    The bright bridge lets the sphere escape on the raw image; the fat tube
    is far from the vesselness scales, so the mask excludes it.
    """
    j = np.array([n // 2, n // 2, n // 2], dtype=float)
    fat_origin = j + np.array([0.0, r_trunk + r_fat - overlap, 0.0])
    fat = (fat_origin, np.array([0.0, 0.0, 1.0]), r_fat)
    vol, j_mm, main_inside = junction_volume(
        (40.0, 40.0, 0.0, np.pi), n=n, spacing=spacing, r_trunk=r_trunk,
        r_branch=r_branch, extra_segments=[fat],
    )
    return vol, j_mm, main_inside


def interior_distance(inside_mask):
    """Exact Euclidean distance to the structure boundary (voxel units)."""
    return ndimage.distance_transform_edt(inside_mask)


def distance_at(vol_geometry, edt, world_point):
    """Trilinear sample of a distance map at a world point."""
    helper = ScalarVolume(vol_geometry, edt.astype(np.float64))
    vox = vol_geometry.voxel_of(np.asarray(world_point, dtype=np.float64))
    return float(sample_trilinear_clamped(helper, vox[None, :])[0])


def smooth_test_image(n=48, spacing=1.0, seed=5):
    """Band-limited smooth image: a few broad Gaussian bumps, values in HU."""
    rng = np.random.default_rng(seed)
    g = VolumeGeometry((n, n, n), (spacing,) * 3, (0.0, 0.0, 0.0))
    P = _voxel_grid(n) * spacing
    vals = np.zeros((n, n, n))
    for _ in range(4):
        center = rng.uniform(0.25 * n, 0.75 * n, size=3) * spacing
        width = rng.uniform(6.0, 12.0)
        amp = rng.uniform(50.0, 150.0)
        vals += amp * np.exp(-np.sum((P - center) ** 2, axis=-1) / (2 * width**2))
    return ScalarVolume(g, vals)
