"""Smoothing, gradients, multiscale tubularity filtering and region growing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from vesselmark import _kernels
from vesselmark.errors import (
    InvalidParamsError,
    InvalidSigmaError,
    OutOfBoundsError,
    SeedBelowThresholdError,
    VolumeTooSmallError,
)
from vesselmark.volume import ScalarVolume, VectorField, VolumeGeometry, as_point


@dataclass
class VesselnessParams:
    """Multiscale tubularity filter parameters.

    Scales are in mm; alpha/beta discriminate plates and blobs; c scales the
    structureness term (None = half the maximum Hessian norm per scale).
    """

    scales: tuple = (1.0, 1.5, 2.0, 3.0)
    alpha: float = 0.5
    beta: float = 0.5
    c: float | None = None
    bright_on_dark: bool = True

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        if not scales:
            raise InvalidParamsError("scales must be non-empty")
        if any(s <= 0 for s in scales):
            raise InvalidParamsError(f"scales must be positive, got {scales}")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise InvalidParamsError(f"scales must be strictly increasing, got {scales}")
        if self.alpha <= 0 or self.beta <= 0:
            raise InvalidParamsError("alpha and beta must be > 0")
        if self.c is not None and self.c <= 0:
            raise InvalidParamsError("c must be > 0 when given")
        self.scales = scales


@dataclass
class RegionGrowParams:
    threshold: float = 0.05
    connectivity: int = 6
    max_voxels: int = 500_000

    def __post_init__(self):
        if self.connectivity not in (6, 26):
            raise InvalidParamsError(f"connectivity must be 6 or 26, got {self.connectivity}")
        if self.max_voxels < 1:
            raise InvalidParamsError("max_voxels must be >= 1")


def gaussian_kernel_1d(sigma: float, order: int = 0) -> np.ndarray:
    """Sampled Gaussian correlation weights with truncation radius ceil(3*sigma).

    Derivative kernels (order 1 and 2) are moment-corrected so polynomial
    inputs produce exact responses: sum(w)=0 and sum(m*w)=1 for order 1,
    sum(w)=0 and sum(m^2/2*w)=1 for order 2.
    """
    if sigma <= 0:
        raise InvalidSigmaError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    m = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(m * m) / (2.0 * sigma * sigma))
    g /= g.sum()
    if order == 0:
        return g
    if order == 1:
        w = m / (sigma * sigma) * g
        return w / np.sum(m * w)
    if order == 2:
        w = (m * m - sigma * sigma) / sigma**4 * g
        w -= w.mean()
        return w / np.sum(0.5 * m * m * w)
    raise ValueError(f"unsupported derivative order {order}")


def _separable_correlate(values: np.ndarray, kernels_per_axis) -> np.ndarray:
    out = values
    for axis, k in enumerate(kernels_per_axis):
        out = ndimage.correlate1d(out, k, axis=axis, mode="nearest")
    return out


def gaussian_smooth(vol: ScalarVolume, sigma_voxels: float) -> ScalarVolume:
    """Separable Gaussian smoothing (sigma in voxels, edge replication)."""
    k = gaussian_kernel_1d(sigma_voxels, order=0)
    return ScalarVolume(vol.geometry, _separable_correlate(vol.values, [k, k, k]))


def smoothed_gradient(vol: ScalarVolume, sigma_voxels: float) -> VectorField:
    """Central-difference gradient (intensity per voxel), Gaussian-smoothed.

    One-sided differences are used on border slices; the spec'd behavior
    applies at interior voxels.
    """
    if any(d < 3 for d in vol.geometry.dims):
        raise VolumeTooSmallError(
            f"need >= 3 voxels per axis for gradients, got {vol.geometry.dims}"
        )
    k = gaussian_kernel_1d(sigma_voxels, order=0)
    comps = []
    for axis in range(3):
        g = np.gradient(vol.values, axis=axis)
        comps.append(_separable_correlate(g, [k, k, k]))
    return VectorField(vol.geometry, np.stack(comps, axis=-1))


def symmetric_eigenvalues_3x3(a11, a22, a33, a12, a13, a23):
    """Eigenvalues of symmetric 3x3 matrices, vectorized (trigonometric form).

    Returns three arrays in ascending algebraic order. Matches LAPACK to
    around 1e-12 relative for well-conditioned inputs.
    """
    q = (a11 + a22 + a33) / 3.0
    b11, b22, b33 = a11 - q, a22 - q, a33 - q
    p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * (a12 * a12 + a13 * a13 + a23 * a23)
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0, p, 1.0)
    c11, c22, c33 = b11 / safe_p, b22 / safe_p, b33 / safe_p
    c12, c13, c23 = a12 / safe_p, a13 / safe_p, a23 / safe_p
    detb = (
        c11 * (c22 * c33 - c23 * c23)
        - c12 * (c12 * c33 - c23 * c13)
        + c13 * (c12 * c23 - c22 * c13)
    )
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam_hi = q + 2.0 * p * np.cos(phi)
    lam_lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam_mid = 3.0 * q - lam_hi - lam_lo
    return lam_lo, lam_mid, lam_hi


def hessian_at_scale(vol: ScalarVolume, scale_mm: float):
    """Scale-normalized Gaussian Hessian entries at one physical scale.

    Sigma per axis is scale_mm / spacing (voxels); entry (a, b) is multiplied
    by sigma_a * sigma_b so responses are comparable across scales.
    """
    spacing = np.array(vol.geometry.spacing)
    sig = scale_mm / spacing
    smooth = [gaussian_kernel_1d(s, 0) for s in sig]
    d1 = [gaussian_kernel_1d(s, 1) for s in sig]
    d2 = [gaussian_kernel_1d(s, 2) for s in sig]

    def entry(a, b):
        ks = []
        for axis in range(3):
            if axis == a and axis == b:
                ks.append(d2[axis])
            elif axis in (a, b):
                ks.append(d1[axis])
            else:
                ks.append(smooth[axis])
        return _separable_correlate(vol.values, ks) * (sig[a] * sig[b])

    return {
        (0, 0): entry(0, 0),
        (1, 1): entry(1, 1),
        (2, 2): entry(2, 2),
        (0, 1): entry(0, 1),
        (0, 2): entry(0, 2),
        (1, 2): entry(1, 2),
    }


def frangi_vesselness(vol: ScalarVolume, params: VesselnessParams) -> ScalarVolume:
    """Multiscale Hessian tubularity response in [0, 1], maximum over scales."""
    eps = 1e-12
    best = np.zeros(vol.geometry.dims)
    for scale in params.scales:
        h = hessian_at_scale(vol, scale)
        lam = symmetric_eigenvalues_3x3(
            h[(0, 0)], h[(1, 1)], h[(2, 2)], h[(0, 1)], h[(0, 2)], h[(1, 2)]
        )
        vals = np.stack(lam, axis=-1)
        order = np.argsort(np.abs(vals), axis=-1)
        vals = np.take_along_axis(vals, order, axis=-1)
        l1, l2, l3 = vals[..., 0], vals[..., 1], vals[..., 2]

        ra2 = (l2 * l2) / (l3 * l3 + eps)
        rb2 = (l1 * l1) / (np.abs(l2 * l3) + eps)
        s2 = l1 * l1 + l2 * l2 + l3 * l3
        c = params.c
        if c is None:
            smax = math.sqrt(float(s2.max()))
            if smax == 0.0:
                continue
            c = 0.5 * smax
        response = (
            (1.0 - np.exp(-ra2 / (2.0 * params.alpha**2)))
            * np.exp(-rb2 / (2.0 * params.beta**2))
            * (1.0 - np.exp(-s2 / (2.0 * c * c)))
        )
        if params.bright_on_dark:
            response[(l2 >= 0) | (l3 >= 0)] = 0.0
        else:
            response[(l2 <= 0) | (l3 <= 0)] = 0.0
        np.maximum(best, response, out=best)
    return ScalarVolume(vol.geometry, best)


_OFFSETS_6 = np.array(
    [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)],
    dtype=np.int64,
)
_OFFSETS_26 = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)


@dataclass
class RegionGrowResult:
    mask: np.ndarray
    geometry: VolumeGeometry
    capped: bool
    n_voxels: int

    def as_volume(self) -> ScalarVolume:
        return ScalarVolume(self.geometry, self.mask.astype(np.float64))


def region_grow_mask(vol: ScalarVolume, seed, params: RegionGrowParams) -> RegionGrowResult:
    """Flood fill from the seed over voxels with value >= threshold.

    Expansion is breadth-first by level; a level that would exceed
    max_voxels is truncated in flat C-order and the result is flagged
    capped. The seed voxel is always contained.
    """
    g = vol.geometry
    seed = as_point(seed)
    if not g.contains_world(seed):
        raise OutOfBoundsError(f"seed {seed} mm lies outside the volume")
    seed_vox = np.clip(
        np.round(g.voxel_of(seed)).astype(int), 0, np.array(g.dims) - 1
    )
    if vol.values[tuple(seed_vox)] < params.threshold:
        raise SeedBelowThresholdError(
            f"seed voxel value {vol.values[tuple(seed_vox)]:.6g} < "
            f"threshold {params.threshold:.6g}"
        )

    dims = g.dims
    values_flat = np.ascontiguousarray(vol.values.ravel())
    visited = np.zeros(values_flat.shape, dtype=np.uint8)
    offsets = _OFFSETS_6 if params.connectivity == 6 else _OFFSETS_26

    seed_flat = np.int64((seed_vox[0] * dims[1] + seed_vox[1]) * dims[2] + seed_vox[2])
    visited[seed_flat] = 1
    accepted = [np.array([seed_flat], dtype=np.int64)]
    count = 1
    capped = False
    frontier = accepted[0]
    while frontier.size and count < params.max_voxels:
        nxt = _kernels.flood_frontier(
            values_flat, dims, frontier, visited, float(params.threshold), offsets
        )
        nxt = np.sort(nxt)
        if count + nxt.size > params.max_voxels:
            nxt = nxt[: params.max_voxels - count]
            capped = True
        if nxt.size:
            accepted.append(nxt)
            count += int(nxt.size)
        frontier = nxt
        if capped:
            break

    mask = np.zeros(values_flat.shape, dtype=bool)
    mask[np.concatenate(accepted)] = True
    return RegionGrowResult(mask.reshape(dims), g, capped, count)
