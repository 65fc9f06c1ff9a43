"""Pure-numpy implementations of the hot kernels.

Semantics must match ``_core.pyx`` exactly; the selected backend is decided
in ``vesselmark._kernels.__init__``.
"""

import numpy as np


def trilinear_gather(values, xs, ys, zs):
    """Trilinear interpolation of `values` at continuous voxel coordinates.

    Coordinates must already be clamped to [0, n-1] per axis. Returns a
    float64 array of samples.
    """
    nx, ny, nz = values.shape
    i0 = np.minimum(xs.astype(np.intp), max(nx - 2, 0))
    j0 = np.minimum(ys.astype(np.intp), max(ny - 2, 0))
    k0 = np.minimum(zs.astype(np.intp), max(nz - 2, 0))
    fx = xs - i0
    fy = ys - j0
    fz = zs - k0
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    k1 = np.minimum(k0 + 1, nz - 1)

    c000 = values[i0, j0, k0]
    c100 = values[i1, j0, k0]
    c010 = values[i0, j1, k0]
    c110 = values[i1, j1, k0]
    c001 = values[i0, j0, k1]
    c101 = values[i1, j0, k1]
    c011 = values[i0, j1, k1]
    c111 = values[i1, j1, k1]

    c00 = c000 * (1.0 - fx) + c100 * fx
    c10 = c010 * (1.0 - fx) + c110 * fx
    c01 = c001 * (1.0 - fx) + c101 * fx
    c11 = c011 * (1.0 - fx) + c111 * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


def sphere_accumulate(u, cx, cy, cz, r):
    """Sums of the force field over lattice points within `r` of the center.

    Returns (sum_ux, sum_uy, sum_uz, sum_radial, count) where sum_radial
    accumulates the dot product of the unit center-to-voxel offset with the
    voxel's force vector; a voxel coincident with the center contributes 0.
    Out-of-volume lattice points are skipped.
    """
    nx, ny, nz = u.shape[:3]
    ilo, ihi = int(np.ceil(cx - r)), int(np.floor(cx + r))
    jlo, jhi = int(np.ceil(cy - r)), int(np.floor(cy + r))
    klo, khi = int(np.ceil(cz - r)), int(np.floor(cz + r))
    ilo, ihi = max(ilo, 0), min(ihi, nx - 1)
    jlo, jhi = max(jlo, 0), min(jhi, ny - 1)
    klo, khi = max(klo, 0), min(khi, nz - 1)
    if ihi < ilo or jhi < jlo or khi < klo:
        return 0.0, 0.0, 0.0, 0.0, 0

    ii, jj, kk = np.meshgrid(
        np.arange(ilo, ihi + 1, dtype=np.float64),
        np.arange(jlo, jhi + 1, dtype=np.float64),
        np.arange(klo, khi + 1, dtype=np.float64),
        indexing="ij",
    )
    dx = ii - cx
    dy = jj - cy
    dz = kk - cz
    dist2 = dx * dx + dy * dy + dz * dz
    inside = dist2 <= r * r
    count = int(np.count_nonzero(inside))
    if count == 0:
        return 0.0, 0.0, 0.0, 0.0, 0

    block = u[ilo : ihi + 1, jlo : jhi + 1, klo : khi + 1]
    ux = block[..., 0][inside]
    uy = block[..., 1][inside]
    uz = block[..., 2][inside]
    sum_ux = float(ux.sum())
    sum_uy = float(uy.sum())
    sum_uz = float(uz.sum())

    dist = np.sqrt(dist2[inside])
    dxs, dys, dzs = dx[inside], dy[inside], dz[inside]
    nonzero = dist > 1e-12
    radial = np.zeros_like(dist)
    radial[nonzero] = (
        dxs[nonzero] * ux[nonzero]
        + dys[nonzero] * uy[nonzero]
        + dzs[nonzero] * uz[nonzero]
    ) / dist[nonzero]
    return sum_ux, sum_uy, sum_uz, float(radial.sum()), count


def flood_frontier(values_flat, dims, frontier, visited_flat, threshold, offsets):
    """One breadth-first expansion level of a flood fill.

    `frontier` holds flat C-order indices of the current level; neighbors
    passing ``value >= threshold`` and not yet visited are marked visited and
    returned (unsorted, duplicate-free).
    """
    nx, ny, nz = dims
    iz = frontier % nz
    rem = frontier // nz
    iy = rem % ny
    ix = rem // ny

    collected = []
    for dx, dy, dz in offsets:
        jx = ix + dx
        jy = iy + dy
        jz = iz + dz
        ok = (
            (jx >= 0) & (jx < nx)
            & (jy >= 0) & (jy < ny)
            & (jz >= 0) & (jz < nz)
        )
        if not ok.any():
            continue
        flat = (jx[ok] * ny + jy[ok]) * nz + jz[ok]
        fresh = visited_flat[flat] == 0
        flat = flat[fresh]
        accept = flat[values_flat[flat] >= threshold]
        if accept.size:
            visited_flat[accept] = 1
            collected.append(accept)
    if not collected:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(collected)
