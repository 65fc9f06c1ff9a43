# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see reference.py for the
semantics contract shared by both backends)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

cnp.import_array()


def trilinear_gather(double[:, :, ::1] values, double[::1] xs,
                     double[::1] ys, double[::1] zs):
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t nx = values.shape[0]
    cdef Py_ssize_t ny = values.shape[1]
    cdef Py_ssize_t nz = values.shape[2]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t t, i0, j0, k0, i1, j1, k1
    cdef double x, y, z, fx, fy, fz
    cdef double c00, c10, c01, c11, c0, c1
    for t in range(m):
        x = xs[t]; y = ys[t]; z = zs[t]
        i0 = <Py_ssize_t>x
        j0 = <Py_ssize_t>y
        k0 = <Py_ssize_t>z
        if i0 > nx - 2: i0 = nx - 2
        if j0 > ny - 2: j0 = ny - 2
        if k0 > nz - 2: k0 = nz - 2
        if i0 < 0: i0 = 0
        if j0 < 0: j0 = 0
        if k0 < 0: k0 = 0
        fx = x - i0; fy = y - j0; fz = z - k0
        i1 = i0 + 1 if i0 + 1 < nx else nx - 1
        j1 = j0 + 1 if j0 + 1 < ny else ny - 1
        k1 = k0 + 1 if k0 + 1 < nz else nz - 1
        c00 = values[i0, j0, k0] * (1.0 - fx) + values[i1, j0, k0] * fx
        c10 = values[i0, j1, k0] * (1.0 - fx) + values[i1, j1, k0] * fx
        c01 = values[i0, j0, k1] * (1.0 - fx) + values[i1, j0, k1] * fx
        c11 = values[i0, j1, k1] * (1.0 - fx) + values[i1, j1, k1] * fx
        c0 = c00 * (1.0 - fy) + c10 * fy
        c1 = c01 * (1.0 - fy) + c11 * fy
        o[t] = c0 * (1.0 - fz) + c1 * fz
    return out


def sphere_accumulate(double[:, :, :, ::1] u, double cx, double cy,
                      double cz, double r):
    cdef Py_ssize_t nx = u.shape[0]
    cdef Py_ssize_t ny = u.shape[1]
    cdef Py_ssize_t nz = u.shape[2]
    cdef Py_ssize_t ilo = <Py_ssize_t>ceil(cx - r)
    cdef Py_ssize_t ihi = <Py_ssize_t>floor(cx + r)
    cdef Py_ssize_t jlo = <Py_ssize_t>ceil(cy - r)
    cdef Py_ssize_t jhi = <Py_ssize_t>floor(cy + r)
    cdef Py_ssize_t klo = <Py_ssize_t>ceil(cz - r)
    cdef Py_ssize_t khi = <Py_ssize_t>floor(cz + r)
    if ilo < 0: ilo = 0
    if jlo < 0: jlo = 0
    if klo < 0: klo = 0
    if ihi > nx - 1: ihi = nx - 1
    if jhi > ny - 1: jhi = ny - 1
    if khi > nz - 1: khi = nz - 1

    cdef double r2 = r * r
    cdef double sum_ux = 0.0, sum_uy = 0.0, sum_uz = 0.0, sum_rad = 0.0
    cdef long count = 0
    cdef Py_ssize_t i, j, k
    cdef double dx, dy, dz, d2, d, ux, uy, uz
    for i in range(ilo, ihi + 1):
        dx = i - cx
        for j in range(jlo, jhi + 1):
            dy = j - cy
            for k in range(klo, khi + 1):
                dz = k - cz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 > r2:
                    continue
                ux = u[i, j, k, 0]
                uy = u[i, j, k, 1]
                uz = u[i, j, k, 2]
                sum_ux += ux
                sum_uy += uy
                sum_uz += uz
                d = sqrt(d2)
                if d > 1e-12:
                    sum_rad += (dx * ux + dy * uy + dz * uz) / d
                count += 1
    return sum_ux, sum_uy, sum_uz, sum_rad, count


def flood_frontier(double[::1] values_flat, dims, long[::1] frontier,
                   cnp.uint8_t[::1] visited_flat, double threshold,
                   long[:, ::1] offsets):
    cdef Py_ssize_t nx = dims[0]
    cdef Py_ssize_t ny = dims[1]
    cdef Py_ssize_t nz = dims[2]
    cdef Py_ssize_t nf = frontier.shape[0]
    cdef Py_ssize_t noff = offsets.shape[0]
    out = np.empty(nf * noff, dtype=np.int64)
    cdef long[::1] o = out
    cdef Py_ssize_t t, s, n = 0
    cdef long idx, ix, iy, iz, jx, jy, jz, flat
    for t in range(nf):
        idx = frontier[t]
        iz = idx % nz
        iy = (idx // nz) % ny
        ix = idx // (nz * ny)
        for s in range(noff):
            jx = ix + offsets[s, 0]
            jy = iy + offsets[s, 1]
            jz = iz + offsets[s, 2]
            if jx < 0 or jx >= nx or jy < 0 or jy >= ny or jz < 0 or jz >= nz:
                continue
            flat = (jx * ny + jy) * nz + jz
            if visited_flat[flat]:
                continue
            if values_flat[flat] >= threshold:
                visited_flat[flat] = 1
                o[n] = flat
                n += 1
    return out[:n].copy()
