# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trilinear gather/scatter kernels.

Twin of ``voxsil._kernels_py``: same hat kernel max(0, 1 - |x|), same fixed
corner order (c = 0..7 with dx = c >> 2 & 1, dy = c >> 1 & 1, dz = c & 1),
same out-of-grid handling, so both backends produce identical floats.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor

cnp.import_array()


def trilinear_gather(const double[:, :, ::1] volume, const double[:, ::1] pts, int num_threads=1):
    """Interpolate volume at each index-space point; out-of-grid reads are 0."""
    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef Py_ssize_t h = volume.shape[0]
    cdef Py_ssize_t w = volume.shape[1]
    cdef Py_ssize_t d = volume.shape[2]
    out_arr = np.zeros(n_pts)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, c, ix, iy, iz
    cdef int dx, dy, dz
    cdef double x, y, z, fx, fy, fz, x0, y0, z0, weight, value, acc
    cdef double wx0, wx1, wy0, wy1, wz0, wz1

    if num_threads < 1:
        num_threads = 1
    for i in prange(n_pts, nogil=True, num_threads=num_threads, schedule="static"):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        x0 = floor(x)
        y0 = floor(y)
        z0 = floor(z)
        fx = x - x0
        fy = y - y0
        fz = z - z0
        wx0 = 1.0 - fx
        wx1 = fx
        wy0 = 1.0 - fy
        wy1 = fy
        wz0 = 1.0 - fz
        wz1 = fz
        acc = 0.0
        for c in range(8):
            dx = (c >> 2) & 1
            dy = (c >> 1) & 1
            dz = c & 1
            ix = <Py_ssize_t> x0 + dx
            iy = <Py_ssize_t> y0 + dy
            iz = <Py_ssize_t> z0 + dz
            weight = (wx1 if dx else wx0) * (wy1 if dy else wy0)
            weight = weight * (wz1 if dz else wz0)
            if 0 <= ix < w and 0 <= iy < h and 0 <= iz < d:
                value = volume[iy, ix, iz]
            else:
                value = 0.0
            acc = acc + weight * value
        out[i] = acc
    return out_arr


def trilinear_scatter_add(double[:, :, ::1] grad_volume, const double[:, ::1] pts,
                          const double[::1] values):
    """Accumulate values into grad_volume through the trilinear stencil.

    Runs single-threaded in point order, corner-minor, matching the numpy
    fallback's accumulation order exactly.
    """
    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef Py_ssize_t h = grad_volume.shape[0]
    cdef Py_ssize_t w = grad_volume.shape[1]
    cdef Py_ssize_t d = grad_volume.shape[2]
    cdef Py_ssize_t i, c, ix, iy, iz
    cdef int dx, dy, dz
    cdef double x, y, z, fx, fy, fz, x0, y0, z0, weight
    cdef double wx0, wx1, wy0, wy1, wz0, wz1

    for i in range(n_pts):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        x0 = floor(x)
        y0 = floor(y)
        z0 = floor(z)
        fx = x - x0
        fy = y - y0
        fz = z - z0
        wx0 = 1.0 - fx
        wx1 = fx
        wy0 = 1.0 - fy
        wy1 = fy
        wz0 = 1.0 - fz
        wz1 = fz
        for c in range(8):
            dx = (c >> 2) & 1
            dy = (c >> 1) & 1
            dz = c & 1
            ix = <Py_ssize_t> x0 + dx
            iy = <Py_ssize_t> y0 + dy
            iz = <Py_ssize_t> z0 + dz
            if 0 <= ix < w and 0 <= iy < h and 0 <= iz < d:
                weight = (wx1 if dx else wx0) * (wy1 if dy else wy0)
                weight = weight * (wz1 if dz else wz0)
                grad_volume[iy, ix, iz] += weight * values[i]
