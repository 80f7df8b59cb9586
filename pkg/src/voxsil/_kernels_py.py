"""Pure-numpy trilinear gather/scatter kernels.

Fallback for the compiled extension in ``voxsil._kernels``.  Both backends
evaluate the hat kernel max(0, 1 - |x|) per axis over the 8 surrounding
voxels, accumulate the corner contributions in the same fixed order, and
treat corners outside the grid as zeros, so results agree with the
compiled kernels operation for operation.
"""

import numpy as np


def _corner_terms(shape, pts):
    """Per-corner flat indices, weights and validity for the 8-voxel stencil.

    pts is (N, 3) in index coordinates ordered (x, y, z) = (column, row,
    slice).  Yields corners in the fixed order c = 0..7 with
    dx = c >> 2 & 1, dy = c >> 1 & 1, dz = c & 1.
    """
    h, w, d = shape
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    x0 = np.floor(x)
    y0 = np.floor(y)
    z0 = np.floor(z)
    fx, fy, fz = x - x0, y - y0, z - z0
    ix0, iy0, iz0 = x0.astype(np.int64), y0.astype(np.int64), z0.astype(np.int64)

    wx = (1.0 - fx, fx)
    wy = (1.0 - fy, fy)
    wz = (1.0 - fz, fz)
    for c in range(8):
        dx, dy, dz = (c >> 2) & 1, (c >> 1) & 1, c & 1
        ix, iy, iz = ix0 + dx, iy0 + dy, iz0 + dz
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h) & (iz >= 0) & (iz < d)
        weight = (wx[dx] * wy[dy]) * wz[dz]
        flat = (iy * w + ix) * d + iz
        yield np.where(valid, flat, 0), weight, valid


def trilinear_gather(volume, pts, num_threads=1):
    """Interpolate volume at each index-space point; out-of-grid reads are 0."""
    flat_vol = volume.reshape(-1)
    out = np.zeros(pts.shape[0])
    for idx, weight, valid in _corner_terms(volume.shape, pts):
        values = np.where(valid, flat_vol[idx], 0.0)
        out += weight * values
    return out


def trilinear_scatter_add(grad_volume, pts, values):
    """Accumulate values into grad_volume through the trilinear stencil.

    Contributions are applied in point order, corner-minor, so repeated runs
    are bit-identical.  Out-of-grid corners are dropped.
    """
    n = pts.shape[0]
    flat = grad_volume.reshape(-1)
    idx8 = np.zeros((n, 8), dtype=np.int64)
    contrib8 = np.zeros((n, 8))
    for c, (idx, weight, valid) in enumerate(_corner_terms(grad_volume.shape, pts)):
        idx8[:, c] = idx
        contrib8[:, c] = np.where(valid, weight * values, 0.0)
    np.add.at(flat, idx8.reshape(-1), contrib8.reshape(-1))
