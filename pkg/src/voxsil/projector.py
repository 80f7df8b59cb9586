"""Differentiable projection from voxel grids to silhouettes.

Forward pass: trilinearly resample the world-frame volume onto the
camera-frame sample points (``voxsil.geometry.SamplingGrid``), then flatten
across the disparity axis with a per-pixel max.  Backward pass: route each
pixel's upstream gradient into the argmax disparity slice and spread it
over that sample point's trilinear stencil.

The hot kernels live in a compiled extension with a pure-numpy fallback;
the fallback is selected automatically when the extension is unavailable,
or forced with VOXSIL_BACKEND=fallback.  Both produce identical results.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import SamplingGrid
from .volume import as_occupancy_array

SENTINEL_NO_MAX = -1

_FORCED = os.environ.get("VOXSIL_BACKEND", "").strip().lower()
if _FORCED not in ("", "compiled", "fallback"):
    raise ImportError(
        f"VOXSIL_BACKEND must be 'compiled' or 'fallback', got {_FORCED!r}"
    )

if _FORCED == "fallback":
    from . import _kernels_py as _kernels

    BACKEND = "fallback"
else:
    try:
        from . import _kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _FORCED == "compiled":
            raise
        from . import _kernels_py as _kernels  # type: ignore[no-redef]

        BACKEND = "fallback"

_num_threads = os.cpu_count() or 1


def backend_name() -> str:
    """Which kernel implementation is active: 'compiled' or 'fallback'."""
    return BACKEND


def set_num_threads(n: int) -> None:
    """Bound kernel parallelism; results do not depend on the thread count."""
    global _num_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def resample(volume, grid: SamplingGrid) -> np.ndarray:
    """Trilinearly sample the volume at every grid point.

    Returns the camera-frame volume, shape grid.out_dims.  Sample points
    more than one voxel outside the grid contribute zero; the output stays
    within [0, 1] whenever the input does.
    """
    vol = as_occupancy_array(volume)
    if vol.shape != grid.in_dims:
        raise ValueError(
            f"volume dims {vol.shape} do not match sampling grid in_dims {grid.in_dims}"
        )
    pts = grid.points.reshape(-1, 3)
    out = _kernels.trilinear_gather(vol, pts, _num_threads)
    return out.reshape(grid.out_dims)


def flatten_max(cam_volume: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel max across disparity slices.

    Returns (silhouette, argmax).  argmax holds the smallest slice index
    attaining the max; pixels whose column is all zeros get silhouette 0 and
    the sentinel SENTINEL_NO_MAX.
    """
    cam_volume = np.asarray(cam_volume, dtype=np.float64)
    if cam_volume.ndim != 3:
        raise ValueError(f"camera volume must be 3D, got shape {cam_volume.shape}")
    sil = cam_volume.max(axis=2)
    argmax = cam_volume.argmax(axis=2).astype(np.int64)
    argmax[np.all(cam_volume == 0.0, axis=2)] = SENTINEL_NO_MAX
    return sil, argmax


def project(volume, grid: SamplingGrid) -> tuple[np.ndarray, np.ndarray]:
    """Render a silhouette: resample then max-flatten.

    Returns (silhouette, argmax); keep the argmax map for the matching
    backward pass.
    """
    return flatten_max(resample(volume, grid))


def project_backward(
    volume, grid: SamplingGrid, argmax: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Adjoint of ``project`` with respect to voxel occupancies.

    argmax must come from the forward call on the same volume and grid (a
    stale map from different shapes is rejected).  Each pixel's upstream
    gradient flows only into its argmax slice's trilinear stencil; sentinel
    pixels propagate nothing.  Accumulation follows fixed row-major pixel
    order so repeated runs are bit-identical.
    """
    vol = as_occupancy_array(volume)
    if vol.shape != grid.in_dims:
        raise ValueError(
            f"volume dims {vol.shape} do not match sampling grid in_dims {grid.in_dims}"
        )
    out_h, out_w, out_d = grid.out_dims
    argmax = np.asarray(argmax)
    if argmax.dtype.kind not in "iu":
        raise ValueError(f"argmax must be an integer array, got dtype {argmax.dtype}")
    upstream = np.asarray(upstream, dtype=np.float64)
    if argmax.shape != (out_h, out_w):
        raise ValueError(
            f"argmax shape {argmax.shape} is stale for grid output {(out_h, out_w)}"
        )
    if upstream.shape != (out_h, out_w):
        raise ValueError(
            f"upstream gradient shape {upstream.shape} does not match {(out_h, out_w)}"
        )
    if argmax.max() >= out_d or argmax.min() < SENTINEL_NO_MAX:
        raise ValueError("argmax holds slice indices outside the grid's disparity axis")

    grad = np.zeros(grid.in_dims)
    rows, cols = np.nonzero(argmax != SENTINEL_NO_MAX)
    if rows.size:
        pts = np.ascontiguousarray(grid.points[rows, cols, argmax[rows, cols]])
        values = np.ascontiguousarray(upstream[rows, cols])
        _kernels.trilinear_scatter_add(grad, pts, values)
    return grad
