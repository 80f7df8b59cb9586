"""Voxel grids, the world<->index convention, synthetic shapes, IoU, space carving.

A voxel grid has dims (H, W, D) and is stored row-major as data[n, m, l]
where n indexes rows (world y), m columns (world x) and l depth slices
(world z).  The grid always occupies the world cube [-0.5, 0.5]^3, so the
center of voxel (n, m, l) sits at

    ((m + 0.5) / W - 0.5,  (n + 0.5) / H - 0.5,  (l + 0.5) / D - 0.5).

Continuous "index coordinates" are the inverse of that map: index (x, y, z)
corresponds to fractional voxel positions along (m, n, l).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SHAPE_KINDS = ("cube", "sphere", "cross", "chair", "hollow_box")

# Synthetic-shape proportions, in world units (cube is [-0.5, 0.5]^3).
SPHERE_RADIUS = 0.35
CUBE_HALF_EXTENT = 0.25        # solid cube spans the central half of the volume
CROSS_HALF_THICKNESS = 1.0 / 16.0  # arms are dims/8 voxels thick
HOLLOW_BOX_WALL_VOXELS = 2
CHAIR_HALF_FOOTPRINT = 0.25
CHAIR_SEAT_Z = (-0.0625, 0.0)
CHAIR_BACK_X = (0.1875, 0.25)
CHAIR_BACK_Z = (0.0, 0.3125)
CHAIR_LEG_SIDE = 0.0625
CHAIR_LEG_Z = (-0.3125, -0.0625)


def world_to_index(points: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Map world coordinates (x, y, z) to continuous voxel indices (m, n, l)."""
    h, w, d = dims
    points = np.asarray(points, dtype=np.float64)
    out = np.empty_like(points)
    out[..., 0] = (points[..., 0] + 0.5) * w - 0.5
    out[..., 1] = (points[..., 1] + 0.5) * h - 0.5
    out[..., 2] = (points[..., 2] + 0.5) * d - 0.5
    return out


def index_to_world(points: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Map continuous voxel indices (m, n, l) to world coordinates (x, y, z)."""
    h, w, d = dims
    points = np.asarray(points, dtype=np.float64)
    out = np.empty_like(points)
    out[..., 0] = (points[..., 0] + 0.5) / w - 0.5
    out[..., 1] = (points[..., 1] + 0.5) / h - 0.5
    out[..., 2] = (points[..., 2] + 0.5) / d - 0.5
    return out


def voxel_centers(dims: tuple[int, int, int]) -> np.ndarray:
    """World coordinates of every voxel center, shape (H, W, D, 3)."""
    h, w, d = dims
    n, m, l = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
    idx = np.stack([m, n, l], axis=-1).astype(np.float64)
    return index_to_world(idx, dims)


@dataclass(frozen=True)
class VoxelGrid:
    """Immutable 3D occupancy field with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"voxel grid must be 3D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("voxel grid contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("voxel occupancies must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @classmethod
    def zeros(cls, dims: tuple[int, int, int]) -> "VoxelGrid":
        return cls(np.zeros(dims, dtype=np.float64))


def as_occupancy_array(volume) -> np.ndarray:
    """Coerce a VoxelGrid or array-like to a contiguous (H, W, D) float64 array."""
    data = volume.data if isinstance(volume, VoxelGrid) else volume
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3D occupancy array, got shape {arr.shape}")
    return arr


def binarize(volume, threshold: float = 0.5) -> np.ndarray:
    """Threshold occupancies to a boolean volume; values >= threshold are solid."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return as_occupancy_array(volume) >= threshold


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two boolean volumes.

    Two empty volumes compare as identical: IoU is defined to be 1.0.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def _coords(dims):
    h, w, d = dims
    y = (np.arange(h) + 0.5) / h - 0.5
    x = (np.arange(w) + 0.5) / w - 0.5
    z = (np.arange(d) + 0.5) / d - 0.5
    return (
        y[:, None, None],
        x[None, :, None],
        z[None, None, :],
    )


def synth_shape(kind: str, dims) -> VoxelGrid:
    """Deterministic binary-valued test shape on an (H, W, D) grid.

    dims may be an int (cubic grid) or an (H, W, D) triple; each dimension
    must be at least 8.
    """
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * 3
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or any(v < 8 for v in dims):
        raise ValueError(f"dims must be three integers >= 8, got {dims}")
    if kind not in SHAPE_KINDS:
        raise ValueError(f"unknown kind: {kind!r} (choose from {', '.join(SHAPE_KINDS)})")

    y, x, z = _coords(dims)
    if kind == "sphere":
        occ = x * x + y * y + z * z <= SPHERE_RADIUS**2
    elif kind == "cube":
        occ = (
            (np.abs(x) <= CUBE_HALF_EXTENT)
            & (np.abs(y) <= CUBE_HALF_EXTENT)
            & (np.abs(z) <= CUBE_HALF_EXTENT)
        )
    elif kind == "cross":
        t = CROSS_HALF_THICKNESS
        bar_x = (np.abs(y) <= t) & (np.abs(z) <= t)
        bar_y = (np.abs(x) <= t) & (np.abs(z) <= t)
        bar_z = (np.abs(x) <= t) & (np.abs(y) <= t)
        occ = bar_x | bar_y | bar_z
    elif kind == "hollow_box":
        h, w, d = dims
        outer = (
            (np.abs(x) <= CUBE_HALF_EXTENT)
            & (np.abs(y) <= CUBE_HALF_EXTENT)
            & (np.abs(z) <= CUBE_HALF_EXTENT)
        )
        # Erosion of an axis-aligned box == the box shrunk by the wall
        # thickness on every face, expressed here in world units.
        wx = HOLLOW_BOX_WALL_VOXELS / w
        wy = HOLLOW_BOX_WALL_VOXELS / h
        wz = HOLLOW_BOX_WALL_VOXELS / d
        inner = (
            (np.abs(x) <= CUBE_HALF_EXTENT - wx)
            & (np.abs(y) <= CUBE_HALF_EXTENT - wy)
            & (np.abs(z) <= CUBE_HALF_EXTENT - wz)
        )
        occ = outer & ~inner
    else:  # chair
        fp = CHAIR_HALF_FOOTPRINT
        in_footprint = (np.abs(x) <= fp) & (np.abs(y) <= fp)
        seat = in_footprint & (z >= CHAIR_SEAT_Z[0]) & (z <= CHAIR_SEAT_Z[1])
        back = (
            (x >= CHAIR_BACK_X[0])
            & (x <= CHAIR_BACK_X[1])
            & (np.abs(y) <= fp)
            & (z >= CHAIR_BACK_Z[0])
            & (z <= CHAIR_BACK_Z[1])
        )
        leg_xy = (np.abs(np.abs(x) - fp + CHAIR_LEG_SIDE / 2) <= CHAIR_LEG_SIDE / 2) & (
            np.abs(np.abs(y) - fp + CHAIR_LEG_SIDE / 2) <= CHAIR_LEG_SIDE / 2
        )
        legs = leg_xy & (z >= CHAIR_LEG_Z[0]) & (z <= CHAIR_LEG_Z[1])
        occ = seat | back | legs

    out = np.zeros(dims, dtype=np.float64)
    out[np.broadcast_to(occ, dims)] = 1.0
    return VoxelGrid(out)


def rotate90_z(volume, quarter_turns: int):
    """Rotate a volume by quarter_turns * 90 degrees counterclockwise about +z.

    Counterclockwise is the right-hand rule seen from +z (world +x rotates
    onto +y).  Requires a square horizontal cross-section (H == W).  The
    result is an exact index permutation of the input.
    """
    arr = volume.data if isinstance(volume, VoxelGrid) else np.asarray(volume)
    h, w = arr.shape[0], arr.shape[1]
    if h != w:
        raise ValueError(f"rotate90_z needs H == W, got H={h} W={w}")
    out = arr
    for _ in range(quarter_turns % 4):
        # (n', m', l) <- (H-1-m', n', l): +x axis content moves to +y.
        out = out.transpose(1, 0, 2)[:, ::-1, :]
    out = np.ascontiguousarray(out)
    return VoxelGrid(out) if isinstance(volume, VoxelGrid) else out


def _as_range_list(disparity_range, n: int) -> list[tuple[float, float]]:
    dr = np.asarray(disparity_range, dtype=np.float64)
    if dr.shape == (2,):
        return [(float(dr[0]), float(dr[1]))] * n
    if dr.shape == (n, 2):
        return [(float(lo), float(hi)) for lo, hi in dr]
    raise ValueError(f"disparity_range must be one (min, max) pair or {n} pairs")


def visual_hull(
    silhouettes: Sequence[np.ndarray],
    transforms: Sequence,
    dims: tuple[int, int, int],
    disparity_range,
) -> np.ndarray:
    """Space-carve a boolean volume from binarized silhouettes.

    A voxel survives iff for every view its center projects with positive
    depth, its disparity lies in [d_min, d_max], and the projection rounds
    to an in-bounds foreground pixel.  Silhouettes are binarized at 0.5.

    disparity_range is one (d_min, d_max) pair shared by all views, or one
    pair per view.
    """
    if len(silhouettes) != len(transforms):
        raise ValueError(
            f"got {len(silhouettes)} silhouettes but {len(transforms)} transforms"
        )
    if len(silhouettes) == 0:
        raise ValueError("visual_hull needs at least one view")
    ranges = _as_range_list(disparity_range, len(silhouettes))

    centers = voxel_centers(dims).reshape(-1, 3)
    hom = np.concatenate([centers, np.ones((centers.shape[0], 1))], axis=1)
    keep = np.ones(centers.shape[0], dtype=bool)

    for sil, transform, (d_min, d_max) in zip(silhouettes, transforms, ranges):
        sil = np.asarray(sil, dtype=np.float64)
        if sil.ndim != 2:
            raise ValueError(f"silhouette must be 2D, got shape {sil.shape}")
        fg = sil >= 0.5
        img_h, img_w = sil.shape

        proj = hom @ transform.matrix.T
        proj = proj[:, :3] / proj[:, 3:4]
        depth = proj[:, 2]
        ok = depth > 0.0

        with np.errstate(divide="ignore", invalid="ignore"):
            px = np.floor(proj[:, 0] / depth + 0.5).astype(np.int64)
            py = np.floor(proj[:, 1] / depth + 0.5).astype(np.int64)
            disp = 1.0 / depth
        ok &= (px >= 0) & (px < img_w) & (py >= 0) & (py < img_h)
        ok &= (disp >= d_min) & (disp <= d_max)

        hit = np.zeros(centers.shape[0], dtype=bool)
        hit[ok] = fg[py[ok], px[ok]]
        keep &= hit

    return keep.reshape(dims)
