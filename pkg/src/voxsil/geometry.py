"""Camera model: orbit viewpoints, perspective transforms, dense sampling grids.

Conventions:

  World frame: right-handed, +z up.  The object volume occupies the cube
  [-0.5, 0.5]^3 regardless of voxel resolution (see ``voxsil.volume``).

  Camera frame: x right, y down, z forward along the optical axis.  A
  camera orbits the grid center at (azimuth, elevation, distance) and looks
  at the center with world-up +z.

  Image frame: pixel centers at integer coordinates 0..W-1 / 0..H-1,
  x along columns, y along rows, (0, 0) top-left.

The 4x4 perspective transform maps a homogeneous world point (x, y, z, 1)
to (x~, y~, z~, w); after dividing by w, pixel coordinates are
(x~/z~, y~/z~) and disparity is d = 1/z~.  The inverse direction
reconstructs (x_t*z~, y_t*z~, z~, 1) from pixel coordinates and disparity
and maps it back through the cached inverse matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegeneratePoseError, SingularMatrixError
from .volume import world_to_index

# Bounding-sphere radius of the unit object cube [-0.5, 0.5]^3.
UNIT_CUBE_RADIUS = math.sqrt(3.0) / 2.0

# Default orbit rig: 24 azimuths at 15 degree steps, elevation 30 degrees,
# distance 2 world units.
DEFAULT_NUM_VIEWS = 24
DEFAULT_ELEVATION_DEG = 30.0
DEFAULT_DISTANCE = 2.0

# Default focal length is FOCAL_FILL_FRACTION * image_w * distance: the
# unit cube's central cross-section then spans ~90% of the image width at
# the orbit distance.
FOCAL_FILL_FRACTION = 0.86

_DET_EPS = 1e-12


@dataclass(frozen=True)
class Viewpoint:
    """Orbit camera pose: azimuth/elevation in radians, distance in world units."""

    azimuth: float
    elevation: float
    distance: float

    def __post_init__(self):
        if not math.isfinite(self.azimuth) or not math.isfinite(self.elevation):
            raise ValueError("azimuth and elevation must be finite")
        if not self.distance > 0.0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        if abs(self.elevation) >= math.pi / 2:
            raise DegeneratePoseError(
                f"elevation {self.elevation} looks along world-up; "
                "must lie strictly inside (-pi/2, pi/2)"
            )
        object.__setattr__(self, "azimuth", self.azimuth % (2.0 * math.pi))

    @classmethod
    def from_degrees(cls, azimuth_deg, elevation_deg, distance) -> "Viewpoint":
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg), distance)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal length and principal point in pixel units."""

    focal: float
    image_w: int
    image_h: int
    cx: float
    cy: float

    def __post_init__(self):
        if not self.focal > 0.0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError(f"image dims must be >= 1, got {self.image_w}x{self.image_h}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.focal, 0.0, self.cx],
                [0.0, self.focal, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )


def build_intrinsics(focal: float, image_w: int, image_h: int) -> CameraIntrinsics:
    """Intrinsics with the principal point at the image center."""
    return CameraIntrinsics(
        focal=focal,
        image_w=image_w,
        image_h=image_h,
        cx=(image_w - 1) / 2.0,
        cy=(image_h - 1) / 2.0,
    )


def default_intrinsics(
    image_w: int, image_h: int, distance: float = DEFAULT_DISTANCE
) -> CameraIntrinsics:
    """Default focal framing the unit cube at the given orbit distance."""
    return build_intrinsics(FOCAL_FILL_FRACTION * image_w * distance, image_w, image_h)


@dataclass(frozen=True)
class PerspectiveTransform:
    """4x4 world-to-camera perspective matrix with its cached inverse."""

    matrix: np.ndarray
    inverse: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("matrix", "inverse"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.shape != (4, 4):
                raise ValueError(f"{name} must be 4x4, got {arr.shape}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "PerspectiveTransform":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise ValueError(f"transform matrix must be 4x4, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("transform matrix contains non-finite values")
        det = np.linalg.det(matrix)
        if abs(det) < _DET_EPS:
            raise SingularMatrixError(f"transform matrix is singular (det={det:.3e})")
        return cls(matrix=matrix, inverse=np.linalg.inv(matrix))


def extrinsics_from_viewpoint(
    viewpoint: Viewpoint, target=(0.0, 0.0, 0.0)
) -> tuple[np.ndarray, np.ndarray]:
    """Look-at extrinsics (R, t) for an orbit camera.

    The camera center is target + distance * (cos e cos a, cos e sin a, sin e).
    R maps world directions to the camera frame (rows: right, down, forward)
    and t = -R @ center, so p_cam = R @ p_world + t.
    """
    target = np.asarray(target, dtype=np.float64)
    a, e = viewpoint.azimuth, viewpoint.elevation
    offset = np.array(
        [math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)]
    )
    center = target + viewpoint.distance * offset

    forward = target - center
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise DegeneratePoseError("camera forward axis is parallel to world-up")
    right = right / norm
    up = np.cross(right, forward)

    # Rows (right, -up, forward) give a proper rotation with image y down.
    rot = np.stack([right, -up, forward])
    t = -rot @ center
    return rot, t


def compose_transform(
    intrinsics: CameraIntrinsics, rotation: np.ndarray, translation: np.ndarray
) -> PerspectiveTransform:
    """Compose intrinsics and extrinsics into a 4x4 perspective transform."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = np.asarray(translation, dtype=np.float64)
    if rotation.shape != (3, 3) or translation.shape != (3,):
        raise ValueError("rotation must be 3x3 and translation a 3-vector")
    if np.abs(rotation @ rotation.T - np.eye(3)).max() > 1e-9:
        raise ValueError("rotation matrix is not orthonormal")

    k4 = np.eye(4)
    k4[:3, :3] = intrinsics.matrix
    e4 = np.eye(4)
    e4[:3, :3] = rotation
    e4[:3, 3] = translation
    return PerspectiveTransform.from_matrix(k4 @ e4)


def transform_from_viewpoint(
    viewpoint: Viewpoint, intrinsics: CameraIntrinsics, target=(0.0, 0.0, 0.0)
) -> PerspectiveTransform:
    """Perspective transform of an orbit camera looking at the target."""
    rot, t = extrinsics_from_viewpoint(viewpoint, target)
    return compose_transform(intrinsics, rot, t)


def camera_to_world(transform: PerspectiveTransform, points: np.ndarray) -> np.ndarray:
    """Map camera-frame samples (x_t, y_t, d) back to world coordinates.

    points has shape (..., 3) holding pixel coordinates and disparity.  The
    homogeneous camera point (x_t/d, y_t/d, 1/d, 1) is pushed through the
    cached inverse matrix and dehomogenized.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {points.shape}")
    disparity = points[..., 2]
    if np.any(disparity <= 0.0):
        raise ValueError("disparity must be positive")

    depth = 1.0 / disparity
    hom = np.empty(points.shape[:-1] + (4,))
    hom[..., 0] = points[..., 0] * depth
    hom[..., 1] = points[..., 1] * depth
    hom[..., 2] = depth
    hom[..., 3] = 1.0
    world = hom @ transform.inverse.T
    return world[..., :3] / world[..., 3:4]


def world_to_camera(transform: PerspectiveTransform, points: np.ndarray) -> np.ndarray:
    """Map world points to camera samples (x_t, y_t, d); depth must be positive."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {points.shape}")
    hom = np.concatenate([points, np.ones(points.shape[:-1] + (1,))], axis=-1)
    proj = hom @ transform.matrix.T
    proj = proj[..., :3] / proj[..., 3:4]
    depth = proj[..., 2]
    if np.any(depth <= 0.0):
        raise ValueError("point projects to non-positive depth")
    out = np.empty_like(proj)
    out[..., 0] = proj[..., 0] / depth
    out[..., 1] = proj[..., 1] / depth
    out[..., 2] = 1.0 / depth
    return out


def disparity_range(
    distance: float, radius: float = UNIT_CUBE_RADIUS
) -> tuple[float, float]:
    """Disparity slab (d_min, d_max) covering a bounding sphere of the volume.

    radius is half the world-space diagonal of the grid's bounding box; the
    default covers the full unit object cube.  The camera must sit outside
    the bounding sphere.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if distance <= radius:
        raise ValueError(
            f"camera distance {distance} is inside the bounding sphere "
            f"(radius {radius}); the volume is not fully in front of the camera"
        )
    return 1.0 / (distance + radius), 1.0 / (distance - radius)


@dataclass(frozen=True)
class SamplingGrid:
    """Sample points of the camera-frame volume, in voxel-index coordinates.

    points[n', m', l'] holds the (x, y, z) index coordinates (see
    ``voxsil.volume``) of the world point sampled for output voxel
    (n', m', l').  in_dims are the dims of the voxel grid the points are
    expressed against.  transform records the perspective transform the
    grid was built from (None for hand-built grids); the reconstruction
    engine uses it to carve voxels that fall outside a view's frustum.
    """

    points: np.ndarray
    in_dims: tuple[int, int, int]
    disparity_range: tuple[float, float]
    transform: "PerspectiveTransform | None" = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.points, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise ValueError(f"points must have shape (H', W', D', 3), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)
        object.__setattr__(self, "in_dims", tuple(int(v) for v in self.in_dims))

    @property
    def out_dims(self) -> tuple[int, int, int]:
        return self.points.shape[:3]  # type: ignore[return-value]


def disparity_samples(d_range: tuple[float, float], num: int) -> np.ndarray:
    """Disparity of each output slice: linear in disparity, slice 0 farthest."""
    d_min, d_max = float(d_range[0]), float(d_range[1])
    if not 0.0 < d_min <= d_max:
        raise ValueError(f"need 0 < d_min <= d_max, got ({d_min}, {d_max})")
    if num < 1:
        raise ValueError(f"need at least one slice, got {num}")
    if num == 1:
        return np.array([(d_min + d_max) / 2.0])
    return d_min + (d_max - d_min) * np.arange(num) / (num - 1)


def build_sampling_grid(
    transform: PerspectiveTransform,
    out_dims: tuple[int, int, int],
    d_range: tuple[float, float],
    in_dims: tuple[int, int, int],
) -> SamplingGrid:
    """Precompute world sample points for every camera-frame output voxel.

    Output voxel (n', m', l') samples pixel (x_t, y_t) = (m', n') at
    disparity d_min + (d_max - d_min) * l' / (D' - 1) (the midpoint when
    D' == 1).  The world points are converted to voxel-index coordinates of
    the in_dims input grid, ready for trilinear resampling.  Grids are
    immutable and meant to be built once per view and reused.
    """
    out_dims = tuple(int(v) for v in out_dims)
    in_dims = tuple(int(v) for v in in_dims)
    if len(out_dims) != 3 or any(v < 1 for v in out_dims):
        raise ValueError(f"out_dims must be three integers >= 1, got {out_dims}")
    if len(in_dims) != 3 or any(v < 1 for v in in_dims):
        raise ValueError(f"in_dims must be three integers >= 1, got {in_dims}")

    out_h, out_w, out_d = out_dims
    rows, cols, slices = np.meshgrid(
        np.arange(out_h), np.arange(out_w), np.arange(out_d), indexing="ij"
    )
    disp = disparity_samples(d_range, out_d)

    cam = np.empty(out_dims + (3,))
    cam[..., 0] = cols
    cam[..., 1] = rows
    cam[..., 2] = disp[slices]

    world = camera_to_world(transform, cam)
    points = world_to_index(world, in_dims)
    return SamplingGrid(
        points=points,
        in_dims=in_dims,
        disparity_range=(float(d_range[0]), float(d_range[1])),
        transform=transform,
    )


def index_identity_transform(
    dims: tuple[int, int, int], d_range: tuple[float, float]
) -> PerspectiveTransform:
    """Transform whose sampling grid is the identity on voxel indices.

    With out_dims == in_dims == dims and the given disparity range, the
    grid built from this transform samples output voxel (n', m', l') exactly
    at index coordinates (m', n', l').  Useful for pipeline sanity checks:
    resampling through it reproduces the input volume.  Requires D >= 2 and
    d_min < d_max.
    """
    h, w, d = (int(v) for v in dims)
    d_min, d_max = float(d_range[0]), float(d_range[1])
    if d < 2:
        raise ValueError("identity transform needs D >= 2")
    if not 0.0 < d_min < d_max:
        raise ValueError(f"need 0 < d_min < d_max, got ({d_min}, {d_max})")

    # Derived by requiring inverse(theta) @ (x_t z~, y_t z~, z~, 1) to be
    # proportional to (world(x_t), world(y_t), world(l'), 1) with the world
    # z coordinate affine in disparity (slices are linear in d, and z~ d = 1
    # makes that affine in the homogeneous inputs).
    span = d_max - d_min
    beta = (d - 1) / (span * d)
    gamma = (0.5 - d_min * (d - 1) / span) / d - 0.5
    inverse = np.array(
        [
            [1.0 / w, 0.0, 0.5 / w - 0.5, 0.0],
            [0.0, 1.0 / h, 0.5 / h - 0.5, 0.0],
            [0.0, 0.0, gamma, beta],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    return PerspectiveTransform.from_matrix(np.linalg.inv(inverse))


def default_rig(
    num_views: int = DEFAULT_NUM_VIEWS,
    elevation_deg: float = DEFAULT_ELEVATION_DEG,
    distance: float = DEFAULT_DISTANCE,
) -> list[Viewpoint]:
    """Evenly spaced azimuth orbit at fixed elevation and distance."""
    if num_views < 1:
        raise ValueError(f"need at least one view, got {num_views}")
    step = 360.0 / num_views
    return [
        Viewpoint.from_degrees(i * step, elevation_deg, distance)
        for i in range(num_views)
    ]


class RigView(NamedTuple):
    """One fully materialized view of a camera rig."""

    viewpoint: Viewpoint
    intrinsics: CameraIntrinsics
    transform: PerspectiveTransform
    disparity_range: tuple[float, float]


def build_rig(
    viewpoints,
    image_w: int,
    image_h: int,
    focal: float | None = None,
) -> list[RigView]:
    """Materialize transforms and disparity slabs for a whole rig.

    When focal is None each view gets the default framing for its own orbit
    distance; an explicit focal applies to every view.
    """
    views = []
    for vp in viewpoints:
        if focal is None:
            intr = default_intrinsics(image_w, image_h, vp.distance)
        else:
            intr = build_intrinsics(focal, image_w, image_h)
        transform = transform_from_viewpoint(vp, intr)
        views.append(RigView(vp, intr, transform, disparity_range(vp.distance)))
    return views


def rig_sampling_grids(
    views: list[RigView],
    vol_dims: tuple[int, int, int],
    depth_slices: int | None = None,
) -> list[SamplingGrid]:
    """Sampling grids for materialized rig views.

    depth_slices defaults to the image width, giving a cubic camera volume
    for square images.
    """
    grids = []
    for view in views:
        slices = depth_slices if depth_slices is not None else view.intrinsics.image_w
        grids.append(
            build_sampling_grid(
                view.transform,
                (view.intrinsics.image_h, view.intrinsics.image_w, slices),
                view.disparity_range,
                vol_dims,
            )
        )
    return grids
