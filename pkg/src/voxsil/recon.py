"""Silhouette-supervised voxel reconstruction by gradient descent.

The estimate is parametrized as occupancy = sigmoid(logits), which keeps
every intermediate volume a valid occupancy field without projection
steps.  Each iteration evaluates the combined loss

    lambda_proj * mean_over_views ||render(est) - silhouette||^2
        + lambda_vol * ||est - reference||^2

and applies one Adam step to the logits.  Per-view gradient terms are
accumulated in ascending view order, so runs are bit-identical for
identical inputs and configuration.

Voxels outside some selected view's frustum, and voxels no view ever
samples, are free variables the loss says nothing about; space carving
treats them as background, so their logits are pinned to a large negative
constant and they reconstruct as empty (see ``observed_mask``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels_py
from .errors import DivergenceError
from .geometry import SamplingGrid
from .projector import project, project_backward
from .volume import VoxelGrid, as_occupancy_array, voxel_centers

# Logit for voxels outside every selected view's sampled region
# (sigmoid(-40) ~ 4e-18, safely background at any threshold).
UNOBSERVED_LOGIT = -40.0


@dataclass(frozen=True)
class LossConfig:
    """Weights of the projection and volume terms; at least one must be > 0."""

    lambda_proj: float = 1.0
    lambda_vol: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lambda_proj) and np.isfinite(self.lambda_vol)):
            raise ValueError("loss weights must be finite")
        if self.lambda_proj < 0.0 or self.lambda_vol < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_proj + self.lambda_vol <= 0.0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class ReconConfig:
    """Reconstruction settings; defaults match the silhouette-only setup."""

    iterations: int = 500
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_logit: float = 0.0
    view_subset: Sequence[int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


class Adam:
    """Adam optimizer with bias-corrected first and second moments."""

    def __init__(self, shape, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0.0 or not eps > 0.0:
            raise ValueError("lr and eps must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One update; returns the new parameters."""
        if params.shape != self.m.shape or grad.shape != self.m.shape:
            raise ValueError(
                f"shape mismatch: params {params.shape}, grad {grad.shape}, "
                f"state {self.m.shape}"
            )
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.step_count)
        v_hat = self.v / (1.0 - self.beta2**self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: Adam, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Functional alias for ``Adam.step``; mutates state in place."""
    return state.step(params, grad)


def projection_loss(
    estimate, silhouettes: Sequence[np.ndarray], grids: Sequence[SamplingGrid]
) -> tuple[float, np.ndarray]:
    """Mean over views of the summed squared silhouette residual, plus gradient."""
    if len(silhouettes) != len(grids):
        raise ValueError(
            f"got {len(silhouettes)} silhouettes but {len(grids)} sampling grids"
        )
    if len(silhouettes) == 0:
        raise ValueError("projection loss needs at least one view")

    est = as_occupancy_array(estimate)
    n = len(silhouettes)
    loss = 0.0
    grad = np.zeros(est.shape)
    for sil, grid in zip(silhouettes, grids):
        sil = np.asarray(sil, dtype=np.float64)
        pred, argmax = project(est, grid)
        if sil.shape != pred.shape:
            raise ValueError(
                f"silhouette shape {sil.shape} does not match rendered {pred.shape}"
            )
        residual = pred - sil
        loss += float(np.sum(residual * residual))
        grad += project_backward(est, grid, argmax, 2.0 * residual)
    return loss / n, grad / n


def volume_loss(estimate, reference) -> tuple[float, np.ndarray]:
    """Summed squared voxel residual against a reference volume, plus gradient."""
    est = as_occupancy_array(estimate)
    ref = as_occupancy_array(reference)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    diff = est - ref
    return float(np.sum(diff * diff)), 2.0 * diff


class CombinedLoss(NamedTuple):
    total: float
    grad: np.ndarray
    proj: float  # unweighted projection term (0.0 when lambda_proj == 0)
    vol: float  # unweighted volume term (0.0 when lambda_vol == 0)


def combined_loss(
    estimate,
    silhouettes: Sequence[np.ndarray],
    grids: Sequence[SamplingGrid],
    reference=None,
    config: LossConfig = LossConfig(),
) -> CombinedLoss:
    """Weighted combination of projection and volume losses.

    Terms with zero weight are skipped entirely (and reported as 0.0).
    A positive volume weight requires a reference volume.
    """
    if config.lambda_vol > 0.0 and reference is None:
        raise ValueError("lambda_vol > 0 requires a reference volume")

    est = as_occupancy_array(estimate)
    total = 0.0
    grad = np.zeros(est.shape)
    l_proj = 0.0
    l_vol = 0.0
    if config.lambda_proj > 0.0:
        l_proj, g = projection_loss(est, silhouettes, grids)
        total += config.lambda_proj * l_proj
        grad += config.lambda_proj * g
    if config.lambda_vol > 0.0:
        l_vol, g = volume_loss(est, reference)
        total += config.lambda_vol * l_vol
        grad += config.lambda_vol * g
    return CombinedLoss(total, grad, l_proj, l_vol)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _frustum_mask(grid: SamplingGrid) -> np.ndarray:
    """Voxels whose center projects into the view's image and disparity slab.

    Mirrors the visual-hull in-bounds test (nearest-pixel rounding) using
    the transform recorded on the grid.
    """
    centers = voxel_centers(grid.in_dims).reshape(-1, 3)
    hom = np.concatenate([centers, np.ones((centers.shape[0], 1))], axis=1)
    proj = hom @ grid.transform.matrix.T
    proj = proj[:, :3] / proj[:, 3:4]
    depth = proj[:, 2]
    ok = depth > 0.0
    img_h, img_w, _ = grid.out_dims
    d_min, d_max = grid.disparity_range
    with np.errstate(divide="ignore", invalid="ignore"):
        px = np.floor(proj[:, 0] / depth + 0.5)
        py = np.floor(proj[:, 1] / depth + 0.5)
        disp = 1.0 / depth
    ok &= (px >= 0) & (px < img_w) & (py >= 0) & (py < img_h)
    ok &= (disp >= d_min) & (disp <= d_max)
    return ok.reshape(grid.in_dims)


def observed_mask(grids: Sequence[SamplingGrid]) -> np.ndarray:
    """Voxels the given views can say anything about.

    A voxel is observed iff (a) at least one view samples it with nonzero
    trilinear weight (otherwise it couples to no pixel and carries zero
    gradient forever) and (b) its center lies inside the frustum and
    disparity slab of every view whose grid records a transform.  Space
    carving treats anything outside a view's frustum as background, so
    reconstruction pins unobserved voxels to empty.
    """
    if len(grids) == 0:
        raise ValueError("need at least one sampling grid")
    touched_any = np.zeros(grids[0].in_dims, dtype=bool)
    mask = np.ones(grids[0].in_dims, dtype=bool)
    for grid in grids:
        if grid.in_dims != grids[0].in_dims:
            raise ValueError("sampling grids disagree on the input volume dims")
        touched = np.zeros(grid.in_dims)
        pts = grid.points.reshape(-1, 3)
        _kernels_py.trilinear_scatter_add(touched, pts, np.ones(pts.shape[0]))
        touched_any |= touched > 0.0
        if grid.transform is not None:
            mask &= _frustum_mask(grid)
    return mask & touched_any


class ReconResult(NamedTuple):
    volume: VoxelGrid
    # One (total, proj, vol) row per iteration, evaluated before that
    # iteration's parameter update.
    history: list[tuple[float, float, float]]


def reconstruct(
    silhouettes: Sequence[np.ndarray],
    grids: Sequence[SamplingGrid],
    config: ReconConfig,
    reference=None,
) -> ReconResult:
    """Recover a voxel volume from multi-view silhouettes by gradient descent.

    silhouettes[i] pairs with grids[i]; config.view_subset (default: all
    views) selects which pairs participate.  Returns the final occupancy
    volume and the per-iteration loss history.
    """
    if len(silhouettes) != len(grids):
        raise ValueError(
            f"got {len(silhouettes)} silhouettes but {len(grids)} sampling grids"
        )
    if config.view_subset is None:
        subset = list(range(len(silhouettes)))
    else:
        subset = list(config.view_subset)
    if not subset:
        raise ValueError("view subset is empty")
    for i in subset:
        if not 0 <= i < len(silhouettes):
            raise ValueError(f"view index {i} out of range 0..{len(silhouettes) - 1}")

    sils = [np.asarray(silhouettes[i], dtype=np.float64) for i in subset]
    sel_grids = [grids[i] for i in subset]
    dims = sel_grids[0].in_dims

    logits = np.full(dims, float(config.init_logit))
    logits[~observed_mask(sel_grids)] = UNOBSERVED_LOGIT

    adam = Adam(dims, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history: list[tuple[float, float, float]] = []
    for iteration in range(config.iterations):
        estimate = sigmoid(logits)
        result = combined_loss(estimate, sils, sel_grids, reference, config.loss)
        if not np.isfinite(result.total):
            raise DivergenceError(
                f"loss became non-finite at iteration {iteration}"
            )
        history.append((result.total, result.proj, result.vol))
        grad_logits = result.grad * estimate * (1.0 - estimate)
        logits = adam.step(logits, grad_logits)

    return ReconResult(VoxelGrid(sigmoid(logits)), history)
