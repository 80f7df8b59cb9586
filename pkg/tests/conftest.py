import numpy as np
import pytest

from voxsil.geometry import build_rig, default_rig, rig_sampling_grids


def quantize_pgm(sil):
    """8-bit round trip a silhouette the way the PGM files do."""
    return np.clip(np.floor(255.0 * sil + 0.5), 0.0, 255.0) / 255.0


@pytest.fixture(scope="session")
def default_views_32():
    """Materialized default 24-view rig at 32x32."""
    return build_rig(default_rig(), 32, 32)


def grids_for(views, dims, depth_slices=None):
    return rig_sampling_grids(views, dims, depth_slices=depth_slices)
