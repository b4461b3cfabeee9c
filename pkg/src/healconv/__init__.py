"""healconv: convolutional networks on HEALPix spherical grids.

Spherical signals are sampled at the pixel centers of a nested-scheme HEALPix
grid.  A precomputed per-pixel 3x3 index grid gathers each pixel's neighborhood
into a dense layout that standard 3x3 convolutions (stride 1x3) consume
directly; the nested index hierarchy makes pooling a contiguous 1x4 reduction.
"""

from .healpix import (
    GridLevel,
    LEVEL_CAP,
    base_region,
    children,
    grid_level,
    n_pixels,
    neighbors,
    nside,
    parent,
    pix2vec,
    seven_neighbor_count,
    vec2pix,
    z_rotation_permutation,
)
from .signal import SphericalSignal
from .patches import (
    PatchGrid,
    PatchTensor,
    build_patch_grid,
    gather,
    patch_grid,
    spherical_conv,
    spherical_pool,
    spherical_unpool_conv,
)

__all__ = [
    "GridLevel",
    "LEVEL_CAP",
    "PatchGrid",
    "PatchTensor",
    "SphericalSignal",
    "base_region",
    "build_patch_grid",
    "children",
    "gather",
    "grid_level",
    "n_pixels",
    "neighbors",
    "nside",
    "parent",
    "patch_grid",
    "pix2vec",
    "seven_neighbor_count",
    "spherical_conv",
    "spherical_pool",
    "spherical_unpool_conv",
    "vec2pix",
    "z_rotation_permutation",
]

__version__ = "0.1.0"
