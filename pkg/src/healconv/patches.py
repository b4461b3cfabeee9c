"""Per-pixel 3x3 index grids and the gather that feeds standard convolutions.

For every pixel the 8 neighbor slots plus the pixel itself are arranged as a
3x3 block in image reading order::

    [NW  N  NE]
    [ W  C   E]
    [SW  S  SE]

Gathering a spherical signal through these blocks yields a ``3 x (3*n_pix)``
image whose column triple ``3p..3p+2`` holds pixel ``p``'s neighborhood, so a
standard 3x3 convolution with horizontal stride 3 produces exactly one output
per pixel.  Missing slots (-1) gather the zero vector, so the convolution
kernel needs no masking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import healpix
from .errors import ContractError, DomainError
from .signal import SphericalSignal

# neighbor_table slot -> patch slot, mapping (SW,W,NW,N,NE,E,SE,S) onto the
# row-major 3x3 layout above (center slot 4 is filled separately).
_PATCH_SLOT_OF_NEIGHBOR = (6, 3, 0, 1, 2, 5, 8, 7)


class PatchGrid:
    """Immutable per-pixel 3x3 gather indices for one level.

    Attributes
    ----------
    level : int
    rows : (n_pix, 9) int32
        Row-major 3x3 source indices; -1 marks a missing slot.
    """

    def __init__(self, level: int, rows: np.ndarray):
        self.level = int(level)
        self.rows = rows
        self.rows.setflags(write=False)
        self._missing_flat = None
        self._scatter_table = None

    @property
    def n_pix(self) -> int:
        return self.rows.shape[0]

    def missing_flat(self) -> np.ndarray:
        """Flat indices (into ``rows.ravel()``) of the -1 slots, cached."""
        if self._missing_flat is None:
            self._missing_flat = np.flatnonzero(self.rows.ravel() < 0)
        return self._missing_flat

    def scatter_table(self) -> np.ndarray:
        """Inverse of the gather, as a padded index table for routing gradients.

        Returns an ``(n_pix, 9)`` table: for pixel ``q``, row ``q`` holds the
        flat patch-entry indices ``p * 9 + slot`` with ``rows[p, slot] == q``,
        padded with the sentinel ``n_pix * 9`` (callers gather from an array
        extended by one zero row).  A pixel is read at most 9 times, and at
        least once via its own center slot, so 9 columns always suffice.
        """
        if self._scatter_table is None:
            flat = self.rows.ravel()
            valid = np.flatnonzero(flat >= 0)
            order = valid[np.argsort(flat[valid], kind="stable")]
            dst = flat[order]
            counts = np.bincount(dst, minlength=self.n_pix)
            if counts.max() > 9 or counts.min() < 1:
                raise AssertionError("gather multiplicity out of range; grid is corrupt")
            sources = np.full((self.n_pix, 9), self.rows.size, dtype=np.int64)
            col = np.concatenate([np.arange(c) for c in counts])
            sources[dst, col] = order
            self._scatter_table = sources
        return self._scatter_table


@dataclass
class PatchTensor:
    """Gathered neighborhoods as a ``(3, 3*n_pix, C)`` dense image."""

    level: int
    data: np.ndarray = field(repr=False)

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def build_patch_grid(grid: healpix.GridLevel) -> PatchGrid:
    """Assemble the per-pixel 3x3 index grid from a level's neighbor table."""
    n = grid.n_pix
    rows = np.empty((n, 9), dtype=np.int32)
    nt = grid.neighbor_table
    for k, slot in enumerate(_PATCH_SLOT_OF_NEIGHBOR):
        rows[:, slot] = nt[:, k]
    rows[:, 4] = np.arange(n, dtype=np.int32)
    return PatchGrid(grid.level, rows)


def patch_grid(level: int) -> PatchGrid:
    """Patch grid for ``level`` (cached per level)."""
    key = int(level)
    got = _PATCH_GRIDS.get(key)
    if got is None:
        got = _PATCH_GRIDS[key] = build_patch_grid(healpix.grid_level(key))
    return got


_PATCH_GRIDS: dict[int, PatchGrid] = {}


def gather_patches(data: np.ndarray, grid: "PatchGrid") -> np.ndarray:
    """Gather ``(..., n_pix, C)`` data into ``(..., n_pix, 9, C)`` patches.

    Missing slots produce zero vectors.  The source array is not modified.
    """
    rows = grid.rows
    out = data[..., rows, :]
    missing = grid.missing_flat()
    if len(missing):
        shape = out.shape
        out = out.reshape(shape[:-3] + (rows.size, shape[-1]))
        out[..., missing, :] = 0
        out = out.reshape(shape)
    return out


def gather(signal: SphericalSignal, tgrid: PatchGrid) -> PatchTensor:
    """Materialize the ``3 x (3*n_pix) x C`` patch tensor for ``signal``."""
    if signal.level != tgrid.level:
        raise ContractError(
            f"signal level {signal.level} != patch grid level {tgrid.level}"
        )
    n, c = signal.data.shape
    patches = gather_patches(signal.data, tgrid)             # (n, 9, C)
    out = patches.reshape(n, 3, 3, c).transpose(1, 0, 2, 3).reshape(3, 3 * n, c)
    return PatchTensor(signal.level, np.ascontiguousarray(out))


def spherical_conv(signal: SphericalSignal, weights: np.ndarray,
                   bias: np.ndarray | None = None) -> SphericalSignal:
    """3x3 convolution over the gathered layout; one output per pixel.

    ``weights`` has shape ``(3, 3, C_in, C_out)``; slot (ky, kx) weights the
    patch entry at that position, so ``out[p] = sum_slot W[slot] @ in[rows[p,
    slot]] + bias`` with missing slots contributing zero.
    """
    weights = np.asarray(weights)
    if weights.ndim != 4 or weights.shape[:2] != (3, 3):
        raise ContractError(f"weights must be (3, 3, C_in, C_out), got {weights.shape}")
    if weights.shape[2] != signal.channels:
        raise ContractError(
            f"kernel C_in {weights.shape[2]} != signal channels {signal.channels}"
        )
    if not np.isfinite(weights).all():
        raise ContractError("kernel weights must be finite")
    c_in, c_out = weights.shape[2], weights.shape[3]
    grid = patch_grid(signal.level)
    patches = gather_patches(signal.data, grid)              # (n, 9, C_in)
    out = patches.reshape(-1, 9 * c_in) @ weights.reshape(9 * c_in, c_out)
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (c_out,):
            raise ContractError(f"bias must have shape ({c_out},), got {bias.shape}")
        out = out + bias
    return SphericalSignal(signal.level, out)


def spherical_pool(signal: SphericalSignal, return_argmax: bool = False):
    """1x4 max pooling over nested sibling groups; level drops by one.

    With ``return_argmax`` the winning child offset in ``0..3`` is returned as
    well (ties resolve to the lowest child index), which the backward pass uses
    to route gradients to the max child only.
    """
    if signal.level < 1:
        raise DomainError("cannot pool below level 0")
    n, c = signal.data.shape
    grouped = signal.data.reshape(n // 4, 4, c)
    arg = grouped.argmax(axis=1)
    pooled = np.take_along_axis(grouped, arg[:, None, :], axis=1)[:, 0, :]
    out = SphericalSignal(signal.level - 1, pooled)
    if return_argmax:
        return out, arg
    return out


def spherical_unpool_conv(signal: SphericalSignal, weights: np.ndarray,
                          bias: np.ndarray | None = None) -> SphericalSignal:
    """Transposed 1x4 convolution along the nested axis; level rises by one.

    ``weights`` has shape ``(4, C_in, C_out)``: child ``4p + k`` receives
    ``in[p] @ weights[k] + bias``.
    """
    if signal.level + 1 > healpix.LEVEL_CAP:
        raise DomainError(f"unpooling beyond the level cap {healpix.LEVEL_CAP}")
    weights = np.asarray(weights)
    if weights.ndim != 3 or weights.shape[0] != 4 or weights.shape[1] != signal.channels:
        raise ContractError(
            f"weights must be (4, C_in={signal.channels}, C_out), got {weights.shape}"
        )
    n = signal.n_pix
    c_out = weights.shape[2]
    # (n, C_in) @ (C_in, 4*C_out) -> (n, 4, C_out) -> (4n, C_out)
    w = weights.transpose(1, 0, 2).reshape(signal.channels, 4 * c_out)
    out = (signal.data @ w).reshape(4 * n, c_out)
    if bias is not None:
        out = out + np.asarray(bias)
    return SphericalSignal(signal.level + 1, out)
