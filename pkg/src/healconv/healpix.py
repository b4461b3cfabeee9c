"""HEALPix sphere pixelization, nested scheme only.

The sphere is tiled into 12 base quadrilaterals, each subdivided 4-ways per
level, so a level-``l`` grid has ``12 * 4**l`` pixels.  In the nested scheme a
pixel's four children at the next level are ``{4p, 4p+1, 4p+2, 4p+3}``, which
makes hierarchy queries pure integer arithmetic.

Everything here is vectorized numpy working on int64 pixel indices and float64
unit vectors.  ``GridLevel`` bundles the per-level tables (centers, 8-slot
neighbor table, base-region map) and is cached immutably per level, so repeated
lookups during network forward passes are free.

Neighbor slots follow the fixed orientation order (SW, W, NW, N, NE, E, SE, S),
expressed in each base face's local (x, y) axes; a missing slot is -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

# Indices above this level no longer fit comfortably in 32-bit signed ints
# once multiplied by the 9-slot gather layout.
LEVEL_CAP = 13

# Ring offset (jrll) and longitude offset (jpll) of each base face, in units
# of nside and pi/4 respectively.
_JRLL = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4], dtype=np.int64)
_JPLL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7], dtype=np.int64)

# Neighbor slot order (SW, W, NW, N, NE, E, SE, S) as steps in face-local
# (x, y) coordinates.
_NB_DX = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
_NB_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)

# Face transition tables: when a neighbor step leaves a base face, _FACEARRAY
# gives the destination face (-1 where the grid has no cell, at the 3-valent
# corner vertices) and _SWAPARRAY the coordinate transform into that face's
# frame (bit 0: mirror x, bit 1: mirror y, bit 2: transpose).  Rows are indexed
# by the step octant, columns by source face (or face group for the swaps).
_FACEARRAY = np.array(
    [
        [8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9],   # S
        [5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8],       # SE
        [-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1],   # E
        [4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10],       # SW
        [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],         # center
        [1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4],           # NE
        [-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1],   # W
        [3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7],           # NW
        [2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3],       # N
    ],
    dtype=np.int64,
)
_SWAPARRAY = np.array(
    [
        [0, 0, 3],
        [0, 0, 6],
        [0, 0, 0],
        [0, 0, 5],
        [0, 0, 0],
        [5, 0, 0],
        [0, 0, 0],
        [6, 0, 0],
        [3, 0, 0],
    ],
    dtype=np.int64,
)


def _check_level(level: int) -> int:
    level = int(level)
    if not 0 <= level <= LEVEL_CAP:
        raise DomainError(f"level must be in [0, {LEVEL_CAP}], got {level}")
    return level


def n_pixels(level: int) -> int:
    """Number of pixels at ``level``: 12 * 4**level, exact integer."""
    return 12 * 4 ** _check_level(level)


def nside(level: int) -> int:
    """Side length of each base face at ``level``: 2**level."""
    return 1 << _check_level(level)


def parent(pix, level: int):
    """Parent index at ``level - 1``.  Scalars in, scalar out."""
    level = _check_level(level)
    if level == 0:
        raise DomainError("level-0 pixels have no parent")
    _check_pix(pix, level)
    return pix >> 2


def children(pix, level: int):
    """The four child indices ``{4p..4p+3}`` at ``level + 1``."""
    level = _check_level(level)
    if level + 1 > LEVEL_CAP:
        raise DomainError(f"children would exceed the level cap {LEVEL_CAP}")
    _check_pix(pix, level)
    base = np.asarray(pix, dtype=np.int64) * 4
    return np.stack([base, base + 1, base + 2, base + 3], axis=-1)


def base_region(pix, level: int):
    """Base face (0..11) containing ``pix``."""
    return np.asarray(pix, dtype=np.int64) >> (2 * _check_level(level))


def _check_pix(pix, level: int):
    pix = np.asarray(pix)
    npix = n_pixels(level)
    if pix.size and (pix.min() < 0 or pix.max() >= npix):
        raise IndexError(f"pixel index out of range [0, {npix}) at level {level}")


def _spread_bits(v):
    """Interleave zeros between the low 32 bits of ``v`` (..b1b0 -> ..0b1 0b0)."""
    v = v.astype(np.int64) & 0xFFFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def _compress_bits(v):
    """Inverse of :func:`_spread_bits`: keep even-position bits, pack them."""
    v = v.astype(np.int64) & 0x5555555555555555
    v = (v | (v >> 1)) & 0x3333333333333333
    v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
    v = (v | (v >> 16)) & 0x00000000FFFFFFFF
    return v


def _nest2xyf(pix, level: int):
    """Nested index -> (face-local x, face-local y, face number)."""
    pix = np.asarray(pix, dtype=np.int64)
    face = pix >> (2 * level)
    sub = pix & ((np.int64(1) << (2 * level)) - 1)
    return _compress_bits(sub), _compress_bits(sub >> 1), face


def _xyf2nest(ix, iy, face, level: int):
    """(face-local x, face-local y, face number) -> nested index."""
    return (np.asarray(face, dtype=np.int64) << (2 * level)) | _spread_bits(
        np.asarray(ix)
    ) | (_spread_bits(np.asarray(iy)) << 1)


def pix2vec(level: int, pix) -> np.ndarray:
    """Unit 3-vector(s) of pixel center(s), nested indexing.

    Accepts a scalar or array of pixel indices; returns shape ``(..., 3)``.
    """
    level = _check_level(level)
    scalar = np.isscalar(pix)
    pix = np.atleast_1d(np.asarray(pix, dtype=np.int64))
    _check_pix(pix, level)

    ns = np.int64(1 << level)
    ix, iy, face = _nest2xyf(pix, level)
    jr = _JRLL[face] * ns - ix - iy - 1

    nr = np.where(jr < ns, jr, np.where(jr > 3 * ns, 4 * ns - jr, ns))
    # fact2 = 1 / (3 nside^2) gives the polar-cap latitude; the equatorial
    # belt is linear in the ring index.
    fact2 = 1.0 / (3.0 * float(ns) * float(ns))
    z_north = 1.0 - (nr * nr) * fact2
    z_south = (nr * nr) * fact2 - 1.0
    z_eq = (2.0 * float(ns) - jr) * (2.0 / (3.0 * float(ns)))
    z = np.where(jr < ns, z_north, np.where(jr > 3 * ns, z_south, z_eq))

    tmp = _JPLL[face] * nr + ix - iy
    tmp = np.where(tmp < 0, tmp + 8 * nr, tmp)
    phi = (np.pi / 4.0) * (tmp / nr)

    sth = np.sqrt(np.maximum(0.0, (1.0 - z) * (1.0 + z)))
    vec = np.stack([sth * np.cos(phi), sth * np.sin(phi), z], axis=-1)
    return vec[0] if scalar else vec


def vec2pix(level: int, vec) -> np.ndarray:
    """Pixel index(es) whose cell contains the direction(s) ``vec``.

    This is true cell membership (equal-area semantics), not nearest-center
    search. Input is normalized internally; a zero vector is a domain error.
    """
    level = _check_level(level)
    vec = np.asarray(vec, dtype=np.float64)
    scalar = vec.ndim == 1
    vec = np.atleast_2d(vec)
    if vec.shape[-1] != 3:
        raise DomainError(f"directions must have 3 components, got {vec.shape}")

    norm = np.linalg.norm(vec, axis=-1)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise DomainError("direction vectors must be nonzero and finite")
    z = vec[:, 2] / norm
    phi = np.arctan2(vec[:, 1], vec[:, 0])

    ns = 1 << level
    order = level
    tt = phi * (2.0 / np.pi)
    tt = np.where(phi < 0.0, tt + 4.0, tt)
    za = np.abs(z)

    ix = np.empty(len(z), dtype=np.int64)
    iy = np.empty(len(z), dtype=np.int64)
    face = np.empty(len(z), dtype=np.int64)

    eq = za <= 2.0 / 3.0
    if np.any(eq):
        temp1 = ns * (0.5 + tt[eq])
        temp2 = ns * (z[eq] * 0.75)
        jp = (temp1 - temp2).astype(np.int64)
        jm = (temp1 + temp2).astype(np.int64)
        ifp = jp >> order
        ifm = jm >> order
        f = np.where(
            ifp == ifm,
            np.where(ifp == 4, 4, ifp + 4),
            np.where(ifp < ifm, ifp, ifm + 8),
        )
        face[eq] = f
        ix[eq] = jm & (ns - 1)
        iy[eq] = (ns - 1) - (jp & (ns - 1))

    po = ~eq
    if np.any(po):
        ntt = np.minimum(tt[po].astype(np.int64), 3)
        tp = tt[po] - ntt
        tmp = ns * np.sqrt(3.0 * (1.0 - za[po]))
        jp = np.minimum((tp * tmp).astype(np.int64), ns - 1)
        jm = np.minimum(((1.0 - tp) * tmp).astype(np.int64), ns - 1)
        north = z[po] >= 0
        face[po] = np.where(north, ntt, ntt + 8)
        ix[po] = np.where(north, ns - 1 - jm, jp)
        iy[po] = np.where(north, ns - 1 - jp, jm)

    pix = _xyf2nest(ix, iy, face, level)
    return pix[0] if scalar else pix


def neighbor_table(level: int) -> np.ndarray:
    """8-slot neighbor table for every pixel at ``level``.

    Returns an ``(n_pix, 8)`` int32 array in slot order (SW, W, NW, N, NE, E,
    SE, S); missing slots are -1.  At level 0 the raw face transitions can
    revisit a cell through different octants, so duplicate entries (and the
    pixel itself) are blanked to -1 to keep rows distinct.
    """
    level = _check_level(level)
    ns = np.int64(1 << level)
    ix, iy, face = _nest2xyf(np.arange(n_pixels(level), dtype=np.int64), level)

    out = np.empty((len(face), 8), dtype=np.int64)
    for slot in range(8):
        x = ix + _NB_DX[slot]
        y = iy + _NB_DY[slot]
        nbnum = np.full(len(face), 4, dtype=np.int64)

        lo_x = x < 0
        hi_x = x >= ns
        x = np.where(lo_x, x + ns, np.where(hi_x, x - ns, x))
        nbnum += hi_x.astype(np.int64) - lo_x.astype(np.int64)

        lo_y = y < 0
        hi_y = y >= ns
        y = np.where(lo_y, y + ns, np.where(hi_y, y - ns, y))
        nbnum += 3 * (hi_y.astype(np.int64) - lo_y.astype(np.int64))

        f2 = _FACEARRAY[nbnum, face]
        bits = _SWAPARRAY[nbnum, face >> 2]
        x2 = np.where(bits & 1, ns - x - 1, x)
        y2 = np.where(bits & 2, ns - y - 1, y)
        x3 = np.where(bits & 4, y2, x2)
        y3 = np.where(bits & 4, x2, y2)
        out[:, slot] = np.where(f2 >= 0, _xyf2nest(x3, y3, np.maximum(f2, 0), level), -1)

    if level == 0:
        # Blank self-references and duplicates introduced by the wraparound.
        pix = np.arange(12, dtype=np.int64)[:, None]
        out[out == pix] = -1
        for row in out:
            seen = set()
            for k in range(8):
                if row[k] < 0:
                    continue
                if row[k] in seen:
                    row[k] = -1
                else:
                    seen.add(row[k])
    return out.astype(np.int32)


def neighbors(level: int, pix: int) -> np.ndarray:
    """8 neighbor slots of one pixel (SW, W, NW, N, NE, E, SE, S), -1 missing."""
    _check_pix(pix, level)
    return grid_level(level).neighbor_table[int(pix)].copy()


def z_rotation_permutation(level: int, quarter_turns: int) -> np.ndarray:
    """Pixel permutation realizing a rotation by ``quarter_turns * 90`` degrees
    about the polar axis.

    The grid maps to itself under these rotations: faces advance cyclically
    within their polar/equatorial group while face-local coordinates are
    preserved.  Satisfies ``pix2vec(l, perm[p]) == R_z(90 deg * q) @ pix2vec(l, p)``.
    """
    level = _check_level(level)
    q = int(quarter_turns)
    if q not in (0, 1, 2, 3):
        raise DomainError(f"quarter_turns must be in {{0,1,2,3}}, got {quarter_turns}")
    pix = np.arange(n_pixels(level), dtype=np.int64)
    face = pix >> (2 * level)
    sub = pix & ((np.int64(1) << (2 * level)) - 1)
    new_face = (face & ~np.int64(3)) | ((face + q) & 3)
    return ((new_face << (2 * level)) | sub).astype(np.int64)


# Exact corner directions (z, phi) of the 12 base faces; phi in units of the
# face's azimuth phi_f.  North faces: pole, two flank corners at z=2/3, an
# equator corner; equatorial and south faces mirror the pattern.
def base_face_corners(face: int) -> np.ndarray:
    """The four corner directions of a base face as unit vectors, shape (4, 3)."""
    face = int(face)
    if not 0 <= face < 12:
        raise DomainError(f"face must be in [0, 12), got {face}")
    quarter = np.pi / 4.0
    if face < 4:
        phi_f = quarter + (np.pi / 2.0) * face
        zphi = [(1.0, phi_f), (2.0 / 3.0, phi_f - quarter),
                (2.0 / 3.0, phi_f + quarter), (0.0, phi_f)]
    elif face < 8:
        phi_f = (np.pi / 2.0) * (face - 4)
        zphi = [(2.0 / 3.0, phi_f), (0.0, phi_f - quarter),
                (0.0, phi_f + quarter), (-2.0 / 3.0, phi_f)]
    else:
        phi_f = quarter + (np.pi / 2.0) * (face - 8)
        zphi = [(0.0, phi_f), (-2.0 / 3.0, phi_f - quarter),
                (-2.0 / 3.0, phi_f + quarter), (-1.0, phi_f)]
    out = np.empty((4, 3))
    for i, (z, phi) in enumerate(zphi):
        s = np.sqrt(max(0.0, 1.0 - z * z))
        out[i] = (s * np.cos(phi), s * np.sin(phi), z)
    return out


def base_region_centers() -> np.ndarray:
    """Unit direction through the middle of each base face, shape (12, 3).

    Defined as the normalized mean of the face's four corner directions.
    """
    centers = np.empty((12, 3))
    for f in range(12):
        m = base_face_corners(f).mean(axis=0)
        centers[f] = m / np.linalg.norm(m)
    return centers


@dataclass(frozen=True)
class GridLevel:
    """Immutable per-level grid description.

    Attributes
    ----------
    level : int
        Subdivision level.
    n_pix : int
        ``12 * 4**level``.
    centers : (n_pix, 3) float64
        Unit pixel-center directions, nested order.
    neighbor_table : (n_pix, 8) int32
        Neighbor slots in orientation order (SW, W, NW, N, NE, E, SE, S).
    base_region : (n_pix,) int32
        Base face of each pixel (``pix >> 2*level``).
    """

    level: int
    n_pix: int
    centers: np.ndarray
    neighbor_table: np.ndarray
    base_region: np.ndarray


@lru_cache(maxsize=None)
def grid_level(level: int) -> GridLevel:
    """Build (once) and cache the :class:`GridLevel` tables for ``level``."""
    level = _check_level(level)
    npix = n_pixels(level)
    centers = pix2vec(level, np.arange(npix, dtype=np.int64))
    table = neighbor_table(level)
    region = (np.arange(npix, dtype=np.int64) >> (2 * level)).astype(np.int32)
    for arr in (centers, table, region):
        arr.setflags(write=False)
    return GridLevel(level=level, n_pix=npix, centers=centers,
                     neighbor_table=table, base_region=region)


def seven_neighbor_count(level: int) -> int:
    """Number of pixels with a missing neighbor slot at ``level``."""
    return int((grid_level(level).neighbor_table == -1).any(axis=1).sum())
