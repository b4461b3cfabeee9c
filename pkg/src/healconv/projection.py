"""Projections that produce spherical signals from meshes and images.

Depth projection casts a ray from every pixel center toward the origin and
records the hit distance plus the sine/cosine of the angle between the surface
normal and the ray, for the model and for its convex hull (6 channels total).
Equirectangular resampling and the polar-cap digit projection cover the image
pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import healpix
from .errors import ConfigError, ContractError, DomainError
from .mesh import TriMesh, convex_hull, raycast
from .signal import SphericalSignal

# A ray of unit length toward the origin can travel at most the sphere
# diameter before leaving the ball again; (2, 0, 0) marks "no surface".
MISS_DISTANCE = 2.0


@dataclass
class RaycastHits:
    """Per-pixel first intersections of the inward rays at one level."""

    level: int
    t: np.ndarray = field(repr=False)        # (n,) distance, inf on miss
    face: np.ndarray = field(repr=False)     # (n,) face index, -1 on miss
    hit: np.ndarray = field(repr=False)      # (n,) bool
    points: np.ndarray = field(repr=False)   # (n, 3) hit positions (0 on miss)
    normals: np.ndarray = field(repr=False)  # (n, 3) face normals (0 on miss)


def raycast_hits(mesh: TriMesh, level: int) -> RaycastHits:
    """Cast one ray per pixel center toward the origin."""
    centers = healpix.grid_level(level).centers
    t, face, hit = raycast(mesh, centers, -centers, t_max=MISS_DISTANCE)
    points = np.zeros_like(centers)
    normals = np.zeros_like(centers)
    points[hit] = centers[hit] * (1.0 - t[hit])[:, None]
    normals[hit] = mesh.face_normals[face[hit]]
    return RaycastHits(level, t, face, hit, points, normals)


def raycast_depth(mesh: TriMesh, level: int, hits: RaycastHits | None = None) -> SphericalSignal:
    """Three depth channels per pixel: (ray length, sin, cos) of the hit.

    ``cos`` is ``|n . d|`` with ``d`` the unit ray direction, so the channels
    do not depend on triangle winding; misses produce the (2, 0, 0) sentinel.
    """
    if hits is None:
        hits = raycast_hits(mesh, level)
    centers = healpix.grid_level(level).centers
    n = len(centers)
    out = np.zeros((n, 3), dtype=np.float64)
    out[:, 0] = MISS_DISTANCE
    cos = np.abs((hits.normals[hits.hit] * -centers[hits.hit]).sum(axis=1))
    cos = np.clip(cos, 0.0, 1.0)
    out[hits.hit, 0] = hits.t[hits.hit]
    out[hits.hit, 1] = np.sqrt(1.0 - cos * cos)
    out[hits.hit, 2] = cos
    return SphericalSignal(level, out)


def depth_channels(mesh: TriMesh, level: int) -> SphericalSignal:
    """Six-channel depth signal: the model's ray channels then its hull's."""
    model = raycast_depth(mesh, level)
    hull = raycast_depth(convex_hull(mesh.vertices), level)
    return SphericalSignal(level, np.concatenate([model.data, hull.data], axis=1))


# ---------------------------------------------------------------------------
# image resampling

def _bilinear_gather(img: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                     wrap_cols: bool, fill: float = 0.0) -> np.ndarray:
    """Sample ``img`` (H, W, C) at float coordinates with bilinear weights.

    Columns wrap (panoramas) or read as ``fill`` outside; rows clamp when
    wrapping (latitude) and fill otherwise.
    """
    h, w = img.shape[:2]
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[:, None]

    out = 0.0
    for dr in (0, 1):
        for dc in (0, 1):
            rr = r0 + dr
            cc = c0 + dc
            wgt = (fr if dr else 1 - fr) * (fc if dc else 1 - fc)
            if wrap_cols:
                cc = np.mod(cc, w)
                rr = np.clip(rr, 0, h - 1)
                vals = img[rr, cc]
            else:
                inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
                vals = np.where(
                    inside[:, None],
                    img[np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)],
                    fill,
                )
            out = out + wgt * vals
    return out


def equirect_resample(img: np.ndarray, level: int, mode: str = "bilinear") -> SphericalSignal:
    """Resample an equirectangular panorama onto the grid pixels.

    Image pixel (u, v) covers longitude ``2*pi*(u+0.5)/W - pi`` and colatitude
    ``pi*(v+0.5)/H``.  Bilinear wraps in longitude and clamps in latitude;
    nearest returns exact source values (use it for label maps).
    """
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ContractError(f"image must be (H, W[, C]) with H, W >= 1, got {img.shape}")
    if img.dtype.kind == "f" and not np.isfinite(img).all():
        raise ContractError("image values must be finite")
    h, w = img.shape[:2]

    centers = healpix.grid_level(level).centers
    theta = np.arccos(np.clip(centers[:, 2], -1.0, 1.0))
    lam = np.arctan2(centers[:, 1], centers[:, 0])
    cols = (lam + np.pi) * w / (2 * np.pi) - 0.5
    rows = theta * h / np.pi - 0.5

    if mode == "bilinear":
        data = _bilinear_gather(img.astype(np.float64), rows, cols, wrap_cols=True)
        return SphericalSignal(level, data.astype(np.float32))
    if mode == "nearest":
        rr = np.clip(np.round(rows).astype(np.int64), 0, h - 1)
        cc = np.mod(np.round(cols).astype(np.int64), w)
        return SphericalSignal(level, img[rr, cc])
    raise ConfigError(f"unknown resampling mode {mode!r}")


# ---------------------------------------------------------------------------
# planar digits on the polar cap

CAP_ANGLE = np.pi / 3.0      # digits occupy the 60-degree cap at the north pole
DIGIT_SIZE = 28


class DigitProjector:
    """Precomputed gnomonic map from the polar cap onto a 28x28 image.

    The image square spans the tangent plane at the north pole out to
    ``tan(60 deg)`` per axis; cap pixels sample the image bilinearly at their
    central-projection preimage, everything below the cap is zero.
    """

    def __init__(self, level: int):
        self.level = level
        centers = healpix.grid_level(level).centers
        self.cap = centers[:, 2] > np.cos(CAP_ANGLE)
        cap_centers = centers[self.cap]
        px = cap_centers[:, 0] / cap_centers[:, 2]
        py = cap_centers[:, 1] / cap_centers[:, 2]
        extent = np.tan(CAP_ANGLE)
        self.cols = (px / extent + 1.0) * 0.5 * DIGIT_SIZE - 0.5
        self.rows = (1.0 - py / extent) * 0.5 * DIGIT_SIZE - 0.5

    def project(self, img: np.ndarray) -> SphericalSignal:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != (DIGIT_SIZE, DIGIT_SIZE):
            raise ContractError(f"digit image must be 28x28, got {img.shape}")
        vals = _bilinear_gather(img[:, :, None], self.rows, self.cols, wrap_cols=False)
        out = np.zeros((healpix.n_pixels(self.level), 1), dtype=np.float32)
        out[self.cap] = vals.astype(np.float32)
        return SphericalSignal(self.level, out)

    def project_batch(self, imgs: np.ndarray) -> np.ndarray:
        """Project (N, 28, 28) images to an (N, n_pix, 1) float32 array."""
        imgs = np.asarray(imgs, dtype=np.float32)
        n = len(imgs)
        flat = imgs.reshape(n, -1)
        taps = np.zeros((len(self.rows), 4), dtype=np.int64)
        wgts = np.zeros((len(self.rows), 4), dtype=np.float32)
        r0 = np.floor(self.rows).astype(np.int64)
        c0 = np.floor(self.cols).astype(np.int64)
        fr = self.rows - r0
        fc = self.cols - c0
        k = 0
        for dr in (0, 1):
            for dc in (0, 1):
                rr = r0 + dr
                cc = c0 + dc
                inside = (rr >= 0) & (rr < DIGIT_SIZE) & (cc >= 0) & (cc < DIGIT_SIZE)
                taps[:, k] = np.where(inside, rr * DIGIT_SIZE + cc, 0)
                w = (fr if dr else 1 - fr) * (fc if dc else 1 - fc)
                wgts[:, k] = np.where(inside, w, 0.0).astype(np.float32)
                k += 1
        cap_vals = (flat[:, taps] * wgts[None]).sum(axis=2)
        out = np.zeros((n, healpix.n_pixels(self.level), 1), dtype=np.float32)
        out[:, self.cap, 0] = cap_vals
        return out


_DIGIT_PROJECTORS: dict[int, DigitProjector] = {}


def digit_projector(level: int) -> DigitProjector:
    if level not in _DIGIT_PROJECTORS:
        _DIGIT_PROJECTORS[level] = DigitProjector(level)
    return _DIGIT_PROJECTORS[level]


def project_digit(img: np.ndarray, level: int) -> SphericalSignal:
    """Place a 28x28 grayscale digit (values in [0, 1]) on the polar cap."""
    return digit_projector(level).project(img)
