"""Software renderer: per-base-region Lambert views and their re-projection.

One perspective camera per base region looks at the origin from along the
region's center direction; six fixed point lights sit at +-2 on each axis.
Triangles are z-buffered with screen-space barycentrics and perspective-correct
depth.  Re-projection samples a hit point's gray value from its region's
render when the depth buffer agrees, falling back to direct shading when the
point is occluded or out of frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import healpix
from .errors import ConfigError, ContractError
from .mesh import TriMesh
from .projection import RaycastHits, raycast_hits
from .signal import SphericalSignal

LIGHT_DISTANCE = 2.0
LIGHTS = LIGHT_DISTANCE * np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.float64,
)

DEFAULT_RESOLUTION = 128
DEFAULT_DISTANCE = 3.0
DEFAULT_FOV_DEG = 40.0
DEPTH_TOLERANCE = 1e-2


def lambert_shade(points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Mean clamped Lambert response of the six axis lights, in [0, 1]."""
    to_light = LIGHTS[None, :, :] - points[:, None, :]
    to_light /= np.linalg.norm(to_light, axis=2, keepdims=True)
    contrib = np.maximum(0.0, (to_light * normals[:, None, :]).sum(axis=2))
    return np.clip(contrib.sum(axis=1) / len(LIGHTS), 0.0, 1.0)


@dataclass
class Camera:
    position: np.ndarray
    rotation: np.ndarray = field(repr=False)   # world -> camera, rows (right, up, fwd)
    fov: float
    resolution: int

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (points - self.position) @ self.rotation.T

    def to_screen(self, points: np.ndarray):
        """(col, row, depth) of world points; depth is camera-space z."""
        cam = self.to_camera(np.atleast_2d(points))
        f = 1.0 / np.tan(self.fov / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ndc_x = f * cam[:, 0] / cam[:, 2]
            ndc_y = f * cam[:, 1] / cam[:, 2]
        col = (ndc_x + 1.0) * 0.5 * self.resolution - 0.5
        row = (1.0 - ndc_y) * 0.5 * self.resolution - 0.5
        return col, row, cam[:, 2]


def look_at(position, target=(0.0, 0.0, 0.0), fov_deg=DEFAULT_FOV_DEG,
            resolution=DEFAULT_RESOLUTION) -> Camera:
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd /= np.linalg.norm(fwd)
    up_hint = np.array([0.0, 0.0, 1.0])
    if abs(fwd @ up_hint) > 0.999:
        up_hint = np.array([1.0, 0.0, 0.0])
    up = up_hint - (up_hint @ fwd) * fwd
    up /= np.linalg.norm(up)
    right = np.cross(up, fwd)
    rot = np.stack([right, up, fwd])
    return Camera(position, rot, np.deg2rad(fov_deg), int(resolution))


@dataclass
class RenderSet:
    """Twelve gray views (one per base region) with their depth buffers."""

    resolution: int
    images: np.ndarray = field(repr=False)   # (12, R, R) float32, background 0
    depths: np.ndarray = field(repr=False)   # (12, R, R) float32, background inf
    cameras: list = field(repr=False, default_factory=list)


def rasterize(mesh: TriMesh, camera: Camera):
    """Z-buffered flat-shaded rasterization; returns (gray, depth) buffers."""
    res = camera.resolution
    gray = np.zeros((res, res), dtype=np.float32)
    depth = np.full((res, res), np.inf, dtype=np.float32)

    verts = mesh.vertices
    col, row, z = camera.to_screen(verts)
    for fi in range(mesh.n_faces):
        i0, i1, i2 = mesh.faces[fi]
        zs = np.array([z[i0], z[i1], z[i2]])
        if (zs < 1e-3).any():
            continue  # behind or grazing the camera plane
        xs = np.array([col[i0], col[i1], col[i2]])
        ys = np.array([row[i0], row[i1], row[i2]])
        x_lo = max(int(np.floor(xs.min())), 0)
        x_hi = min(int(np.ceil(xs.max())), res - 1)
        y_lo = max(int(np.floor(ys.min())), 0)
        y_hi = min(int(np.ceil(ys.max())), res - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        area = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (xs[2] - xs[0]) * (ys[1] - ys[0])
        if abs(area) < 1e-12:
            continue
        px, py = np.meshgrid(
            np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1), indexing="xy"
        )
        w0 = ((xs[1] - px) * (ys[2] - py) - (xs[2] - px) * (ys[1] - py)) / area
        w1 = ((xs[2] - px) * (ys[0] - py) - (xs[0] - px) * (ys[2] - py)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        inv_z = w0 / zs[0] + w1 / zs[1] + w2 / zs[2]
        z_px = 1.0 / inv_z
        closer = inside & (z_px < depth[y_lo : y_hi + 1, x_lo : x_hi + 1])
        if not closer.any():
            continue
        # perspective-correct world position for shading
        p0, p1, p2 = verts[i0] / zs[0], verts[i1] / zs[1], verts[i2] / zs[2]
        world = (
            w0[..., None] * p0 + w1[..., None] * p1 + w2[..., None] * p2
        ) * z_px[..., None]
        shade = lambert_shade(
            world[closer], np.broadcast_to(mesh.face_normals[fi], (int(closer.sum()), 3))
        )
        sub_depth = depth[y_lo : y_hi + 1, x_lo : x_hi + 1]
        sub_gray = gray[y_lo : y_hi + 1, x_lo : x_hi + 1]
        sub_depth[closer] = z_px[closer]
        sub_gray[closer] = shade
    return gray, depth


def render_views(mesh: TriMesh, resolution: int = DEFAULT_RESOLUTION,
                 distance: float = DEFAULT_DISTANCE,
                 fov_deg: float = DEFAULT_FOV_DEG) -> RenderSet:
    """Render the mesh from all 12 base-region directions."""
    if resolution < 16:
        raise ConfigError(f"render resolution must be >= 16, got {resolution}")
    centers = healpix.base_region_centers()
    images = np.zeros((12, resolution, resolution), dtype=np.float32)
    depths = np.full((12, resolution, resolution), np.inf, dtype=np.float32)
    cameras = []
    for r in range(12):
        cam = look_at(distance * centers[r], fov_deg=fov_deg, resolution=resolution)
        gray, depth = rasterize(mesh, cam)
        images[r] = gray
        depths[r] = depth
        cameras.append(cam)
    return RenderSet(resolution, images, depths, cameras)


def render_projection(mesh: TriMesh, level: int, renders: RenderSet,
                      hits: RaycastHits | None = None,
                      depth_tolerance: float = DEPTH_TOLERANCE,
                      return_stats: bool = False):
    """Gray value per spherical pixel, sampled from its region's render.

    Each pixel's model hit point is projected into the camera of the pixel's
    base region; when the depth buffer confirms visibility the gray image is
    sampled bilinearly, otherwise the hit point is shaded directly.  Pixels
    whose rays miss the mesh stay 0.
    """
    if hits is None:
        hits = raycast_hits(mesh, level)
    if hits.level != level:
        raise ContractError(f"hits computed at level {hits.level}, wanted {level}")
    res = renders.resolution
    if renders.images.shape != (12, res, res):
        raise ContractError("render set images do not match its resolution")

    grid = healpix.grid_level(level)
    out = np.zeros((grid.n_pix, 1), dtype=np.float32)
    stats = {"miss": int((~hits.hit).sum()), "sampled": 0, "fallback": 0}
    for r in range(12):
        sel = np.flatnonzero((grid.base_region == r) & hits.hit)
        if not len(sel):
            continue
        cam = renders.cameras[r]
        col, row, z = cam.to_screen(hits.points[sel])
        in_frame = (
            (z > 1e-3)
            & (col >= 0.0) & (col <= res - 1.0)
            & (row >= 0.0) & (row <= res - 1.0)
        )
        # the gray sample reads a 2x2 texel footprint; the point is visible if
        # any of those depths matches (surfaces steep in screen space change
        # depth by more than the tolerance within a single texel)
        c0 = np.clip(np.floor(col).astype(np.int64), 0, res - 1)
        r0 = np.clip(np.floor(row).astype(np.int64), 0, res - 1)
        match = np.zeros(len(sel), dtype=bool)
        for dr in (0, 1):
            for dc in (0, 1):
                buf = renders.depths[r][
                    np.minimum(r0 + dr, res - 1), np.minimum(c0 + dc, res - 1)
                ]
                match |= np.isfinite(buf) & (np.abs(buf - z) <= depth_tolerance)
        visible = in_frame & match

        vis_idx = sel[visible]
        if len(vis_idx):
            c0 = np.floor(col[visible]).astype(np.int64)
            r0 = np.floor(row[visible]).astype(np.int64)
            fc = col[visible] - c0
            fr = row[visible] - r0
            img = renders.images[r]
            c1 = np.minimum(c0 + 1, res - 1)
            r1 = np.minimum(r0 + 1, res - 1)
            val = (
                img[r0, c0] * (1 - fr) * (1 - fc)
                + img[r0, c1] * (1 - fr) * fc
                + img[r1, c0] * fr * (1 - fc)
                + img[r1, c1] * fr * fc
            )
            out[vis_idx, 0] = val
            stats["sampled"] += len(vis_idx)

        fb_idx = sel[~visible]
        if len(fb_idx):
            out[fb_idx, 0] = lambert_shade(hits.points[fb_idx], hits.normals[fb_idx])
            stats["fallback"] += len(fb_idx)

    signal = SphericalSignal(level, out)
    if return_stats:
        return signal, stats
    return signal


def render_based_projection(mesh: TriMesh, level: int,
                            resolution: int = DEFAULT_RESOLUTION,
                            hits: RaycastHits | None = None) -> SphericalSignal:
    """Convenience wrapper: render the 12 views and re-project in one call."""
    renders = render_views(mesh, resolution=resolution)
    return render_projection(mesh, level, renders, hits=hits)
