"""Triangle meshes: normalization, convex hulls, and ray casting.

Meshes are indexed triangle soups with per-face unit normals.  Degenerate
(zero-area) faces are dropped at construction.  The ray caster is the
determinant-based intersection test, vectorized over rays x triangles in
chunks; ties between coincident hits resolve to the lowest face index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DomainError

_PARALLEL_EPS = 1e-9
# slack on the barycentric bounds: hits exactly on a shared edge must not be
# rejected by both adjacent triangles (the grid's symmetry planes make such
# hits structural, not rare)
_BARY_EPS = 1e-9


@dataclass
class TriMesh:
    vertices: np.ndarray = field(repr=False)   # (V, 3) float64
    faces: np.ndarray = field(repr=False)      # (F, 3) int32
    face_normals: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int32)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DomainError(f"vertices must be (V, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise DomainError(f"faces must be (F, 3), got {self.faces.shape}")
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise DomainError("face index out of range")
        if self.face_normals is None:
            self._drop_degenerate_and_compute_normals()

    def _drop_degenerate_and_compute_normals(self):
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        area2 = np.linalg.norm(cross, axis=1)
        keep = area2 > 1e-14
        self.dropped_faces = int((~keep).sum())
        self.faces = f[keep]
        self.face_normals = cross[keep] / area2[keep][:, None]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """Vertex coordinates per face, shape (F, 3, 3)."""
        return self.vertices[self.faces]


def normalize_mesh(mesh: TriMesh) -> TriMesh:
    """Center on the bounding-box midpoint and scale the farthest vertex to
    unit radius.  Idempotent; a collapsed vertex cloud is a degenerate input."""
    if mesh.n_vertices < 3:
        raise DomainError("mesh needs at least 3 vertices")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    centered = mesh.vertices - 0.5 * (lo + hi)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius < 1e-12:
        raise DomainError("all vertices coincide; cannot normalize")
    return TriMesh(centered / radius, mesh.faces.copy())


def convex_hull(points: np.ndarray) -> TriMesh:
    """Watertight triangulated convex hull with outward normals.

    Qhull does the heavy lifting; windings are flipped wherever the geometric
    normal disagrees with the facet's outward half-space.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 4:
        raise DomainError("convex hull needs at least 4 points in 3-D")
    try:
        hull = ConvexHull(points)
    except Exception as exc:
        raise DomainError(f"degenerate input for convex hull: {exc}") from exc

    used = np.unique(hull.simplices)
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = points[used]
    faces = remap[hull.simplices]

    v = verts[faces]
    geo = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    flip = (geo * hull.equations[:, :3]).sum(axis=1) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriMesh(verts, faces)


def raycast(mesh: TriMesh, origins: np.ndarray, directions: np.ndarray,
            t_max: float = np.inf, chunk: int = 256):
    """First intersections of rays with the mesh.

    Returns ``(t, face_idx, hit)``: hit distance (inf on miss), index of the
    intersected face (-1 on miss), and the hit mask.  Directions need not be
    normalized; ``t`` is in units of the direction length.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(origins)
    tri = mesh.triangles()
    v0 = tri[:, 0]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]

    t_out = np.full(n, np.inf)
    face_out = np.full(n, -1, dtype=np.int64)
    if mesh.n_faces == 0:
        return t_out, face_out, np.zeros(n, dtype=bool)

    for lo in range(0, n, chunk):
        o = origins[lo : lo + chunk][:, None, :]      # (R, 1, 3)
        d = directions[lo : lo + chunk][:, None, :]
        pvec = np.cross(d, e2[None, :, :])            # (R, F, 3)
        det = (e1[None] * pvec).sum(axis=2)
        ok = np.abs(det) > _PARALLEL_EPS
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0[None]
        u = (tvec * pvec).sum(axis=2) * inv
        qvec = np.cross(tvec, e1[None, :, :])
        vv = (d * qvec).sum(axis=2) * inv
        t = (e2[None] * qvec).sum(axis=2) * inv
        ok &= (
            (u >= -_BARY_EPS)
            & (vv >= -_BARY_EPS)
            & (u + vv <= 1 + _BARY_EPS)
            & (t > _PARALLEL_EPS)
            & (t <= t_max)
        )
        t = np.where(ok, t, np.inf)
        # argmin returns the first (lowest face index) among tied minima
        best = t.argmin(axis=1)
        rows = np.arange(t.shape[0])
        tbest = t[rows, best]
        hit = np.isfinite(tbest)
        t_out[lo : lo + chunk] = tbest
        face_out[lo : lo + chunk] = np.where(hit, best, -1)
    return t_out, face_out, np.isfinite(t_out)
