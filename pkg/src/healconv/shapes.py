"""Procedural test/demo geometry: cube, icosphere, torus, L-bracket.

All generators return watertight meshes with outward-facing windings.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_CUBE_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],   # -z
        [4, 5, 6], [4, 6, 7],   # +z
        [0, 1, 5], [0, 5, 4],   # -y
        [2, 3, 7], [2, 7, 6],   # +y
        [1, 2, 6], [1, 6, 5],   # +x
        [3, 0, 4], [3, 4, 7],   # -x
    ],
    dtype=np.int32,
)


def cube(half_width: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    s = half_width
    corners = np.array(
        [
            [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
            [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
        ]
    )
    return TriMesh(corners + np.asarray(center), _CUBE_FACES.copy())


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Icosahedron subdivided ``subdivisions`` times, projected to the sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        vlist = list(verts)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.add(vlist[a], vlist[b]) / 2.0
                m /= np.linalg.norm(m)
                cache[key] = len(vlist)
                vlist.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
        verts = vlist
    return TriMesh(radius * np.asarray(verts), np.asarray(faces, dtype=np.int32))


def torus(ring_radius: float = 0.7, tube_radius: float = 0.2,
          n_ring: int = 48, n_tube: int = 24) -> TriMesh:
    """Torus around the z-axis; rays along the axis pass through the hole."""
    u = 2 * np.pi * np.arange(n_ring) / n_ring
    v = 2 * np.pi * np.arange(n_tube) / n_tube
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = ring_radius + tube_radius * np.cos(vv)
    verts = np.stack([r * np.cos(uu), r * np.sin(uu), tube_radius * np.sin(vv)], axis=-1)
    verts = verts.reshape(-1, 3)

    def vid(i, j):
        return (i % n_ring) * n_tube + (j % n_tube)

    faces = []
    for i in range(n_ring):
        for j in range(n_tube):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    return TriMesh(verts, np.asarray(faces, dtype=np.int32))


def l_bracket(depth: float = 0.6) -> TriMesh:
    """Solid L-shaped prism (non-convex), extruded along z."""
    poly = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], dtype=np.float64)
    poly -= poly.mean(axis=0)
    tris = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]
    n = len(poly)
    h = depth / 2.0
    bottom = np.column_stack([poly, np.full(n, -h)])
    top = np.column_stack([poly, np.full(n, h)])
    verts = np.vstack([bottom, top])
    faces = []
    for a, b, c in tris:
        faces.append((a, c, b))              # bottom faces down
        faces.append((n + a, n + b, n + c))  # top faces up
    for i in range(n):
        j = (i + 1) % n
        faces += [(i, j, n + j), (i, n + j, n + i)]
    return TriMesh(verts, np.asarray(faces, dtype=np.int32))
