import numpy as np
import pytest

from healconv import healpix as hp
from healconv import shapes
from healconv.errors import ConfigError, ContractError
from healconv.mesh import TriMesh, normalize_mesh
from healconv.projection import raycast_hits
from healconv.render import (
    LIGHTS,
    lambert_shade,
    look_at,
    rasterize,
    render_projection,
    render_views,
)


class TestLambert:
    def test_axis_face_catches_one_light(self):
        # a +x-facing point on the x axis sees only the +x light head-on
        point = np.array([[0.5, 0.0, 0.0]])
        normal = np.array([[1.0, 0.0, 0.0]])
        assert lambert_shade(point, normal)[0] == pytest.approx(1 / 6, abs=1e-12)

    def test_clamped_to_unit(self):
        point = np.zeros((1, 3))
        normal = np.array([[0.0, 0.0, 1.0]])
        val = lambert_shade(point, normal)[0]
        assert 0.0 <= val <= 1.0


class TestCamera:
    def test_look_at_origin(self):
        cam = look_at([3.0, 0.0, 0.0], resolution=64)
        col, row, z = cam.to_screen(np.array([[0.0, 0.0, 0.0]]))
        assert z[0] == pytest.approx(3.0)
        assert col[0] == pytest.approx(31.5)
        assert row[0] == pytest.approx(31.5)

    def test_up_is_world_z(self):
        cam = look_at([3.0, 0.0, 0.0], resolution=64)
        _, row_hi, _ = cam.to_screen(np.array([[0.0, 0.0, 0.5]]))
        _, row_lo, _ = cam.to_screen(np.array([[0.0, 0.0, -0.5]]))
        assert row_hi[0] < row_lo[0]  # +z maps to smaller row index (screen up)


class TestRasterize:
    def test_background_exactly_zero(self):
        mesh = shapes.cube(0.3)
        cam = look_at([3.0, 0.0, 0.0], resolution=64)
        gray, depth = rasterize(mesh, cam)
        bg = ~np.isfinite(depth)
        assert bg.any()
        assert not gray[bg].any()

    def test_single_facing_triangle_analytic(self):
        # triangle at the origin facing +z, camera on +z: the centroid pixel's
        # shading follows the closed-form six-light Lambert sum
        verts = np.array([[-0.2, -0.2, 0.0], [0.2, -0.2, 0.0], [0.0, 0.25, 0.0]])
        mesh = TriMesh(verts, np.array([[0, 1, 2]]))
        assert mesh.face_normals[0] @ [0, 0, 1] > 0
        cam = look_at([0.0, 0.0, 3.0], resolution=96)
        gray, depth = rasterize(mesh, cam)
        centroid = verts.mean(axis=0)
        col, row, z = cam.to_screen(centroid[None])
        r, c = int(round(row[0])), int(round(col[0]))
        assert np.isfinite(depth[r, c])
        assert depth[r, c] == pytest.approx(3.0, abs=1e-3)
        expect = lambert_shade(centroid[None], np.array([[0.0, 0.0, 1.0]]))[0]
        assert gray[r, c] == pytest.approx(expect, abs=1e-3)

    def test_depth_buffer_keeps_nearest(self):
        near = shapes.cube(0.2, center=(0.5, 0.0, 0.0))
        far = shapes.cube(0.4, center=(-0.5, 0.0, 0.0))
        both = TriMesh(
            np.vstack([near.vertices, far.vertices]),
            np.vstack([near.faces, far.faces + near.n_vertices]),
        )
        cam = look_at([3.0, 0.0, 0.0], resolution=64)
        _, depth = rasterize(both, cam)
        assert depth[32, 32] == pytest.approx(3.0 - 0.7, abs=1e-2)


class TestRenderViews:
    def test_twelve_views_cover_regions(self):
        rs = render_views(shapes.icosphere(3), resolution=48)
        assert rs.images.shape == (12, 48, 48)
        assert (rs.images >= 0).all() and (rs.images <= 1).all()
        # the unit sphere fills part of every view
        assert (np.isfinite(rs.depths).any(axis=(1, 2))).all()

    def test_low_resolution_rejected(self):
        with pytest.raises(ConfigError):
            render_views(shapes.cube(1.0), resolution=8)

    def test_icosphere_symmetric_under_camera_ring_rotation(self):
        # rotating the camera ring by 90 degrees maps views onto each other
        rs = render_views(shapes.icosphere(4), resolution=64)
        for group in (range(0, 4), range(4, 8), range(8, 12)):
            group = list(group)
            for a, b in zip(group, group[1:] + group[:1]):
                diff = rs.images[a] - rs.images[b]
                rms = float(np.sqrt((diff**2).mean()))
                assert rms <= 0.02 * max(rs.images[a].max(), 1e-9)


class TestRenderProjection:
    def test_convex_mesh_never_falls_back(self):
        mesh = normalize_mesh(shapes.cube(1.0))
        hits = raycast_hits(mesh, 3)
        rs = render_views(mesh, resolution=128)
        sig, stats = render_projection(mesh, 3, rs, hits=hits, return_stats=True)
        assert stats["fallback"] == 0
        assert stats["miss"] == 0

    def test_cube_matches_direct_lambert(self):
        mesh = normalize_mesh(shapes.cube(1.0))
        hits = raycast_hits(mesh, 3)
        rs = render_views(mesh, resolution=128)
        sig = render_projection(mesh, 3, rs, hits=hits)
        direct = lambert_shade(hits.points[hits.hit], hits.normals[hits.hit])
        assert np.abs(sig.data[hits.hit, 0] - direct).max() <= 0.02

    def test_torus_poles_are_zero(self):
        mesh = shapes.torus()
        hits = raycast_hits(mesh, 3)
        rs = render_views(mesh, resolution=64)
        sig = render_projection(mesh, 3, rs, hits=hits)
        centers = hp.grid_level(3).centers
        polar = np.abs(centers[:, 2]) > 0.995
        assert not sig.data[polar, 0].any()

    def test_nonconvex_falls_back_where_occluded(self):
        mesh = normalize_mesh(shapes.l_bracket())
        hits = raycast_hits(mesh, 3)
        rs = render_views(mesh, resolution=96)
        sig, stats = render_projection(mesh, 3, rs, hits=hits, return_stats=True)
        assert stats["fallback"] > 0
        # fallback pixels carry direct shading, never zero-by-accident
        assert (sig.data[hits.hit, 0] >= 0).all()

    def test_resolution_mismatch_rejected(self):
        mesh = shapes.cube(1.0)
        rs = render_views(mesh, resolution=32)
        rs.images = rs.images[:, :16, :16]
        with pytest.raises(ContractError):
            render_projection(mesh, 2, rs)

    def test_level_mismatch_rejected(self):
        mesh = shapes.cube(1.0)
        hits = raycast_hits(mesh, 2)
        rs = render_views(mesh, resolution=32)
        with pytest.raises(ContractError):
            render_projection(mesh, 3, rs, hits=hits)
