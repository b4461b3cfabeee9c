import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from healconv import healpix as hp
from healconv import io as hio
from healconv.errors import ParseError
from healconv.nn.checkpoint import read_checkpoint, write_checkpoint
from healconv.patches import gather, patch_grid
from healconv.signal import SphericalSignal

TETRA_OFF = """OFF
4 4 6
0 0 0
1 0 0
0 1 0
0 0 1
3 0 1 2
3 0 1 3
3 0 2 3
3 1 2 3
"""

CUBE_QUAD_OFF = """OFF
8 6 12
-1 -1 -1
1 -1 -1
1 1 -1
-1 1 -1
-1 -1 1
1 -1 1
1 1 1
-1 1 1
4 0 1 2 3
4 4 5 6 7
4 0 1 5 4
4 2 3 7 6
4 1 2 6 5
4 3 0 4 7
"""


class TestOff:
    def test_tetrahedron(self):
        mesh = hio.parse_off(TETRA_OFF)
        assert mesh.n_vertices == 4
        assert mesh.n_faces == 4

    def test_quad_cube_fan_triangulated(self):
        mesh = hio.parse_off(CUBE_QUAD_OFF)
        assert mesh.n_vertices == 8
        assert mesh.n_faces == 12

    def test_glued_header_variant(self):
        glued = TETRA_OFF.replace("OFF\n4 4 6", "OFF4 4 6")
        a = hio.parse_off(TETRA_OFF)
        b = hio.parse_off(glued)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.faces, b.faces)

    def test_comments_ignored(self):
        commented = TETRA_OFF.replace("OFF\n", "OFF\n# a comment\n")
        assert hio.parse_off(commented).n_faces == 4

    def test_bad_header(self):
        with pytest.raises(ParseError):
            hio.parse_off("PLY\n0 0 0\n")

    def test_out_of_range_index_reports_line(self):
        bad = TETRA_OFF.replace("3 1 2 3\n", "3 1 2 9\n")
        with pytest.raises(ParseError) as err:
            hio.parse_off(bad)
        assert "line" in str(err.value)

    def test_truncated_vertices(self):
        truncated = "\n".join(TETRA_OFF.splitlines()[:4])
        with pytest.raises(ParseError):
            hio.parse_off(truncated)

    def test_trailing_garbage_rejected(self):
        with pytest.raises(ParseError):
            hio.parse_off(TETRA_OFF + "\n17\n")

    def test_degenerate_faces_dropped_with_count(self):
        degen = TETRA_OFF.replace("3 1 2 3\n", "3 1 1 3\n")
        mesh = hio.parse_off(degen)
        assert mesh.n_faces == 3
        assert mesh.dropped_faces == 1


class TestIdx:
    def test_images_roundtrip(self, tmp_path, rng):
        images = (rng.random((7, 28, 28)) * 255).astype(np.uint8)
        path = tmp_path / "imgs.idx"
        hio.write_idx_images(path, images)
        loaded = hio.load_idx(path)
        assert loaded.shape == (7, 28, 28)
        assert loaded.dtype == np.float32
        assert np.array_equal(loaded, images.astype(np.float32) / 255.0)

    def test_value_255_maps_to_one(self, tmp_path):
        images = np.full((1, 28, 28), 255, dtype=np.uint8)
        path = tmp_path / "one.idx"
        hio.write_idx_images(path, images)
        assert hio.load_idx(path).max() == 1.0

    def test_labels_roundtrip(self, tmp_path, rng):
        labels = rng.integers(0, 10, 31)
        path = tmp_path / "labels.idx"
        hio.write_idx_labels(path, labels)
        assert np.array_equal(hio.load_idx(path), labels)

    def test_header_arithmetic(self):
        import struct

        payload = bytes(range(256)) * (1568 // 256) + bytes(1568 % 256)
        data = struct.pack(">IIII", 0x803, 2, 28, 28) + payload[:1568]
        assert hio.parse_idx(data).shape == (2, 28, 28)

    def test_truncated_payload(self):
        import struct

        data = struct.pack(">IIII", 0x803, 2, 28, 28) + b"\0" * 100
        with pytest.raises(ParseError):
            hio.parse_idx(data)

    def test_bad_magic(self):
        with pytest.raises(ParseError):
            hio.parse_idx(b"\x00\x00\x09\x99" + b"\0" * 16)


class TestSphs:
    def test_f32_roundtrip_bit_exact(self, tmp_path, rng):
        sig = SphericalSignal(3, rng.standard_normal((768, 6)).astype(np.float32))
        path = tmp_path / "sig.sphs"
        hio.write_sphs(path, sig)
        loaded = hio.read_sphs(path)
        assert loaded.level == 3
        assert loaded.data.dtype == np.float32
        assert np.array_equal(loaded.data, sig.data)

    def test_u8_labels_roundtrip(self, tmp_path, rng):
        sig = SphericalSignal(2, rng.integers(0, 13, (192, 1)).astype(np.uint8))
        path = tmp_path / "lab.sphs"
        hio.write_sphs(path, sig)
        loaded = hio.read_sphs(path)
        assert loaded.data.dtype == np.uint8
        assert np.array_equal(loaded.data, sig.data)

    def test_u8_multichannel_rejected(self, rng):
        sig = SphericalSignal(1, rng.random((48, 2)).astype(np.float32))
        sig.data = sig.data.astype(np.uint8)  # sidestep container validation
        with pytest.raises(ParseError):
            hio.write_sphs(io.BytesIO(), sig)

    def test_length_mismatch_detected(self, tmp_path, rng):
        sig = SphericalSignal(3, rng.standard_normal((768, 2)).astype(np.float32))
        path = tmp_path / "sig.sphs"
        hio.write_sphs(path, sig)
        raw = bytearray(path.read_bytes())
        raw[8:12] = (2).to_bytes(4, "little")  # header now claims level 2
        with pytest.raises(ParseError):
            hio.read_sphs(io.BytesIO(bytes(raw)))

    def test_trailing_garbage_rejected(self, tmp_path, rng):
        sig = SphericalSignal(1, rng.standard_normal((48, 1)).astype(np.float32))
        path = tmp_path / "sig.sphs"
        hio.write_sphs(path, sig)
        with pytest.raises(ParseError):
            hio.read_sphs(io.BytesIO(path.read_bytes() + b"x"))

    def test_bad_magic(self):
        with pytest.raises(ParseError):
            hio.read_sphs(io.BytesIO(b"NOPE" + b"\0" * 12))


class TestNetpbm:
    def test_p6_fixture(self):
        raw = b"P6\n2 2\n255\n" + bytes(range(12))
        img = hio.read_ppm(io.BytesIO(raw))
        assert img.shape == (2, 2, 3)
        assert img.ravel().tolist() == list(range(12))

    def test_pgm_roundtrip_bit_exact(self, tmp_path, rng):
        img = (rng.random((9, 7)) * 255).astype(np.uint8)
        path = tmp_path / "img.pgm"
        hio.write_pgm(path, img)
        assert np.array_equal(hio.read_pgm(path), img)

    def test_ppm_roundtrip_bit_exact(self, tmp_path, rng):
        img = (rng.random((5, 4, 3)) * 255).astype(np.uint8)
        path = tmp_path / "img.ppm"
        hio.write_ppm(path, img)
        assert np.array_equal(hio.read_ppm(path), img)

    def test_ascii_variant_rejected(self):
        with pytest.raises(ParseError):
            hio.read_ppm(io.BytesIO(b"P3\n1 1\n255\n0 0 0\n"))

    def test_nonstandard_maxval_rejected(self):
        with pytest.raises(ParseError):
            hio.read_ppm(io.BytesIO(b"P6\n1 1\n65535\n\0\0\0\0\0\0"))

    def test_comments_in_header(self):
        raw = b"P5\n# made by hand\n2 1\n255\nab"
        img = hio.read_pgm(io.BytesIO(raw))
        assert img.tolist() == [[97, 98]]


class TestCheckpointFormat:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        arrays = {
            "conv1.w": rng.standard_normal((3, 3, 1, 16)).astype(np.float32),
            "fc.b": rng.standard_normal(10).astype(np.float32),
            "scalar": np.float32(3.75).reshape(()),
        }
        path = tmp_path / "w.stmw"
        write_checkpoint(path, arrays)
        loaded = read_checkpoint(path)
        assert set(loaded) == set(arrays)
        for k in arrays:
            assert np.array_equal(loaded[k], arrays[k])
            assert loaded[k].shape == arrays[k].shape

    def test_magic_and_version_checked(self):
        with pytest.raises(ParseError):
            read_checkpoint(io.BytesIO(b"XXXX\x01\x00\x00\x00\x00"))

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "w.stmw"
        write_checkpoint(path, {"a": np.zeros(2, np.float32)})
        with pytest.raises(ParseError):
            read_checkpoint(io.BytesIO(path.read_bytes() + b"z"))

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "w.stmw"
        write_checkpoint(path, {"a": np.zeros(8, np.float32)})
        with pytest.raises(ParseError):
            read_checkpoint(io.BytesIO(path.read_bytes()[:-4]))


class TestPatchTensorDump:
    def test_header_then_row_major_f32(self, rng):
        sig = SphericalSignal(1, rng.standard_normal((48, 2)).astype(np.float32))
        pt = gather(sig, patch_grid(1))
        buf = io.BytesIO()
        hio.write_patch_tensor(buf, pt)
        raw = buf.getvalue()
        assert raw[:4] == b"PTCH"
        level = int.from_bytes(raw[8:12], "little")
        channels = int.from_bytes(raw[12:16], "little")
        assert level == 1 and channels == 2
        body = np.frombuffer(raw[16:], dtype="<f4").reshape(3, 144, 2)
        assert np.array_equal(body, pt.data)


@settings(max_examples=20, deadline=None)
@given(
    level=st.integers(min_value=0, max_value=3),
    channels=st.integers(min_value=1, max_value=7),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_sphs_roundtrip_property(level, channels, seed):
    rng = np.random.default_rng(seed)
    sig = SphericalSignal(
        level, rng.standard_normal((hp.n_pixels(level), channels)).astype(np.float32)
    )
    buf = io.BytesIO()
    hio.write_sphs(buf, sig)
    buf.seek(0)
    loaded = hio.read_sphs(buf)
    assert loaded.level == level
    assert np.array_equal(loaded.data, sig.data)
