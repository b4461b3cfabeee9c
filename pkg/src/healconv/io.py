"""Parsers and binary containers: OFF meshes, IDX images, PPM/PGM, and the
.sphs spherical-signal file.

All multi-byte fields in .sphs are little-endian; IDX keeps its big-endian
convention.  Parsers reject trailing garbage and report positions.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from . import healpix
from .errors import ParseError
from .mesh import TriMesh
from .signal import SphericalSignal

_PATHY = (str, bytes, os.PathLike)


def _read_all(path_or_stream) -> bytes:
    if isinstance(path_or_stream, _PATHY):
        with open(path_or_stream, "rb") as fh:
            return fh.read()
    return path_or_stream.read()


# ---------------------------------------------------------------------------
# OFF meshes

def parse_off(data) -> TriMesh:
    """Parse an ASCII OFF mesh; polygons are fan-triangulated.

    Handles the header glued to the counts on one line ("OFF490 518 0"), a
    quirk common in ModelNet files.  Degenerate faces are dropped (count kept
    on the mesh).
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    tokens = []  # (line_number, token)
    for ln, line in enumerate(data.splitlines(), 1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            tokens.append((ln, tok))
    if not tokens:
        raise ParseError("empty OFF file", line=1)

    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 1
            raise ParseError(f"unexpected end of file while reading {what}", line=last)
        ln, tok = tokens[pos]
        pos += 1
        return ln, tok

    ln, head = take("header")
    if head.upper() == "OFF":
        pass
    elif head.upper().startswith("OFF"):
        # glued variant: push the remainder back as the first count
        tokens.insert(pos, (ln, head[3:]))
    else:
        raise ParseError(f"not an OFF file (header {head!r})", line=ln)

    def take_int(what):
        ln, tok = take(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"bad integer {tok!r} for {what}", line=ln) from None

    def take_float(what):
        ln, tok = take(what)
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"bad number {tok!r} for {what}", line=ln) from None

    n_vertices = take_int("vertex count")
    n_faces = take_int("face count")
    take_int("edge count")
    if n_vertices < 0 or n_faces < 0:
        raise ParseError("negative counts in OFF header", line=ln)

    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    for i in range(n_vertices):
        for k in range(3):
            vertices[i, k] = take_float(f"vertex {i}")

    faces = []
    for i in range(n_faces):
        ln, tok = take(f"face {i} size")
        try:
            size = int(tok)
        except ValueError:
            raise ParseError(f"bad face size {tok!r}", line=ln) from None
        if size < 3:
            raise ParseError(f"face {i} has {size} vertices", line=ln)
        idx = []
        for k in range(size):
            ln2, tok2 = take(f"face {i} index")
            try:
                v = int(tok2)
            except ValueError:
                raise ParseError(f"bad face index {tok2!r}", line=ln2) from None
            if not 0 <= v < n_vertices:
                raise ParseError(f"face index {v} out of range [0, {n_vertices})", line=ln2)
            idx.append(v)
        for k in range(1, size - 1):
            faces.append((idx[0], idx[k], idx[k + 1]))

    if pos != len(tokens):
        ln, tok = tokens[pos]
        raise ParseError(f"trailing data {tok!r} after last face", line=ln)
    return TriMesh(vertices, np.asarray(faces, dtype=np.int32).reshape(-1, 3))


def load_off(path) -> TriMesh:
    return parse_off(_read_all(path))


# ---------------------------------------------------------------------------
# IDX (MNIST distribution format; big-endian)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def parse_idx(data: bytes):
    """Decode an IDX file: images scaled to [0, 1] float32, or labels as int64."""
    if len(data) < 8:
        raise ParseError("IDX header truncated", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_LABELS_MAGIC:
        (n,) = struct.unpack(">I", data[4:8])
        payload = data[8:]
        if len(payload) != n:
            raise ParseError(f"IDX labels need {n} bytes, found {len(payload)}", offset=8)
        return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if magic == IDX_IMAGES_MAGIC:
        if len(data) < 16:
            raise ParseError("IDX image header truncated", offset=len(data))
        n, rows, cols = struct.unpack(">III", data[4:16])
        payload = data[16:]
        if len(payload) != n * rows * cols:
            raise ParseError(
                f"IDX images need {n * rows * cols} bytes, found {len(payload)}", offset=16
            )
        imgs = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
        return imgs.astype(np.float32) / 255.0
    raise ParseError(f"unknown IDX magic 0x{magic:08x}", offset=0)


def load_idx(path):
    return parse_idx(_read_all(path))


def write_idx_images(path, images: np.ndarray) -> None:
    """Write u8 images (N, R, C) in IDX format."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# .sphs spherical signals

SPHS_MAGIC = b"SPHS"
SPHS_VERSION = 1
SPHS_DTYPE_F32 = 0
SPHS_DTYPE_U8 = 1
_SPHS_HEADER = struct.Struct("<4sBBHII")


def write_sphs(path_or_stream, signal: SphericalSignal) -> None:
    """Serialize a signal; float data as f32, uint8 label maps as dtype 1."""
    if signal.data.dtype == np.uint8:
        if signal.channels != 1:
            raise ParseError("u8 label signals must have exactly 1 channel")
        dtype = SPHS_DTYPE_U8
        payload = np.ascontiguousarray(signal.data).tobytes()
    else:
        dtype = SPHS_DTYPE_F32
        payload = np.ascontiguousarray(signal.data, dtype="<f4").tobytes()
    header = _SPHS_HEADER.pack(SPHS_MAGIC, SPHS_VERSION, dtype, 0,
                               signal.level, signal.channels)
    if isinstance(path_or_stream, _PATHY):
        with open(path_or_stream, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        path_or_stream.write(header)
        path_or_stream.write(payload)


def read_sphs(path_or_stream) -> SphericalSignal:
    raw = _read_all(path_or_stream)
    if len(raw) < _SPHS_HEADER.size:
        raise ParseError("sphs header truncated", offset=len(raw))
    magic, version, dtype, reserved, level, channels = _SPHS_HEADER.unpack_from(raw)
    if magic != SPHS_MAGIC:
        raise ParseError("bad sphs magic", offset=0)
    if version != SPHS_VERSION:
        raise ParseError(f"unsupported sphs version {version}", offset=4)
    if reserved != 0:
        raise ParseError("nonzero reserved field", offset=6)
    if dtype == SPHS_DTYPE_U8 and channels != 1:
        raise ParseError(f"u8 sphs requires 1 channel, header says {channels}", offset=12)
    if dtype not in (SPHS_DTYPE_F32, SPHS_DTYPE_U8):
        raise ParseError(f"unknown sphs dtype {dtype}", offset=5)
    n_pix = healpix.n_pixels(level)
    itemsize = 1 if dtype == SPHS_DTYPE_U8 else 4
    want = _SPHS_HEADER.size + n_pix * channels * itemsize
    if len(raw) != want:
        raise ParseError(
            f"payload length mismatch: level {level} x {channels} channels needs "
            f"{want - _SPHS_HEADER.size} bytes, found {len(raw) - _SPHS_HEADER.size}",
            offset=_SPHS_HEADER.size,
        )
    body = raw[_SPHS_HEADER.size :]
    if dtype == SPHS_DTYPE_U8:
        data = np.frombuffer(body, dtype=np.uint8).reshape(n_pix, channels).copy()
    else:
        data = np.frombuffer(body, dtype="<f4").reshape(n_pix, channels).copy()
    return SphericalSignal(level, data)


# ---------------------------------------------------------------------------
# PPM / PGM (binary, maxval 255)

def read_ppm(path_or_stream) -> np.ndarray:
    """Binary P6 -> (H, W, 3) u8.  Only maxval 255 is supported."""
    return _read_netpbm(_read_all(path_or_stream), b"P6", 3)


def read_pgm(path_or_stream) -> np.ndarray:
    """Binary P5 -> (H, W) u8."""
    return _read_netpbm(_read_all(path_or_stream), b"P5", 1)[:, :, 0]


def _read_netpbm(raw: bytes, magic: bytes, channels: int) -> np.ndarray:
    buf = io.BytesIO(raw)
    head = buf.read(2)
    if head in (b"P3", b"P2"):
        raise ParseError("ASCII netpbm variants are not supported", offset=0)
    if head != magic:
        raise ParseError(f"expected {magic.decode()} magic, got {head!r}", offset=0)

    def next_token():
        tok = b""
        while True:
            ch = buf.read(1)
            if not ch:
                raise ParseError("netpbm header truncated", offset=buf.tell())
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = buf.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    width = int(next_token())
    height = int(next_token())
    maxval = int(next_token())
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", offset=buf.tell())
    payload = buf.read()
    want = width * height * channels
    if len(payload) != want:
        raise ParseError(
            f"netpbm payload needs {want} bytes, found {len(payload)}", offset=buf.tell()
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy()


def write_pgm(path_or_stream, image: np.ndarray) -> None:
    """Write a grayscale image as binary P5 (values clipped to u8)."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    if image.ndim != 2:
        raise ParseError(f"PGM image must be 2-D, got shape {image.shape}")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
    if isinstance(path_or_stream, _PATHY):
        with open(path_or_stream, "wb") as fh:
            fh.write(header)
            fh.write(image.tobytes())
    else:
        path_or_stream.write(header)
        path_or_stream.write(image.tobytes())


def write_ppm(path_or_stream, image: np.ndarray) -> None:
    """Write an RGB image as binary P6."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ParseError(f"PPM image must be (H, W, 3), got shape {image.shape}")
    header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
    if isinstance(path_or_stream, _PATHY):
        with open(path_or_stream, "wb") as fh:
            fh.write(header)
            fh.write(image.tobytes())
    else:
        path_or_stream.write(header)
        path_or_stream.write(image.tobytes())


# ---------------------------------------------------------------------------
# patch tensor dump (debugging surface for the gather layout)

PTCH_MAGIC = b"PTCH"
_PTCH_HEADER = struct.Struct("<4sBBHII")


def write_patch_tensor(path_or_stream, patch_tensor) -> None:
    """Header (magic, version, pad, reserved, level, channels) then row-major f32."""
    header = _PTCH_HEADER.pack(PTCH_MAGIC, 1, 0, 0, patch_tensor.level,
                               patch_tensor.channels)
    payload = np.ascontiguousarray(patch_tensor.data, dtype="<f4").tobytes()
    if isinstance(path_or_stream, _PATHY):
        with open(path_or_stream, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        path_or_stream.write(header)
        path_or_stream.write(payload)
