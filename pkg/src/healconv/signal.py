"""Container for C-channel fields sampled on a HEALPix grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import healpix
from .errors import ContractError


@dataclass
class SphericalSignal:
    """A ``(n_pix, channels)`` field over the pixels of one grid level.

    Data is pixel-major in nested order.  Values must be finite.
    """

    level: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.data.ndim != 2:
            raise ContractError(f"signal data must be 2-D (n_pix, C), got {self.data.shape}")
        npix = healpix.n_pixels(self.level)
        if self.data.shape[0] != npix:
            raise ContractError(
                f"signal has {self.data.shape[0]} pixels, level {self.level} needs {npix}"
            )
        if self.data.dtype.kind == "f" and not np.isfinite(self.data).all():
            raise ContractError("signal values must be finite")

    @property
    def n_pix(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, level: int, channels: int, dtype=np.float32) -> "SphericalSignal":
        return cls(level, np.zeros((healpix.n_pixels(level), channels), dtype=dtype))

    def rotated(self, quarter_turns: int) -> "SphericalSignal":
        """Signal carried along a 90-degree polar-axis rotation of the grid."""
        perm = healpix.z_rotation_permutation(self.level, quarter_turns)
        out = np.empty_like(self.data)
        out[perm] = self.data
        return SphericalSignal(self.level, out)
