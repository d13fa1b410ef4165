"""Shared array-valued domain types: photocurrents and feature maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

# Position of each color inside a 2x2 RGGB unit, row-major.
COLOR_PLANES = ("R", "G1", "G2", "B")


def color_plane(y: int, x: int) -> str:
    """Color of the photodiode at pixel (y, x) under the RGGB mosaic."""
    return COLOR_PLANES[(y % 2) * 2 + (x % 2)]


def color_plane_map(height_px: int, width_px: int) -> np.ndarray:
    """Array of plane indices 0..3 (R, G1, G2, B) for the whole mosaic."""
    yy, xx = np.mgrid[0:height_px, 0:width_px]
    return (yy % 2) * 2 + (xx % 2)


@dataclass(frozen=True)
class PhotocurrentMap:
    """Per-photodiode currents in amps, one entry per pixel."""

    currents: np.ndarray  # (height_px, width_px) float64, A

    def __post_init__(self):
        c = np.asarray(self.currents, dtype=np.float64)
        if c.ndim != 2:
            raise DimensionMismatch(f"currents must be 2-D, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or c.min() < 0:
            raise ValueError("photocurrents must be finite and nonnegative")
        object.__setattr__(self, "currents", c)

    @property
    def height_px(self) -> int:
        return self.currents.shape[0]

    @property
    def width_px(self) -> int:
        return self.currents.shape[1]

    def plane_indices(self) -> np.ndarray:
        return color_plane_map(*self.currents.shape)


@dataclass(frozen=True)
class FeatureMap:
    """One output channel of the first-layer convolution.

    values holds the weighted sum of photocurrents (amps times weight LSBs)
    unless units says otherwise; positions never covered by the schedule are
    NaN. provenance records how the map was produced (ideal, noisy seed,
    quantized) so downstream comparisons know what they are looking at.
    """

    values: np.ndarray  # (out_h, out_w) float64
    channel_id: int
    r: int
    stride_px: int
    policy: str = "full-coverage"
    provenance: str = "ideal"
    units: str = "mac"  # "mac" = sum(I*w) in A, "volts" = raw readout
    metadata: dict = field(default_factory=dict)

    @property
    def out_h(self) -> int:
        return self.values.shape[0]

    @property
    def out_w(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        header = (f"channel={self.channel_id} r={self.r} stride={self.stride_px} "
                  f"policy={self.policy} provenance={self.provenance} "
                  f"units={self.units} shape={self.out_h}x{self.out_w}")
        np.savetxt(path, self.values, delimiter=",", header=header, fmt="%.17g")


def load_feature_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))
