"""Signed 8-bit convolution kernels over the RGGB mosaic.

A kernel of side r (in pixel units) carries 2r x 2r pixel-granularity
weights, one per photodiode inside the r x r unit window. Negative weights
are realized by a second exposure, so every kernel splits into a
nonnegative positive phase and a nonnegative negative phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UnsupportedGeometry

WEIGHT_MIN = -128
WEIGHT_MAX = 127
SUPPORTED_KERNEL_SIZES = (3, 5, 7, 9)
SUPPORTED_STRIDES_PX = (2, 4)


@dataclass(frozen=True)
class WeightKernel:
    r: int
    weights: np.ndarray  # (2r, 2r) int32, pixel granularity
    channel_id: int = 0

    def __post_init__(self):
        if self.r not in SUPPORTED_KERNEL_SIZES:
            raise UnsupportedGeometry(
                f"kernel side {self.r} not in {SUPPORTED_KERNEL_SIZES}")
        w = np.asarray(self.weights)
        if w.shape != (2 * self.r, 2 * self.r):
            raise UnsupportedGeometry(
                f"weights must be {2*self.r}x{2*self.r}, got {w.shape}")
        if not np.issubdtype(w.dtype, np.integer):
            raise UnsupportedGeometry("weights must be integers")
        if w.min() < WEIGHT_MIN or w.max() > WEIGHT_MAX:
            raise UnsupportedGeometry(
                f"weights must lie in [{WEIGHT_MIN}, {WEIGHT_MAX}], "
                f"got range [{w.min()}, {w.max()}]")
        object.__setattr__(self, "weights", w.astype(np.int32))

    @property
    def sum_weights(self) -> int:
        return int(self.weights.sum())


def decompose_weights(kernel: WeightKernel) -> tuple[np.ndarray, np.ndarray]:
    """Split signed weights into (positive phase, negative phase).

    Both outputs are nonnegative and w_pos - w_neg reconstructs the kernel.
    """
    w = kernel.weights
    return np.maximum(w, 0), np.maximum(-w, 0)


def random_kernel(r: int, rng: np.random.Generator, channel_id: int = 0) -> WeightKernel:
    w = rng.integers(WEIGHT_MIN, WEIGHT_MAX + 1, size=(2 * r, 2 * r), dtype=np.int32)
    return WeightKernel(r=r, weights=w, channel_id=channel_id)


# Weights file layout: one header line "r s channels", then for each channel
# 2r lines of 2r signed integers (row-major pixel weights).

def save_weights(path, stride_px: int, kernels: list[WeightKernel]) -> None:
    if not kernels:
        raise InputError("no kernels to save")
    r = kernels[0].r
    lines = [f"{r} {stride_px} {len(kernels)}"]
    for k in kernels:
        if k.r != r:
            raise InputError("all kernels in one file must share the same side")
        for row in k.weights:
            lines.append(" ".join(str(int(x)) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> tuple[int, list[WeightKernel]]:
    """Returns (stride_px, kernels). Raises InputError on malformed files."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise InputError(f"cannot read weights file {path}: {exc}") from exc
    if len(tokens) < 3:
        raise InputError(f"weights file {path} is missing its header")
    try:
        r, stride_px, channels = (int(t) for t in tokens[:3])
        body = np.array([int(t) for t in tokens[3:]], dtype=np.int64)
    except ValueError as exc:
        raise InputError(f"weights file {path} contains non-integer data") from exc
    per_kernel = (2 * r) * (2 * r)
    if body.size != channels * per_kernel:
        raise InputError(
            f"weights file {path}: expected {channels * per_kernel} weights, "
            f"got {body.size}")
    if stride_px not in SUPPORTED_STRIDES_PX:
        raise UnsupportedGeometry(
            f"stride {stride_px} not in {SUPPORTED_STRIDES_PX}")
    kernels = []
    for c in range(channels):
        w = body[c * per_kernel:(c + 1) * per_kernel].reshape(2 * r, 2 * r)
        if w.min() < WEIGHT_MIN or w.max() > WEIGHT_MAX:
            raise InputError(
                f"weights file {path}: channel {c} has out-of-range weights")
        kernels.append(WeightKernel(r=r, weights=w.astype(np.int32), channel_id=c))
    return stride_px, kernels
