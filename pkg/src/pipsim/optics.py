"""Scene ingestion: rasters to optical power to per-photodiode current.

Input images are treated as already-mosaicked RGGB rasters; each 8-bit code
is the optical power reaching that photodiode after its color filter. No
demosaicing, PSF, or spectral model is applied.

Photometric calibration: 1 lux is approximated as 1/683 W/m^2 (the luminous
efficacy peak at 555 nm, where the default responsivity is specified). The
default full-scale irradiance corresponds to roughly 1500 lux. This mapping
is an engineering approximation, not a measured constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import DimensionMismatch, InputError, PhotocurrentMap, ValidatedConfig

LUX_TO_W_PER_M2 = 1.0 / 683.0
DEFAULT_FULL_SCALE_LUX = 1500.0


def default_lux_scale() -> float:
    """W/m^2 represented by a full-scale (255) raster code."""
    return DEFAULT_FULL_SCALE_LUX * LUX_TO_W_PER_M2


@dataclass(frozen=True)
class Scene:
    """Optical power density landing on each photodiode, W/m^2."""

    power: np.ndarray  # (height_px, width_px) float64

    def __post_init__(self):
        p = np.asarray(self.power, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionMismatch(f"scene must be 2-D, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ValueError("scene power must be finite and nonnegative")
        object.__setattr__(self, "power", p)


def scene_from_image(raster: np.ndarray, lux_scale: float,
                     cfg: ValidatedConfig | None = None) -> Scene:
    """Linear map from 8-bit mosaic codes to W/m^2: P = code/255 * lux_scale."""
    r = np.asarray(raster)
    if r.ndim != 2:
        raise DimensionMismatch(f"raster must be 2-D, got shape {r.shape}")
    if cfg is not None and r.shape != (cfg.height_px, cfg.width_px):
        raise DimensionMismatch(
            f"raster is {r.shape}, sensor is {(cfg.height_px, cfg.width_px)}")
    if not lux_scale > 0:
        raise ValueError(f"lux_scale must be positive, got {lux_scale!r}")
    return Scene(power=r.astype(np.float64) / 255.0 * lux_scale)


def photocurrents(scene: Scene, cfg: ValidatedConfig) -> PhotocurrentMap:
    """I = responsivity * P * photodiode_area, elementwise."""
    if scene.power.shape != (cfg.height_px, cfg.width_px):
        raise DimensionMismatch(
            f"scene is {scene.power.shape}, sensor is "
            f"{(cfg.height_px, cfg.width_px)}")
    return PhotocurrentMap(currents=cfg.responsivity * scene.power * cfg.pd_area)


def uniform_scene(cfg: ValidatedConfig, power_w_m2: float) -> Scene:
    return Scene(power=np.full((cfg.height_px, cfg.width_px), float(power_w_m2)))


def load_raster(path) -> np.ndarray:
    """Read an 8-bit single-channel PGM or PNG as a mosaic raster."""
    try:
        img = Image.open(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read raster {path}: {exc}") from exc
    with img:
        if img.mode not in ("L", "I;16", "I", "P", "1"):
            raise InputError(
                f"raster {path} must be single-channel 8-bit, got mode {img.mode!r}")
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return arr


def scene_to_csv(scene: Scene, path) -> None:
    np.savetxt(path, scene.power, delimiter=",", fmt="%.17g",
               header="scene optical power, W/m^2")
