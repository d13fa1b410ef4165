"""Temporal noise, fixed-pattern noise, and capacitor mismatch.

Noise terms and where they act:

* shot: the charge drained by each photodiode during its PWM pulse is
  Poisson in electron counts, so its variance scales with the signal.
* reset (kTC): sampled once per reset of the spliced node, variance
  kT / C_node in volts^2. Fresh draw per phase, so it does not cancel in
  the two-phase subtraction.
* read: white Gaussian per readout sample; present in both phases, so the
  subtraction doubles its power. Independent draws per phase also stand in
  for the flicker suppression of the short two-readout interval (no 1/f
  spectral model here).
* DSNU: a per-unit dark-leak current offset integrated over the full
  exposure window. Both phases hold for the same window, so this offset
  cancels in the subtraction, as does the per-unit readout offset FPN.
* PRNU: per-photodiode multiplicative gain on the photocurrent; fixed per
  sensor instance, does not cancel (the two phases weight pixels
  differently).
* capacitor mismatch: per-unit FD capacitance drawn once per instance,
  Normal(c_fd, (sigma * c_fd)^2) truncated at 4 sigma and floored at
  0.1 * c_fd. The digital rescale keeps using the nominal capacitance,
  which is exactly how mismatch corrupts results.

Fixed-pattern draws are made once per sensor instance from dedicated
streams; temporal draws come from a stream keyed by (seed, tile id, event)
so parallel tile evaluation is reproducible in any execution order.

Magnitude defaults are engineering choices, not measured device data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ELEMENTARY_CHARGE, K_BOLTZMANN, ValidatedConfig
from .pixel_engine import TileState

DEFAULT_READ_NOISE_V = 0.25e-3

# Spawn-key namespaces for instance-level (FPN) streams.
_KEY_CAPS = 1_000_001
_KEY_PRNU = 1_000_002
_KEY_DSNU = 1_000_003
_KEY_OFFSET = 1_000_004

# Event ids for temporal draws within one (tile, phase) evaluation.
EVT_RESET = 0
EVT_SHOT = 1
EVT_READ = 2
EVT_INJECT = 3
_EVENTS_PER_PHASE = 8


@dataclass(frozen=True)
class NoiseModel:
    enable_shot: bool = False
    enable_reset: bool = False
    sigma_read: float = 0.0      # V rms per readout
    sigma_dsnu: float = 0.0      # A rms, per-unit dark-leak offset
    sigma_prnu: float = 0.0      # fractional gain sigma per photodiode
    sigma_cap: float = 0.0       # fractional FD capacitance sigma per unit
    sigma_offset: float = 0.0    # V rms, per-unit readout offset FPN
    sigma_inject: float = 0.0    # V rms, additive white on readout samples
    seed: int = 0
    temperature: float = 300.0   # K

    def __post_init__(self):
        for name in ("sigma_read", "sigma_dsnu", "sigma_prnu", "sigma_cap",
                     "sigma_offset", "sigma_inject"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def default_on(cls, seed: int = 0) -> "NoiseModel":
        return cls(enable_shot=True, enable_reset=True,
                   sigma_read=DEFAULT_READ_NOISE_V, seed=seed)

    @property
    def any_enabled(self) -> bool:
        return (self.enable_shot or self.enable_reset or self.sigma_read > 0
                or self.sigma_dsnu > 0 or self.sigma_prnu > 0
                or self.sigma_cap > 0 or self.sigma_offset > 0
                or self.sigma_inject > 0)


def ktc_variance(c_farads: float, temperature: float = 300.0) -> float:
    """Reset-noise variance on a node of capacitance C, volts^2."""
    return K_BOLTZMANN * temperature / c_farads


def averaging_gain(r: int, sigma: float) -> tuple[float, float]:
    """Averaging r^2 independent unit results divides the noise power by r^2.

    Returns (noise_power, snr_gain) = (sigma^2 / r^2, r^2).
    """
    if r < 1 or sigma < 0:
        raise ValueError("need r >= 1 and sigma >= 0")
    return sigma * sigma / (r * r), float(r * r)


def inject_target_snr(signal_power: float, target_snr_db: float) -> float:
    """Additive-noise sigma that sets noise power = signal / 10^(SNR/10)."""
    if not signal_power > 0:
        raise ValueError("signal power must be positive")
    return math.sqrt(signal_power / 10.0 ** (target_snr_db / 10.0))


def apply_mismatch(cfg: ValidatedConfig, sigma_c: float, seed: int) -> np.ndarray:
    """Per-unit FD capacitances, Normal(c_fd, (sigma_c*c_fd)^2), truncated
    at +-4 sigma and floored at 0.1*c_fd. Fixed for a given seed."""
    if sigma_c < 0:
        raise ValueError("sigma_c must be >= 0")
    shape = (cfg.unit_height, cfg.unit_width)
    if sigma_c == 0:
        return np.full(shape, cfg.c_fd)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_KEY_CAPS,)))
    dev = rng.normal(0.0, sigma_c, size=shape)
    dev = np.clip(dev, -4.0 * sigma_c, 4.0 * sigma_c)
    return np.maximum(cfg.c_fd * (1.0 + dev), 0.1 * cfg.c_fd)


class SensorInstance:
    """One physical sensor: frozen FPN maps plus keyed temporal streams."""

    def __init__(self, model: NoiseModel, cfg: ValidatedConfig):
        self.model = model
        self.cfg = cfg
        uh, uw = cfg.unit_height, cfg.unit_width
        self.unit_caps = apply_mismatch(cfg, model.sigma_cap, model.seed)
        self.prnu = np.zeros((cfg.height_px, cfg.width_px))
        if model.sigma_prnu > 0:
            rng = self._fpn_rng(_KEY_PRNU)
            self.prnu = rng.normal(0.0, model.sigma_prnu,
                                   size=(cfg.height_px, cfg.width_px))
        self.dsnu = np.zeros((uh, uw))
        if model.sigma_dsnu > 0:
            rng = self._fpn_rng(_KEY_DSNU)
            self.dsnu = rng.normal(0.0, model.sigma_dsnu, size=(uh, uw))
        self.offset = np.zeros((uh, uw))
        if model.sigma_offset > 0:
            rng = self._fpn_rng(_KEY_OFFSET)
            self.offset = rng.normal(0.0, model.sigma_offset, size=(uh, uw))

    def _fpn_rng(self, key: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.model.seed, spawn_key=(key,)))

    def stream(self, tile_id: int, event: int, channel: int = 0) -> np.random.Generator:
        """Temporal stream for one draw site; independent of execution order."""
        return np.random.default_rng(
            np.random.SeedSequence(self.model.seed,
                                   spawn_key=(channel, tile_id, event)))

    # -- per-tile views of the fixed maps ------------------------------------

    def tile_caps(self, origin_y: int, origin_x: int,
                  h_units: int, w_units: int) -> np.ndarray:
        win = self.unit_caps[origin_y:origin_y + h_units,
                             origin_x:origin_x + w_units]
        return win.ravel().copy()

    def tile_prnu(self, origin_y: int, origin_x: int,
                  h_units: int, w_units: int) -> np.ndarray:
        y0, x0 = 2 * origin_y, 2 * origin_x
        return self.prnu[y0:y0 + 2 * h_units, x0:x0 + 2 * w_units]

    def tile_dsnu(self, origin_y: int, origin_x: int,
                  h_units: int, w_units: int) -> np.ndarray:
        return self.dsnu[origin_y:origin_y + h_units,
                         origin_x:origin_x + w_units].ravel()

    def readout_offset(self, tile) -> float:
        """Offset FPN of the unit driving this tile's readout column."""
        return float(self.offset[tile.origin_y, tile.origin_x])

    # -- temporal draws -------------------------------------------------------

    def reset_voltage(self, tile_id: int, phase_index: int, c_node: float,
                      channel: int = 0) -> float:
        if not self.model.enable_reset:
            return self.cfg.v_rst
        rng = self.stream(tile_id, phase_index * _EVENTS_PER_PHASE + EVT_RESET,
                          channel)
        sigma = math.sqrt(ktc_variance(c_node, self.model.temperature))
        return self.cfg.v_rst + rng.normal(0.0, sigma)

    def shot_sample(self, tile_id: int, phase_index: int, q_pd: np.ndarray,
                    channel: int = 0) -> np.ndarray:
        """Poisson-sample per-photodiode charge in the electron domain."""
        if not self.model.enable_shot:
            return q_pd
        rng = self.stream(tile_id, phase_index * _EVENTS_PER_PHASE + EVT_SHOT,
                          channel)
        electrons = q_pd / ELEMENTARY_CHARGE
        return rng.poisson(electrons).astype(np.float64) * ELEMENTARY_CHARGE

    def read_sample_voltage(self, tile_id: int, phase_index: int,
                            channel: int = 0) -> float:
        dv = 0.0
        if self.model.sigma_read > 0:
            rng = self.stream(tile_id, phase_index * _EVENTS_PER_PHASE + EVT_READ,
                              channel)
            dv += rng.normal(0.0, self.model.sigma_read)
        if self.model.sigma_inject > 0:
            rng = self.stream(tile_id,
                              phase_index * _EVENTS_PER_PHASE + EVT_INJECT,
                              channel)
            dv += rng.normal(0.0, self.model.sigma_inject)
        return dv


def sample_noise(tile: TileState, phase_index: int, model: NoiseModel,
                 cfg: ValidatedConfig, channel: int = 0) -> TileState:
    """Perturb an exposed tile per the noise model and return the new state.

    Applies shot, reset, PRNU, and DSNU through the charge balance, then a
    read-noise draw on the held voltage. Leakage is not re-integrated; at
    the default leak constant the difference is far below every noise term.
    FPN draws are fixed per (model.seed, sensor layout); temporal draws are
    fresh per (tile, phase_index).
    """
    if tile.q_signal_pd is None:
        raise ValueError("tile has not been exposed")
    inst = SensorInstance(model, cfg)
    out = apply_exposure_noise(tile, inst, phase_index, channel=channel)
    dv = inst.read_sample_voltage(tile.tile_id, phase_index, channel)
    if dv:
        out = replace(out, voltages=out.voltages + dv)
    return out


def apply_exposure_noise(tile: TileState, inst: SensorInstance,
                         phase_index: int, channel: int = 0) -> TileState:
    """Shot, reset, PRNU, and DSNU perturbation of one exposed tile."""
    cfg = inst.cfg
    q_sig = tile.q_signal_pd
    q_dark = tile.q_dark_pd
    if inst.model.sigma_prnu > 0:
        gain = 1.0 + inst.tile_prnu(tile.origin_y, tile.origin_x,
                                    tile.h_units, tile.w_units)
        q_sig = q_sig * gain
    q_pd = q_sig + q_dark
    q_pd = inst.shot_sample(tile.tile_id, phase_index, q_pd, channel)
    q_total = q_pd.sum()
    q_total += (inst.tile_dsnu(tile.origin_y, tile.origin_x,
                               tile.h_units, tile.w_units).sum()
                * tile.window_s)
    c_total = tile.cap_total
    u0 = inst.reset_voltage(tile.tile_id, phase_index, c_total, channel)
    u = u0 - q_total / c_total
    saturated = bool(u < cfg.v_min)
    if saturated:
        u = cfg.v_min
    return replace(tile, voltages=np.full(tile.n_units, u),
                   saturated=tile.saturated or saturated)
