"""Column sampling, ADC quantization, and two-phase digital subtraction.

The subtraction recovers the MAC value from the two exposure readouts:

    U_neg - U_pos = k_expo / (n_units * c_fd) * (sum I_i w_i + I_dark sum w_i)

so multiplying by n_units * c_fd / k_expo (a known digital constant; the
nominal capacitance, not the true mismatched one) yields sum(I*w) plus the
residual dark term, which an optional correction flag removes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import NotReady, PhaseMismatch, ValidatedConfig
from .pixel_engine import TilePhase, TileState, mark_read, splice_voltages

ADC_BYPASS = None  # pass adc=None anywhere a model is accepted


@dataclass(frozen=True)
class AdcModel:
    """Ideal column ADC: linear, round-to-nearest, clamping at the rails."""

    bits: int
    v_lo: float   # code 0
    v_hi: float   # full scale
    f_adc: float

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("adc bits must be >= 1")
        if not self.v_hi > self.v_lo:
            raise ValueError("adc range is degenerate")

    @property
    def n_codes(self) -> int:
        return 1 << self.bits

    @property
    def lsb_volts(self) -> float:
        return (self.v_hi - self.v_lo) / (self.n_codes - 1)

    @classmethod
    def from_config(cls, cfg: ValidatedConfig) -> "AdcModel":
        return cls(bits=cfg.adc_bits, v_lo=cfg.v_min, v_hi=cfg.v_rst,
                   f_adc=cfg.f_adc)


def quantize(v: float, adc: AdcModel) -> int:
    """code = clamp(round((v - v_lo)/(v_hi - v_lo) * (2^bits - 1)));
    round-to-nearest, halves away from zero."""
    if not math.isfinite(v):
        raise ValueError(f"cannot quantize non-finite voltage {v!r}")
    x = (v - adc.v_lo) / (adc.v_hi - adc.v_lo) * (adc.n_codes - 1)
    code = int(math.floor(x + 0.5))
    return min(max(code, 0), adc.n_codes - 1)


def dequantize(code: int, adc: AdcModel) -> float:
    return adc.v_lo + code / (adc.n_codes - 1) * (adc.v_hi - adc.v_lo)


def is_clipped(v: float, adc: AdcModel) -> bool:
    return v < adc.v_lo or v > adc.v_hi


@dataclass(frozen=True)
class PhaseReadout:
    """One sampled tile result for one exposure phase."""

    tile_id: int
    phase_sign: int          # +1 or -1
    value: float             # volts, or a code when quantized
    quantized: bool
    n_units: int
    sum_weights: int         # signed weight sum of this phase (w+ or w- total)
    clipped: bool = False

    def volts(self, adc: AdcModel | None) -> float:
        if self.quantized:
            if adc is None:
                raise ValueError("quantized readout needs an AdcModel to decode")
            return dequantize(int(self.value), adc)
        return self.value


def sample_tile(tile: TileState, cfg: ValidatedConfig,
                adc: AdcModel | None = None,
                extra_voltage: float = 0.0,
                sum_weights: int = 0) -> PhaseReadout:
    """Sample the redistributed tile voltage through S/H and (optionally) ADC."""
    if tile.phase is not TilePhase.READY:
        raise NotReady(f"tile {tile.tile_id} is {tile.phase.value}, not ready")
    v = splice_voltages(tile.voltages, tile.caps) + extra_voltage
    if adc is None:
        return PhaseReadout(tile_id=tile.tile_id, phase_sign=tile.phase_sign,
                            value=v, quantized=False, n_units=tile.n_units,
                            sum_weights=sum_weights)
    return PhaseReadout(tile_id=tile.tile_id, phase_sign=tile.phase_sign,
                        value=float(quantize(v, adc)), quantized=True,
                        n_units=tile.n_units, sum_weights=sum_weights,
                        clipped=is_clipped(v, adc))


def subtract_phases(neg: PhaseReadout, pos: PhaseReadout,
                    adc: AdcModel | None, cfg: ValidatedConfig,
                    *, k_expo: float | None = None,
                    correct_dark: bool = False) -> float:
    """Reconstruct sum(I*w) from the negative- and positive-phase readouts.

    Scale factor is the nominal n_units * c_fd / k_expo. The residual dark
    term I_dark * sum(w) is left in place unless correct_dark is set (the
    signed weight sum is statistically close to zero for trained kernels).
    """
    if neg.tile_id != pos.tile_id:
        raise PhaseMismatch(
            f"phase readouts from different tiles: {neg.tile_id} vs {pos.tile_id}")
    if neg.n_units != pos.n_units:
        raise PhaseMismatch(
            f"tile {neg.tile_id}: phase unit counts differ "
            f"({neg.n_units} vs {pos.n_units})")
    k = cfg.k_expo if k_expo is None else float(k_expo)
    du = neg.volts(adc) - pos.volts(adc)
    mac = du * neg.n_units * cfg.c_fd / k
    if correct_dark:
        mac -= cfg.i_dark * (pos.sum_weights - neg.sum_weights)
    return mac


def mac_lsb(adc: AdcModel, n_units: int, cfg: ValidatedConfig,
            k_expo: float | None = None) -> float:
    """One ADC LSB expressed in MAC units (A * weight LSB)."""
    k = cfg.k_expo if k_expo is None else float(k_expo)
    return adc.lsb_volts * n_units * cfg.c_fd / k


def read_group(group, schedule, states: dict, cfg: ValidatedConfig,
               *, adc: AdcModel | None = None,
               extra_voltage=None) -> list[list[PhaseReadout]]:
    """Read every tile of a group (three tile-rows at once, one per enable).

    states maps tile_id to TileState; read tiles are marked read in place.
    Returns one list of readouts per tile-row. Raises NotReady if any member
    tile is not ready (e.g. the group was already read this phase).
    """
    rows: list[list[PhaseReadout]] = []
    for tile_row in group.tile_rows:
        row_samples = []
        for tile in group.tiles:
            if tile.out_y != tile_row:
                continue
            state = states[tile.tile_id]
            dv = 0.0 if extra_voltage is None else float(extra_voltage(tile))
            sample = sample_tile(state, cfg, adc=adc, extra_voltage=dv)
            states[tile.tile_id] = mark_read(state)
            row_samples.append(sample)
        rows.append(row_samples)
    return rows
