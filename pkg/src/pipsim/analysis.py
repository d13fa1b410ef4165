"""Analytical rate/power/efficiency calculators, the convolution oracle,
and comparison metrics.

Rate model. The minimum column-ADC conversion rate for frame rate f,
channel count n, array height H (pixels), kernel side r, stride s is

    f_adc_min = 2 f n H (r - 1) / (3 s)

and the maximum achievable channel-frame rate for an exposure budget T is

    f_real_max = s / ([2 (r + 1) + s] (r - 1) T)

The rate tables evaluate f_adc_min at the achievable channel rate,
i.e. with f*n capped at f_real_max for the same exposure budget.

Power model. Component powers are calibration constants for the baseline
row (60 fps, 3x3, stride 2) and scale as: pixel power with frame rate,
kernel work (2 r^2 / 18), and readout density (4 / s^2); readout and ADC
power with frame rate and readout density only. Efficiency divides total
counted operations (2 r^2 per kernel position) by total power; the energy
figure of merit divides power by pixels * frames * output channels. The
baseline constants are calibration data quoted at two decimals; they are
dequantized so that every scaled row reproduces the quoted values at two
decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatch,
    FeatureMap,
    PhotocurrentMap,
    UnsupportedGeometry,
    ValidatedConfig,
    WeightKernel,
)
from .optics import LUX_TO_W_PER_M2
from .scheduler import equivalent_exposures

# Table-calibration constants (baseline row: 60 fps, r=3, s=2, 128x128, 64 ch).
CALIB_P_PIXEL = 63.936e-6   # W; prints as 63.94 uW
CALIB_P_READOUT = 4.02e-6   # W
CALIB_P_ADC = 177.17e-6     # W
CALIB_FPS = 60.0
CALIB_R = 3
CALIB_S = 2
CALIB_IN_CH = 4             # RGGB planes
CALIB_OUT_CH = 64
CALIB_H = 128
CALIB_W = 128

SATURATION_MARGIN = 0.9     # usable fraction of the FD swing


@dataclass(frozen=True)
class RateReport:
    r: int
    s: int
    f: float                 # requested frame rate, Hz
    n: int                   # output channels
    h_px: int
    t_expo: float            # exposure budget, s
    f_adc_min: float         # Hz
    f_real_max: float        # channel-frames/s, exact value
    f_real_max_floor: int    # as printed in rate tables

    @property
    def f_real_requested(self) -> float:
        return self.f * self.n


@dataclass(frozen=True)
class PowerReport:
    fps: float
    r: int
    s: int
    p_pixel: float           # W
    p_readout: float         # W
    p_adc: float             # W
    p_total: float           # W
    total_ops: float         # OPS/s
    efficiency: float        # OPS/W
    fom: float               # J per pixel per frame per channel

    @property
    def efficiency_tops_w(self) -> float:
        return self.efficiency / 1e12

    @property
    def fom_pj(self) -> float:
        return self.fom / 1e-12


def min_adc_rate(f: float, n: int, h_px: int, r: int, s: int) -> float:
    """f_adc_min = 2 f n H (r-1) / (3 s)."""
    if f <= 0 or n <= 0 or h_px <= 0 or r <= 1 or s <= 0:
        raise ValueError("rate arguments must be positive (and r > 1)")
    return 2.0 * f * n * h_px * (r - 1) / (3.0 * s)


def max_real_frame_rate(r: int, s: int, t_expo: float) -> float:
    """f_real_max = s / ([2(r+1)+s] (r-1) T_expo), channel-frames per second."""
    if r <= 1 or s <= 0 or t_expo <= 0:
        raise ValueError("rate arguments must be positive (and r > 1)")
    return s / ((2.0 * (r + 1) + s) * (r - 1) * t_expo)


def default_t_expo(f: float = 60.0, n: int = 64, s: int = 2) -> float:
    """Exposure budget that makes the requested f*n exactly achievable for a
    3x3 kernel: the design point usually quoted as 26.04 us."""
    return s / ((2.0 * (CALIB_R + 1) + s) * (CALIB_R - 1) * f * n)


def rate_report(r: int, s: int, f: float = 60.0, n: int = 64,
                h_px: int = 128, t_expo: float | None = None) -> RateReport:
    if r not in (3, 5, 7, 9):
        raise UnsupportedGeometry(f"kernel side {r} not supported")
    if s not in (2, 4):
        raise UnsupportedGeometry(f"stride {s} not supported")
    t = default_t_expo(f, n, s) if t_expo is None else float(t_expo)
    f_real = max_real_frame_rate(r, s, t)
    f_eff = min(f * n, f_real)  # the ADC only has to keep up with what runs
    f_adc = 2.0 * f_eff * h_px * (r - 1) / (3.0 * s)
    return RateReport(r=r, s=s, f=f, n=n, h_px=h_px, t_expo=t,
                      f_adc_min=f_adc, f_real_max=f_real,
                      f_real_max_floor=int(math.floor(f_real)))


def total_ops(out_h: int, out_w: int, in_ch: int, out_ch: int,
              fps: float, r: int) -> float:
    """Counted operations per second; 2 r^2 OPs per kernel position
    (one multiply plus one add per unit)."""
    if min(out_h, out_w, in_ch, out_ch) <= 0 or fps <= 0 or r < 1:
        raise ValueError("total_ops arguments must be positive")
    return float(out_h) * out_w * in_ch * out_ch * fps * 2 * r * r


@dataclass(frozen=True)
class PowerCalibration:
    p_pixel: float = CALIB_P_PIXEL
    p_readout: float = CALIB_P_READOUT
    p_adc: float = CALIB_P_ADC


def power_model(fps: float, r: int, s: int,
                calib: PowerCalibration = PowerCalibration()) -> PowerReport:
    if fps <= 0:
        raise ValueError("fps must be positive")
    if r not in (3, 5, 7, 9):
        raise UnsupportedGeometry(f"kernel side {r} not supported")
    if s not in (2, 4):
        raise UnsupportedGeometry(f"stride {s} not supported")
    rate_scale = fps / CALIB_FPS
    stride_scale = (CALIB_S / s) ** 2
    kernel_scale = (2.0 * r * r) / (2.0 * CALIB_R * CALIB_R)
    p_pixel = calib.p_pixel * rate_scale * stride_scale * kernel_scale
    p_readout = calib.p_readout * rate_scale * stride_scale
    p_adc = calib.p_adc * rate_scale * stride_scale
    p_total = p_pixel + p_readout + p_adc
    ops = total_ops(CALIB_H // s, CALIB_W // s, CALIB_IN_CH, CALIB_OUT_CH, fps, r)
    return PowerReport(
        fps=fps, r=r, s=s,
        p_pixel=p_pixel, p_readout=p_readout, p_adc=p_adc, p_total=p_total,
        total_ops=ops,
        efficiency=ops / p_total,
        fom=p_total / (CALIB_H * CALIB_W * fps * CALIB_OUT_CH),
    )


def window_weighted_sum(currents_px: np.ndarray, weights_px: np.ndarray,
                        out_h: int, out_w: int, u_units: int,
                        col_offset_units: int = 0) -> np.ndarray:
    """sum(I * w) over each kernel window on the output grid (stride u units)."""
    kh, kw = weights_px.shape
    out = np.zeros((out_h, out_w))
    step = 2 * u_units
    x_base = 2 * col_offset_units
    for dy in range(kh):
        for dx in range(kw):
            w = weights_px[dy, dx]
            if w == 0:
                continue
            block = currents_px[dy:dy + step * (out_h - 1) + 1:step,
                                x_base + dx:x_base + dx + step * (out_w - 1) + 1:step]
            out += w * block
    return out


def oracle_conv(currents: PhotocurrentMap, kernels: list[WeightKernel],
                s: int) -> list[FeatureMap]:
    """Exact direct convolution, sum(I_i * w_i) per valid output position.

    Valid-mode geometry on the unit grid with stride s/2 units; double
    precision throughout. Reference for every simulated chain.
    """
    if s not in (2, 4):
        raise UnsupportedGeometry(f"stride {s} not supported")
    u = s // 2
    h_px, w_px = currents.currents.shape
    maps = []
    for kernel in kernels:
        r = kernel.r
        unit_h, unit_w = h_px // 2, w_px // 2
        if unit_h < r or unit_w < r:
            raise DimensionMismatch(
                f"scene {unit_h}x{unit_w} units smaller than kernel {r}")
        out_h = (unit_h - r) // u + 1
        out_w = (unit_w - r) // u + 1
        vals = window_weighted_sum(
            currents.currents, kernel.weights.astype(np.float64),
            out_h, out_w, u)
        maps.append(FeatureMap(values=vals, channel_id=kernel.channel_id,
                               r=r, stride_px=s, policy="oracle",
                               provenance="oracle", units="mac"))
    return maps


@dataclass(frozen=True)
class ErrorMetrics:
    rms: float              # RMS error normalized to the reference RMS
    max_abs: float
    ref_rms: float
    error_grid: np.ndarray


def compare(sim: FeatureMap, ref: FeatureMap) -> ErrorMetrics:
    """Error metrics with RMS normalized to the reference RMS."""
    if sim.values.shape != ref.values.shape:
        raise DimensionMismatch(
            f"feature maps differ: {sim.values.shape} vs {ref.values.shape}")
    err = sim.values - ref.values
    ref_rms = float(np.sqrt(np.mean(ref.values ** 2)))
    rms = float(np.sqrt(np.mean(err ** 2)))
    return ErrorMetrics(
        rms=rms / ref_rms if ref_rms > 0 else rms,
        max_abs=float(np.max(np.abs(err))),
        ref_rms=ref_rms,
        error_grid=err,
    )


def exposure_time_for_illuminance(lux: float, cfg: ValidatedConfig) -> float:
    """Integration time that uses the usable FD swing at this illuminance."""
    if lux <= 0:
        return math.inf
    i_ph = cfg.responsivity * (lux * LUX_TO_W_PER_M2) * cfg.pd_area
    return SATURATION_MARGIN * cfg.v_swing * cfg.c_fd / i_ph


def frame_rate_curve(illuminance_lux, cfg: ValidatedConfig, mode: str,
                     r: int = 3, s: int = 2) -> list[tuple[float, float]]:
    """(lux, max frame rate) samples; the rate is the lower of the
    exposure-limited and ADC-limited rates for the mode.

    Computing mode needs equivalent_exposures(r, s) exposure slots per
    channel frame and reads three tile rows per conversion; Traditional
    mode needs one exposure and four conversions per unit row. Computing
    rates are channel-frames/s, Traditional rates are frames/s.
    """
    if mode not in ("computing", "traditional"):
        raise ValueError(f"mode must be computing|traditional, got {mode!r}")
    points = []
    for lux in illuminance_lux:
        t_expo = exposure_time_for_illuminance(lux, cfg)
        if mode == "computing":
            expo_limited = 1.0 / (equivalent_exposures(r, s) * t_expo)
            adc_limited = 3.0 * s * cfg.f_adc / (2.0 * cfg.height_px * (r - 1))
        else:
            expo_limited = 1.0 / t_expo
            adc_limited = cfg.f_adc / (2.0 * cfg.height_px)
        points.append((float(lux), min(expo_limited, adc_limited)))
    return points


def format_rate_hz(hz: float) -> str:
    if hz >= 1e6:
        return f"{hz / 1e6:.2f} MHz"
    return f"{hz / 1e3:.2f} kHz"
