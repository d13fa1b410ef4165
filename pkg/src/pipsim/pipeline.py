"""End-to-end frame simulation: schedule, expose, read, subtract, rebuild.

The chain per tile and phase is reset -> PWM exposure -> charge
redistribution -> sample/ADC -> two-phase digital subtraction; sub-kernel
passes accumulate into the channel's feature map. Exposure is auto-scaled
by default so the worst-case tile drop stays inside the usable FD swing.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import SATURATION_MARGIN, window_weighted_sum
from .core import (
    MAX_WEIGHT_STEPS,
    FeatureMap,
    PhotocurrentMap,
    UnsupportedGeometry,
    ValidatedConfig,
    WeightKernel,
)
from .noise import NoiseModel, SensorInstance, apply_exposure_noise
from .optics import Scene, photocurrents
from .pixel_engine import expose_tile, make_tile, mark_read, reset_tile
from .readout import AdcModel, sample_tile, subtract_phases
from .scheduler import (
    POLICY_FULL_COVERAGE,
    TileSchedule,
    build_timeline,
    plan_steps,
    subkernel_plan,
)

THREADS_ENV = "PIPSIM_THREADS"


def _worker_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def auto_k_expo(currents: PhotocurrentMap, kernels: list[WeightKernel],
                cfg: ValidatedConfig, stride_px: int) -> float:
    """Largest exposure constant keeping every tile drop within the margin.

    Scans every sub-kernel, phase, and tile position for the worst
    charge-per-capacitance ratio; nominal capacitances (the controller does
    not know the mismatch map).
    """
    u = stride_px // 2
    lifted = currents.currents + cfg.i_dark
    worst = 0.0
    for kernel in kernels:
        r = kernel.r
        out_h = (cfg.unit_height - r) // u + 1
        out_w = (cfg.unit_width - r) // u + 1
        for sub in subkernel_plan(r):
            w = sub.weights_px(kernel).astype(np.float64)
            n_units = 3 * r
            for wp in (np.maximum(w, 0.0), np.maximum(-w, 0.0)):
                if not wp.any():
                    continue
                sums = window_weighted_sum(lifted, wp, out_h, out_w, u,
                                           sub.col_offset_units)
                worst = max(worst, float(sums.max()) / n_units)
    if worst <= 0.0:
        return cfg.k_expo
    return SATURATION_MARGIN * cfg.v_swing * cfg.c_fd / worst


@dataclass
class SimulationResult:
    features: list[FeatureMap]
    schedule: TileSchedule
    k_expo: float
    saturated_tiles: int
    codes: list[tuple] = field(default_factory=list)  # raw readout log

    @property
    def out_shape(self) -> tuple[int, int]:
        return self.features[0].values.shape


def _resolve_adc(adc, cfg: ValidatedConfig) -> AdcModel | None:
    if adc is None or adc == "bypass":
        return None
    if adc == "model":
        return AdcModel.from_config(cfg)
    if isinstance(adc, AdcModel):
        return adc
    raise ValueError(f"adc must be 'model', 'bypass', None, or AdcModel, got {adc!r}")


def _simulate_channel(kernel: WeightKernel, sched: TileSchedule,
                      currents: PhotocurrentMap, cfg: ValidatedConfig,
                      adc: AdcModel | None, sensor: SensorInstance | None,
                      k_used: float, window: float, dark_correction: bool,
                      collect_codes: bool):
    acc = np.zeros((sched.out_h, sched.out_w))
    covered = np.zeros((sched.out_h, sched.out_w), dtype=np.int32)
    saturated = 0
    codes: list[tuple] = []
    channel = kernel.channel_id
    for p_idx, pp in enumerate(sched.passes):
        w_sub = pp.subkernel.weights_px(kernel)
        w_pos = np.maximum(w_sub, 0)
        w_neg = np.maximum(-w_sub, 0)
        sums = (int(w_pos.sum()), int(w_neg.sum()))
        for step in pp.steps:
            for group in step.groups:
                for tile in group.tiles:
                    caps = None
                    if sensor is not None:
                        caps = sensor.tile_caps(tile.origin_y, tile.origin_x,
                                                tile.h_units, tile.w_units)
                    state = make_tile(tile.tile_id, tile.origin_y,
                                      tile.origin_x, tile.h_units,
                                      tile.w_units, cfg, caps)
                    samples = {}
                    for phase_index, (sign, wp, sw) in enumerate(
                            ((1, w_pos, sums[0]), (-1, w_neg, sums[1]))):
                        state = reset_tile(state, cfg)
                        state = expose_tile(state, wp, currents, cfg,
                                            k_expo=k_used, window=window,
                                            phase_sign=sign)
                        if sensor is not None:
                            state = apply_exposure_noise(state, sensor,
                                                         phase_index, channel)
                        saturated += int(state.saturated)
                        dv = 0.0
                        if sensor is not None:
                            dv = (sensor.readout_offset(tile)
                                  + sensor.read_sample_voltage(
                                      tile.tile_id, phase_index, channel))
                        sample = sample_tile(state, cfg, adc=adc,
                                             extra_voltage=dv, sum_weights=sw)
                        samples[sign] = sample
                        state = mark_read(state)
                        if collect_codes:
                            codes.append((channel, p_idx, step.index,
                                          group.index, tile.origin_x, sign,
                                          sample.value))
                    mac = subtract_phases(samples[-1], samples[1], adc, cfg,
                                          k_expo=k_used,
                                          correct_dark=dark_correction)
                    acc[tile.out_y, tile.out_x] += mac
                    covered[tile.out_y, tile.out_x] += 1
    n_passes = len(sched.passes)
    values = np.where(covered == n_passes, acc, np.nan)
    return values, covered, saturated, codes


def simulate_frame(cfg: ValidatedConfig, scene, kernels: list[WeightKernel],
                   *, stride_px: int, policy: str = POLICY_FULL_COVERAGE,
                   noise_model: NoiseModel | None = None,
                   adc="bypass",
                   k_expo="auto",
                   dark_correction: bool = False,
                   collect_codes: bool = False,
                   threads: int | None = None) -> SimulationResult:
    """Simulate one full computing-mode frame for every kernel channel."""
    if not kernels:
        raise UnsupportedGeometry("need at least one kernel")
    r = kernels[0].r
    if any(k.r != r for k in kernels):
        raise UnsupportedGeometry("all channels must share one kernel side")

    currents = photocurrents(scene, cfg) if isinstance(scene, Scene) else scene

    if k_expo == "auto" or k_expo is None:
        k_used = auto_k_expo(currents, kernels, cfg, stride_px)
    else:
        k_used = float(k_expo)
        if k_used <= 0:
            raise ValueError("k_expo must be positive")
    window = k_used * MAX_WEIGHT_STEPS

    sched = plan_steps(r, stride_px, cfg, policy)
    sched = build_timeline(sched, cfg, t_expo=window)

    adc_model = _resolve_adc(adc, cfg)
    sensor = None
    if noise_model is not None and noise_model.any_enabled:
        sensor = SensorInstance(noise_model, cfg)

    provenance = "ideal" if sensor is None else f"noisy(seed={noise_model.seed})"
    if adc_model is not None:
        provenance += f"+adc{adc_model.bits}"

    def run(kernel):
        return _simulate_channel(kernel, sched, currents, cfg, adc_model,
                                 sensor, k_used, window, dark_correction,
                                 collect_codes)

    workers = _worker_count(threads)
    if workers > 1 and len(kernels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, kernels))
    else:
        results = [run(k) for k in kernels]

    features = []
    saturated_total = 0
    codes: list[tuple] = []
    for kernel, (values, covered, saturated, ch_codes) in zip(kernels, results):
        features.append(FeatureMap(
            values=values, channel_id=kernel.channel_id, r=r,
            stride_px=stride_px, policy=policy, provenance=provenance,
            units="mac",
            metadata={"k_expo": k_used, "dark_correction": dark_correction},
        ))
        saturated_total += saturated
        codes.extend(ch_codes)
    return SimulationResult(features=features, schedule=sched, k_expo=k_used,
                            saturated_tiles=saturated_total, codes=codes)


def dump_codes_csv(result: SimulationResult, path) -> None:
    lines = ["channel,pass,step,group,column,phase,code"]
    for ch, p, st, g, col, sign, value in result.codes:
        lines.append(f"{ch},{p},{st},{g},{col},{sign:+d},{value:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def traditional_frame(cfg: ValidatedConfig, scene, *, t_expo: float | None = None,
                      adc="bypass") -> tuple[np.ndarray, np.ndarray]:
    """Traditional-mode raw frame: per-photodiode readout voltages and the
    reconstructed optical power map (W/m^2)."""
    currents = photocurrents(scene, cfg) if isinstance(scene, Scene) else scene
    i = currents.currents
    if t_expo is None:
        peak = float(i.max()) + cfg.i_dark
        t_expo = (SATURATION_MARGIN * cfg.v_swing * cfg.c_fd / peak
                  if peak > 0 else cfg.t_expo_max)
    v = cfg.v_rst - (i + cfg.i_dark) * t_expo / cfg.c_fd
    v = np.maximum(v, cfg.v_min)
    adc_model = _resolve_adc(adc, cfg)
    if adc_model is not None:
        scale = adc_model.n_codes - 1
        codes = np.floor((v - adc_model.v_lo) / (adc_model.v_hi - adc_model.v_lo)
                         * scale + 0.5)
        codes = np.clip(codes, 0, scale)
        v = adc_model.v_lo + codes / scale * (adc_model.v_hi - adc_model.v_lo)
    i_est = (cfg.v_rst - v) * cfg.c_fd / t_expo - cfg.i_dark
    power = np.maximum(i_est, 0.0) / (cfg.responsivity * cfg.pd_area)
    return v, power


def ideal_signal_power_volts(refs: list[FeatureMap], cfg: ValidatedConfig,
                             k_expo: float) -> float:
    """Mean squared subtracted-readout voltage of a reference feature map."""
    total = 0.0
    count = 0
    for ref in refs:
        n_units = 3 * ref.r
        volts = ref.values * k_expo / (n_units * cfg.c_fd)
        total += float(np.sum(volts ** 2))
        count += volts.size
    if count == 0 or total == 0.0:
        raise ValueError("reference maps have no signal power")
    return total / count


@dataclass(frozen=True)
class SweepCell:
    sigma_cap: float
    snr_db: float | None      # None means no injected noise
    mean_rms: float
    trials: int
    seed: int                 # base seed the per-trial streams derive from


def rms_error_sweep(cfg: ValidatedConfig, scene, kernels: list[WeightKernel],
                    *, stride_px: int, snr_grid_db, mismatch_grid,
                    trials: int, seed: int,
                    policy: str = POLICY_FULL_COVERAGE) -> list[SweepCell]:
    """Mean RMS error against the direct-convolution reference over a grid of
    injected-SNR levels and capacitor-mismatch levels."""
    from .analysis import compare, oracle_conv

    if trials < 1:
        raise ValueError("trials must be >= 1")
    currents = photocurrents(scene, cfg) if isinstance(scene, Scene) else scene
    refs = oracle_conv(currents, kernels, stride_px)
    k_used = auto_k_expo(currents, kernels, cfg, stride_px)
    p_signal = ideal_signal_power_volts(refs, cfg, k_used)

    from .noise import inject_target_snr

    cells = []
    for sigma_c in mismatch_grid:
        for snr_db in snr_grid_db:
            sigma_inject = 0.0 if snr_db is None else inject_target_snr(
                p_signal, snr_db)
            rms_values = []
            for trial in range(trials):
                sub = int(np.random.SeedSequence(
                    (seed, int(round(sigma_c * 1000)),
                     0 if snr_db is None else int(round(snr_db * 10)) + 10_000,
                     trial)).generate_state(1)[0])
                model = NoiseModel(sigma_cap=float(sigma_c),
                                   sigma_inject=sigma_inject, seed=sub)
                result = simulate_frame(
                    cfg, currents, kernels, stride_px=stride_px, policy=policy,
                    noise_model=model, adc="bypass", k_expo=k_used)
                for fm, ref in zip(result.features, refs):
                    rms_values.append(compare(fm, ref).rms)
            cells.append(SweepCell(sigma_cap=float(sigma_c), snr_db=snr_db,
                                   mean_rms=float(np.mean(rms_values)),
                                   trials=trials, seed=seed))
    return cells


def sweep_to_csv(cells: list[SweepCell], path) -> None:
    lines = ["sigma_cap,snr_db,mean_rms,trials,seed"]
    for c in cells:
        snr = "" if c.snr_db is None else f"{c.snr_db:g}"
        lines.append(f"{c.sigma_cap:g},{snr},{c.mean_rms:.10g},{c.trials},"
                     f"{c.seed}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
