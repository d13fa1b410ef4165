import math

import numpy as np
import pytest

from pipsim.core import K_BOLTZMANN, PhotocurrentMap, random_kernel
from pipsim.noise import (
    NoiseModel,
    SensorInstance,
    apply_mismatch,
    averaging_gain,
    inject_target_snr,
    ktc_variance,
    sample_noise,
)
from pipsim.pixel_engine import expose_tile, make_tile, reset_tile
from pipsim.pipeline import simulate_frame
from pipsim.optics import Scene

from conftest import make_cfg


def ideal_cfg(**kw):
    kw.setdefault("width_px", 16)
    kw.setdefault("height_px", 16)
    kw.setdefault("i_dark", 0.0)
    kw.setdefault("r_leak", math.inf)
    return make_cfg(**kw)


def exposed_tile(cfg, weights=None, amps=7e-11):
    currents = PhotocurrentMap(
        currents=np.full((cfg.height_px, cfg.width_px), amps))
    w = np.full((6, 6), 80, dtype=int) if weights is None else weights
    t = reset_tile(make_tile(0, 0, 0, 3, 3, cfg), cfg)
    return expose_tile(t, w, currents, cfg, phase_sign=1)


def test_noiseless_model_is_identity():
    cfg = ideal_cfg()
    t = exposed_tile(cfg)
    out = sample_noise(t, 0, NoiseModel.ideal(), cfg)
    np.testing.assert_array_equal(out.voltages, t.voltages)


def test_reset_noise_variance_matches_ktc():
    """Sample variance over 1e5 single-unit resets within 5% of kT/C."""
    cfg = ideal_cfg()
    model = NoiseModel(enable_reset=True, seed=7)
    inst = SensorInstance(model, cfg)
    n = 100_000
    draws = np.array([inst.reset_voltage(i, 0, cfg.c_fd) for i in range(n)])
    var = draws.var()
    expected = ktc_variance(cfg.c_fd, model.temperature)
    assert expected == pytest.approx(K_BOLTZMANN * 300.0 / 22.2e-15, rel=1e-12)
    assert var == pytest.approx(expected, rel=0.05)
    assert draws.mean() == pytest.approx(cfg.v_rst, abs=5e-3)


def test_offset_fpn_cancels_in_two_phase_subtraction(rng):
    """Per-unit readout offsets are common to both phases."""
    from pipsim.readout import sample_tile, subtract_phases

    cfg = ideal_cfg()
    w = rng.integers(-100, 100, size=(6, 6))
    currents = PhotocurrentMap(
        currents=rng.uniform(0, 1e-10, size=(cfg.height_px, cfg.width_px)))
    model = NoiseModel(sigma_offset=5e-3, seed=3)
    inst = SensorInstance(model, cfg)

    class _Tile:
        origin_y, origin_x = 0, 0

    offset = inst.readout_offset(_Tile)
    assert offset != 0.0

    macs = {}
    for use_offset in (False, True):
        t = reset_tile(make_tile(0, 0, 0, 3, 3, cfg), cfg)
        pos = expose_tile(t, np.maximum(w, 0), currents, cfg, phase_sign=1)
        neg = expose_tile(reset_tile(pos, cfg), np.maximum(-w, 0), currents,
                          cfg, phase_sign=-1)
        dv = offset if use_offset else 0.0
        sp = sample_tile(pos, cfg, extra_voltage=dv)
        sn = sample_tile(neg, cfg, extra_voltage=dv)
        macs[use_offset] = subtract_phases(sn, sp, None, cfg)
    assert macs[True] == pytest.approx(macs[False], rel=1e-9, abs=1e-18)


def test_dsnu_cancels_with_equal_phase_windows(rng):
    """Per-unit dark offsets integrate over the same window in both phases."""
    from pipsim.readout import sample_tile, subtract_phases

    cfg = ideal_cfg()
    w = rng.integers(-100, 100, size=(6, 6))
    currents = PhotocurrentMap(
        currents=rng.uniform(0, 1e-10, size=(cfg.height_px, cfg.width_px)))
    window = cfg.t_expo_max

    def run(model):
        inst = None if model is None else SensorInstance(model, cfg)
        t = reset_tile(make_tile(0, 0, 0, 3, 3, cfg), cfg)
        pos = expose_tile(t, np.maximum(w, 0), currents, cfg,
                          window=window, phase_sign=1)
        neg = expose_tile(reset_tile(pos, cfg), np.maximum(-w, 0), currents,
                          cfg, window=window, phase_sign=-1)
        if inst is not None:
            from pipsim.noise import apply_exposure_noise
            pos = apply_exposure_noise(pos, inst, 0)
            neg = apply_exposure_noise(neg, inst, 1)
        return subtract_phases(sample_tile(neg, cfg), sample_tile(pos, cfg),
                               None, cfg)

    clean = run(None)
    noisy = run(NoiseModel(sigma_dsnu=1e-12, seed=11))
    assert noisy == pytest.approx(clean, rel=1e-9)


def test_averaging_gain_reference_values():
    noise, gain = averaging_gain(3, 3.0)  # sigma^2 = 9
    assert noise == pytest.approx(1.0)
    assert gain == pytest.approx(9.0)


def test_averaging_gain_single_unit():
    noise, gain = averaging_gain(1, 2.0)
    assert noise == pytest.approx(4.0)
    assert gain == pytest.approx(1.0)


def test_averaging_gain_monte_carlo(rng):
    sigma = 1.7
    draws = rng.normal(0.0, sigma, size=(40_000, 9))
    var_of_mean = draws.mean(axis=1).var()
    expected, _ = averaging_gain(3, sigma)
    assert var_of_mean == pytest.approx(expected, rel=0.05)


def test_apply_mismatch_zero_sigma(cfg):
    caps = apply_mismatch(cfg, 0.0, seed=1)
    np.testing.assert_array_equal(caps, np.full((64, 64), cfg.c_fd))


def test_apply_mismatch_statistics():
    cfg = make_cfg(width_px=640, height_px=640)  # 1.024e5 units
    caps = apply_mismatch(cfg, 0.05, seed=5)
    ratio = caps.std() / caps.mean()
    assert 0.045 <= ratio <= 0.055
    assert caps.min() >= 0.1 * cfg.c_fd
    assert abs(caps.mean() / cfg.c_fd - 1.0) < 5e-3


def test_apply_mismatch_deterministic(cfg):
    a = apply_mismatch(cfg, 0.1, seed=42)
    b = apply_mismatch(cfg, 0.1, seed=42)
    np.testing.assert_array_equal(a, b)
    c = apply_mismatch(cfg, 0.1, seed=43)
    assert not np.array_equal(a, c)


def test_inject_target_snr_definition():
    assert inject_target_snr(4.0, 0.0) == pytest.approx(2.0)  # noise == signal
    assert inject_target_snr(1.0, 20.0) == pytest.approx(0.1)  # 1% power


def test_inject_measured_snr_within_half_db(rng):
    p_signal = 2.5
    target = 20.0
    sigma = inject_target_snr(p_signal, target)
    noise = rng.normal(0.0, sigma, size=10_000)
    measured = 10.0 * math.log10(p_signal / noise.var())
    assert abs(measured - target) <= 0.5


def test_shot_noise_variance_scales_with_signal():
    cfg = ideal_cfg()
    model = NoiseModel(enable_shot=True, seed=9)
    inst = SensorInstance(model, cfg)
    n = 20_000
    results = {}
    for q in (2e-15, 4e-15):  # integrated charge per photodiode
        samples = np.array([
            inst.shot_sample(i, 0, np.array([q]))[0] for i in range(n)])
        results[q] = samples.var()
    # Poisson: var in charge^2 is q_e * Q, so doubling Q doubles the variance
    assert results[4e-15] == pytest.approx(2 * results[2e-15], rel=0.05)


def test_noisy_frame_bit_reproducible(rng):
    cfg = ideal_cfg(width_px=24, height_px=24)
    scene = Scene(power=rng.uniform(0, 2, size=(24, 24)))
    kernels = [random_kernel(3, rng, 0)]
    model = NoiseModel.default_on(seed=77)

    runs = []
    for _ in range(2):
        res = simulate_frame(cfg, scene, kernels, stride_px=2,
                             noise_model=model, adc="bypass")
        runs.append(res.features[0].values)
    np.testing.assert_array_equal(runs[0], runs[1])

    other = simulate_frame(cfg, scene, kernels, stride_px=2,
                           noise_model=NoiseModel.default_on(seed=78),
                           adc="bypass")
    assert not np.array_equal(runs[0], other.features[0].values)


def test_fpn_maps_fixed_per_instance(cfg):
    model = NoiseModel(sigma_prnu=0.02, sigma_dsnu=1e-13, sigma_offset=1e-3,
                       sigma_cap=0.1, seed=21)
    a = SensorInstance(model, cfg)
    b = SensorInstance(model, cfg)
    np.testing.assert_array_equal(a.prnu, b.prnu)
    np.testing.assert_array_equal(a.dsnu, b.dsnu)
    np.testing.assert_array_equal(a.offset, b.offset)
    np.testing.assert_array_equal(a.unit_caps, b.unit_caps)


def test_sample_noise_requires_exposed_tile():
    cfg = ideal_cfg()
    t = make_tile(0, 0, 0, 3, 3, cfg)
    with pytest.raises(ValueError):
        sample_noise(t, 0, NoiseModel.default_on(), cfg)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        NoiseModel(sigma_read=-1.0)
