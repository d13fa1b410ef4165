import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipsim.core import NotReady, PhaseMismatch, PhotocurrentMap
from pipsim.pixel_engine import expose_tile, make_tile, mark_read, reset_tile
from pipsim.readout import (
    AdcModel,
    PhaseReadout,
    dequantize,
    mac_lsb,
    quantize,
    read_group,
    sample_tile,
    subtract_phases,
)
from pipsim.scheduler import POLICY_FULL_COVERAGE, plan_steps

from conftest import make_cfg

GOLDEN_K = 26.04e-6 / 128


def adc10():
    return AdcModel(bits=10, v_lo=0.4, v_hi=1.8, f_adc=330e3)


def ideal_cfg(**kw):
    kw.setdefault("width_px", 16)
    kw.setdefault("height_px", 16)
    kw.setdefault("i_dark", 0.0)
    kw.setdefault("r_leak", math.inf)
    return make_cfg(**kw)


def test_quantize_full_scale():
    assert quantize(1.8, adc10()) == 1023


def test_quantize_zero_scale():
    assert quantize(0.4, adc10()) == 0


def test_quantize_midpoint_rounds_up():
    # (1.1 - 0.4) / 1.4 * 1023 = 511.5 -> 512 round-to-nearest
    assert quantize(1.1, adc10()) == 512


def test_quantize_clamps_out_of_range():
    assert quantize(2.5, adc10()) == 1023
    assert quantize(-0.2, adc10()) == 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 3.0), st.floats(-1.0, 3.0))
def test_quantize_monotone(a, b):
    adc = adc10()
    if a <= b:
        assert quantize(a, adc) <= quantize(b, adc)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1023))
def test_code_volts_code_idempotent(code):
    adc = adc10()
    assert quantize(dequantize(code, adc), adc) == code


def phase_readout(value, sign, tile_id=7, quantized=True, n_units=9, sum_w=0):
    return PhaseReadout(tile_id=tile_id, phase_sign=sign, value=value,
                        quantized=quantized, n_units=n_units, sum_weights=sum_w)


def test_identical_codes_subtract_to_zero():
    cfg = ideal_cfg()
    mac = subtract_phases(phase_readout(500, -1), phase_readout(500, 1),
                          adc10(), cfg)
    assert mac == 0.0


def test_phase_mismatch_raises():
    cfg = ideal_cfg()
    with pytest.raises(PhaseMismatch):
        subtract_phases(phase_readout(500, -1, tile_id=1),
                        phase_readout(500, 1, tile_id=2), adc10(), cfg)


def expose_golden_pair(cfg, weights_pos, weights_neg, amps=7e-11, k=GOLDEN_K):
    currents = PhotocurrentMap(
        currents=np.full((cfg.height_px, cfg.width_px), amps))
    t = make_tile(0, 0, 0, 3, 3, cfg)
    t = reset_tile(t, cfg)
    pos = expose_tile(t, weights_pos, currents, cfg, k_expo=k, phase_sign=1)
    t = reset_tile(mark_read(pos), cfg)
    neg = expose_tile(t, weights_neg, currents, cfg, k_expo=k, phase_sign=-1)
    return pos, neg


def test_one_sided_kernel_equals_rescaled_drop():
    cfg = ideal_cfg()
    w = np.full((6, 6), 100, dtype=int)
    pos, neg = expose_golden_pair(cfg, w, np.zeros((6, 6), dtype=int))
    sp = sample_tile(pos, cfg)
    sn = sample_tile(neg, cfg)
    mac = subtract_phases(sn, sp, None, cfg, k_expo=GOLDEN_K)
    drop = cfg.v_rst - pos.voltages[0]
    assert mac == pytest.approx(drop * 9 * cfg.c_fd / GOLDEN_K, rel=1e-12)
    # which is the direct sum: 36 photodiodes * 7e-11 A * weight 100
    assert mac == pytest.approx(36 * 7e-11 * 100, rel=1e-9)


def test_quantized_golden_tile_within_one_lsb():
    cfg = ideal_cfg()
    adc = adc10()
    w = np.full((6, 6), 100, dtype=int)
    pos, neg = expose_golden_pair(cfg, w, np.zeros((6, 6), dtype=int))
    sp = sample_tile(pos, cfg, adc=adc)
    sn = sample_tile(neg, cfg, adc=adc)
    mac = subtract_phases(sn, sp, adc, cfg, k_expo=GOLDEN_K)
    exact = 36 * 7e-11 * 100
    assert abs(mac - exact) <= mac_lsb(adc, 9, cfg, k_expo=GOLDEN_K)


def test_signed_kernel_through_both_phases(rng):
    cfg = ideal_cfg()
    w = rng.integers(-128, 128, size=(6, 6))
    currents = PhotocurrentMap(
        currents=rng.uniform(0, 1e-10, size=(cfg.height_px, cfg.width_px)))
    t = reset_tile(make_tile(0, 0, 0, 3, 3, cfg), cfg)
    pos = expose_tile(t, np.maximum(w, 0), currents, cfg, phase_sign=1)
    t2 = reset_tile(mark_read(pos), cfg)
    neg = expose_tile(t2, np.maximum(-w, 0), currents, cfg, phase_sign=-1)
    mac = subtract_phases(sample_tile(neg, cfg), sample_tile(pos, cfg),
                          None, cfg)
    exact = float((currents.currents[:6, :6] * w).sum())
    assert mac == pytest.approx(exact, rel=1e-9)


def test_dark_correction_removes_residual():
    cfg = make_cfg(width_px=16, height_px=16, i_dark=5e-14, r_leak=math.inf)
    w = np.full((6, 6), 60, dtype=int)  # sum w = 2160, all positive
    pos, neg = expose_golden_pair(cfg, w, np.zeros((6, 6), dtype=int))
    sp = sample_tile(pos, cfg, sum_weights=int(w.sum()))
    sn = sample_tile(neg, cfg, sum_weights=0)
    raw = subtract_phases(sn, sp, None, cfg, k_expo=GOLDEN_K)
    corrected = subtract_phases(sn, sp, None, cfg, k_expo=GOLDEN_K,
                                correct_dark=True)
    exact = 36 * 7e-11 * 60
    assert raw == pytest.approx(exact + cfg.i_dark * w.sum(), rel=1e-9)
    assert corrected == pytest.approx(exact, rel=1e-9)


# --- read_group ---------------------------------------------------------------

def exposed_states(cfg, sched, step, currents):
    states = {}
    for tile in step.tiles:
        t = reset_tile(make_tile(tile.tile_id, tile.origin_y, tile.origin_x,
                                 tile.h_units, tile.w_units, cfg), cfg)
        states[tile.tile_id] = expose_tile(
            t, np.full((2 * tile.h_units, 2 * tile.w_units), 10, dtype=int),
            currents, cfg, phase_sign=1)
    return states


def test_read_group_emits_three_rows():
    cfg = make_cfg(width_px=64, height_px=64, i_dark=0.0, r_leak=math.inf)
    sched = plan_steps(3, 2, cfg, POLICY_FULL_COVERAGE)
    step = sched.steps[0]
    currents = PhotocurrentMap(currents=np.full((64, 64), 5e-11))
    states = exposed_states(cfg, sched, step, currents)
    group = step.groups[0]
    assert len(group.tile_rows) == 3
    rows = read_group(group, sched, states, cfg)
    assert len(rows) == 3
    assert all(len(row) > 0 for row in rows)


def test_read_group_edge_group_short():
    cfg = make_cfg(width_px=32, height_px=32, i_dark=0.0, r_leak=math.inf)
    sched = plan_steps(3, 2, cfg, POLICY_FULL_COVERAGE)
    step = sched.steps[0]  # 4 tile-rows -> groups of 3 + 1
    currents = PhotocurrentMap(currents=np.full((32, 32), 5e-11))
    states = exposed_states(cfg, sched, step, currents)
    last = step.groups[-1]
    assert len(last.tile_rows) < 3
    rows = read_group(last, sched, states, cfg)
    assert len(rows) == len(last.tile_rows)


def test_read_group_twice_raises_not_ready():
    cfg = make_cfg(width_px=64, height_px=64, i_dark=0.0, r_leak=math.inf)
    sched = plan_steps(3, 2, cfg, POLICY_FULL_COVERAGE)
    step = sched.steps[0]
    currents = PhotocurrentMap(currents=np.full((64, 64), 5e-11))
    states = exposed_states(cfg, sched, step, currents)
    group = step.groups[0]
    read_group(group, sched, states, cfg)
    with pytest.raises(NotReady):
        read_group(group, sched, states, cfg)
