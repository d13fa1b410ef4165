"""Charge dynamics of spliced pixel-unit tiles.

A tile is a block of pixel units whose FD nodes are wired in parallel while
it computes. During one exposure phase every photodiode i drains
(I_i + I_dark) for a time k_expo * w_i (pulse-width-modulated weight,
start-aligned), so the shared node ends at

    U = U_rst - k_expo * sum_i (I_i + I_dark) * w_i / C_total

with C_total the sum of the member unit capacitances (r^2 * c_fd for a
nominal full tile). Each unit also leaks toward 0 V through its own
resistor r_leak, which for equal caps gives the node a decay constant
r_leak * c_fd independent of the tile size. Integration is analytic over
the piecewise-constant drain current; no clock ticking.

Saturation below v_min clamps the result and sets a flag; it never wraps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import PhotocurrentMap, ValidatedConfig


class TilePhase(enum.Enum):
    RESET = "reset"
    READY = "ready"
    READ = "read"


@dataclass(frozen=True)
class TileState:
    """Electrical state of one tile; immutable, updates return new states."""

    tile_id: int
    origin_y: int              # unit row of the top-left member unit
    origin_x: int              # unit column
    h_units: int
    w_units: int
    caps: np.ndarray           # (h_units * w_units,) F, member FD capacitances
    voltages: np.ndarray       # (h_units * w_units,) V
    phase: TilePhase = TilePhase.RESET
    phase_sign: int = 0        # +1 positive exposure, -1 negative, 0 none yet
    saturated: bool = False
    # Bookkeeping from the last exposure, used by the noise model.
    q_signal_pd: np.ndarray | None = None  # per-photodiode signal charge, C
    q_dark_pd: np.ndarray | None = None    # per-photodiode dark charge, C
    window_s: float = 0.0

    @property
    def n_units(self) -> int:
        return self.h_units * self.w_units

    @property
    def cap_total(self) -> float:
        return float(self.caps.sum())

    @property
    def tag(self) -> str:
        if self.phase is TilePhase.READY and self.phase_sign:
            return "ready" + ("+" if self.phase_sign > 0 else "-")
        return self.phase.value


def make_tile(tile_id: int, origin_y: int, origin_x: int,
              h_units: int, w_units: int, cfg: ValidatedConfig,
              caps: np.ndarray | None = None) -> TileState:
    n = h_units * w_units
    if caps is None:
        caps = np.full(n, cfg.c_fd)
    else:
        caps = np.asarray(caps, dtype=np.float64).reshape(n)
        if np.any(caps <= 0):
            raise ValueError("unit capacitances must be positive")
    return TileState(
        tile_id=tile_id, origin_y=origin_y, origin_x=origin_x,
        h_units=h_units, w_units=w_units,
        caps=caps, voltages=np.full(n, cfg.v_rst),
    )


def reset_tile(tile: TileState, cfg: ValidatedConfig) -> TileState:
    """Force every member FD node to v_rst. Valid from any phase."""
    return replace(
        tile,
        voltages=np.full(tile.n_units, cfg.v_rst),
        phase=TilePhase.RESET,
        phase_sign=0,
        saturated=False,
        q_signal_pd=None,
        q_dark_pd=None,
        window_s=0.0,
    )


def splice_voltages(unit_voltages, unit_caps) -> float:
    """Shared voltage after connecting nodes in parallel: sum(CV)/sum(C)."""
    v = np.asarray(unit_voltages, dtype=np.float64)
    c = np.asarray(unit_caps, dtype=np.float64)
    if v.size == 0 or v.shape != c.shape:
        raise ValueError("voltages and caps must be equal-length and nonempty")
    if np.any(c <= 0):
        raise ValueError("capacitances must be positive")
    return float(np.dot(c, v) / c.sum())


def _leaky_final_voltage(u0: float, q_sig_pd: np.ndarray, durations: np.ndarray,
                         extra_current: float, window: float,
                         cap_total: float, n_units: int, r_leak: float) -> float:
    """Integrate dU/dt = (-J(t) - U * n/r_leak) / C_total over the window.

    J(t) is the drain current: the photodiodes whose PWM pulse is still open
    (pulses start-aligned at t = 0) plus a constant extra term. Exact for
    piecewise-constant currents and a linear leak to 0 V.
    """
    g = n_units / r_leak  # total leak conductance, S
    tau = cap_total / g
    # Per-photodiode drain current while its pulse is open.
    currents = np.where(durations > 0, q_sig_pd / np.where(durations > 0, durations, 1.0), 0.0)
    order = np.argsort(durations)
    durations = durations[order]
    currents = currents[order]
    suffix = np.concatenate((np.cumsum(currents[::-1])[::-1], [0.0]))

    u = u0
    t = 0.0
    idx = 0
    events = list(np.unique(durations[durations > 0])) + [window]
    for t_next in events:
        if t_next > window:
            t_next = window
        if t_next <= t:
            continue
        while idx < len(durations) and durations[idx] <= t:
            idx += 1
        j = suffix[idx] + extra_current
        u_ss = -j / g
        u = u_ss + (u - u_ss) * math.exp(-(t_next - t) / tau)
        t = t_next
        if t >= window:
            break
    return u


def expose_tile(tile: TileState, phase_weights: np.ndarray,
                currents: PhotocurrentMap, cfg: ValidatedConfig,
                *, k_expo: float | None = None,
                window: float | None = None,
                extra_unit_current: np.ndarray | None = None,
                start_voltage: float | None = None,
                phase_sign: int = 1) -> TileState:
    """Run one PWM exposure phase on a reset tile.

    phase_weights is the nonnegative weight grid (2*h_units x 2*w_units) for
    this phase. window is the total time the node floats before readout
    (defaults to the extent of the longest pulse); leakage acts over the
    whole window. extra_unit_current adds a constant per-unit drain for the
    full window (used for dark-signal nonuniformity). start_voltage
    overrides v_rst (used for reset noise).
    """
    if tile.phase not in (TilePhase.RESET, TilePhase.READ):
        raise ValueError(f"cannot expose tile in phase {tile.phase}")
    w = np.asarray(phase_weights)
    if w.shape != (2 * tile.h_units, 2 * tile.w_units):
        raise ValueError(
            f"phase weights must be {(2*tile.h_units, 2*tile.w_units)}, got {w.shape}")
    if w.min() < 0:
        raise ValueError("phase weights must be nonnegative")

    k = cfg.k_expo if k_expo is None else float(k_expo)
    y0, x0 = 2 * tile.origin_y, 2 * tile.origin_x
    i_win = currents.currents[y0:y0 + 2 * tile.h_units, x0:x0 + 2 * tile.w_units]

    durations = (k * w.astype(np.float64)).ravel()
    q_sig = (i_win.ravel() * durations)
    q_dark = cfg.i_dark * durations
    if window is None:
        window = float(durations.max()) if durations.size else 0.0

    extra = 0.0
    if extra_unit_current is not None:
        extra = float(np.asarray(extra_unit_current).sum())

    cap_total = tile.cap_total
    u0 = cfg.v_rst if start_voltage is None else float(start_voltage)

    if math.isinf(cfg.r_leak):
        u = u0 - (q_sig.sum() + q_dark.sum() + extra * window) / cap_total
    else:
        u = _leaky_final_voltage(
            u0, q_sig + q_dark, durations.copy(), extra, window,
            cap_total, tile.n_units, cfg.r_leak)

    saturated = bool(u < cfg.v_min)
    if saturated:
        u = cfg.v_min

    return replace(
        tile,
        voltages=np.full(tile.n_units, u),
        phase=TilePhase.READY,
        phase_sign=phase_sign,
        saturated=saturated,
        q_signal_pd=q_sig.reshape(w.shape),
        q_dark_pd=q_dark.reshape(w.shape),
        window_s=float(window),
    )


def mark_read(tile: TileState) -> TileState:
    return replace(tile, phase=TilePhase.READ)
