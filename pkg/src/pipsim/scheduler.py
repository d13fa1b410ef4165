"""Convolution step planning, kernel splicing, and the readout timeline.

Geometry. Outputs live on the unit grid with stride u = s/2 units (s is the
stride in pixels). A kernel of side r is executed as (r-1)/2 sub-kernels of
r x 3 units each: sub-kernel 0 covers kernel unit-columns 0..2, sub-kernel
j >= 1 sits 2j units to the right and carries kernel columns 2j+1 and 2j+2
(its leftmost tile column is weighted zero). The even offsets keep every
tile aligned with the weight-wire pattern W1,W2,W3,W2 repeating along each
unit row, so a tile always sees (W1,W2,W3) or (W3,W2,W1).

Steps. One pass (one sub-kernel) visits a sequence of (row, column) tiling
offsets. Tiles repeat vertically with period r+1 units and horizontally
with period 4 units (tile width 3 plus the wire gap). Two policies:

* "paper-steps": the hardware sequence. 2*ceil((r+1)/s) steps per pass,
  snaking through ceil((r+1)/s) row offsets at column offsets 0 then 2.
  It reproduces the architecture's step and readout accounting; it does
  not visit every output position when the stride is finer than the step
  pattern.
* "full-coverage": every (row, column) offset, so the union of steps
  covers each output position exactly once per pass.

Switching the column offset reconfigures the column-direction splicing
drivers, so a stall equal to one step completion is inserted there; with
two column flips per pass the equivalent exposure count per channel is
(r-1) * (2*ceil((r+1)/s) + 1).

Readout. Tile rows are read in groups of three via the row enables C1..C3;
group readouts within a step are pipelined against the reset+exposure of
the groups already read (interlaced), which is legal when
(n_rd - 1) * t_rd > t_rst + t_expo. When that fails the timeline stretches
the step period so exposure, not readout, sets the pace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    SUPPORTED_KERNEL_SIZES,
    SUPPORTED_STRIDES_PX,
    InfeasibleTiming,
    UnsupportedGeometry,
    ValidatedConfig,
    WeightKernel,
)

POLICY_PAPER_STEPS = "paper-steps"
POLICY_FULL_COVERAGE = "full-coverage"
POLICIES = (POLICY_PAPER_STEPS, POLICY_FULL_COVERAGE)

# Weight-wire id per unit column, repeating along a row.
WIRE_PATTERN = (1, 2, 3, 2)
TILE_W_UNITS = 3  # column-direction splice span; fixed by the wiring
H_PERIOD = 4      # horizontal tile period in units


@dataclass(frozen=True)
class Tile:
    tile_id: int
    origin_y: int      # unit row
    origin_x: int      # unit column
    h_units: int
    w_units: int
    out_y: int         # output-grid indices this tile contributes to
    out_x: int
    subkernel: int
    enable: int        # 0..2 -> C1..C3 row enable for its tile-row


@dataclass(frozen=True)
class Group:
    index: int
    tile_rows: tuple[int, ...]   # output rows (tile-row identifiers)
    tiles: tuple[Tile, ...]


@dataclass(frozen=True)
class Step:
    index: int
    dy: int                      # vertical tiling offset, units
    dx: int                      # horizontal tiling offset, units (0 or 2 aligned)
    stall_before: bool
    tiles: tuple[Tile, ...]
    groups: tuple[Group, ...]


@dataclass(frozen=True)
class SubKernel:
    """One r x 3 slice of the kernel and where it sits relative to the output."""

    index: int
    col_offset_units: int        # 2 * index

    def weights_px(self, kernel: WeightKernel) -> np.ndarray:
        """(2r, 6) pixel weights for this slice; padding columns are zero."""
        w = kernel.weights
        r = kernel.r
        out = np.zeros((2 * r, 2 * TILE_W_UNITS), dtype=w.dtype)
        if self.index == 0:
            out[:, :] = w[:, 0:6]
        else:
            px0 = 4 * self.index + 2  # kernel columns 2j+1 and 2j+2 in pixels
            out[:, 2:6] = w[:, px0:px0 + 4]
        return out


@dataclass
class PassPlan:
    subkernel: SubKernel
    steps: list[Step]


@dataclass(frozen=True)
class GroupTiming:
    pass_index: int
    step_index: int
    phase_sign: int              # +1 then -1
    slot: int
    group_index: int
    t_reset: float
    t_expose_start: float
    t_expose_end: float
    t_read: float
    slack: float                 # spare time in the pipelined reset+expose window


@dataclass(frozen=True)
class PipelineCheck:
    satisfied: bool
    slack: float


def check_pipeline(n_rd: int, t_rd: float, t_rst: float, t_expo: float) -> PipelineCheck:
    """Reset and exposure must fit between consecutive readouts of one group:
    (n_rd - 1) * t_rd > t_rst + t_expo."""
    if n_rd < 1 or t_rd <= 0 or t_rst < 0 or t_expo < 0:
        raise ValueError("check_pipeline needs n_rd >= 1 and nonnegative times")
    slack = (n_rd - 1) * t_rd - t_rst - t_expo
    return PipelineCheck(satisfied=slack > 0, slack=slack)


@dataclass
class TileSchedule:
    policy: str
    r: int
    s: int
    unit_h: int
    unit_w: int
    out_h: int
    out_w: int
    u: int                        # output stride in units
    passes: list[PassPlan]
    acct_rows_per_step: float     # reference accounting, paper-steps only
    acct_n_rd_per_step: int
    eq_exposures: int
    timeline: list[GroupTiming] = field(default_factory=list)
    frame_time: float = 0.0
    t_expo: float = 0.0
    pipeline: PipelineCheck | None = None
    stretched: bool = False       # step period set by exposure, not readout

    @property
    def steps(self) -> list[Step]:
        """Distinct spatial steps of one sub-kernel pass."""
        return self.passes[0].steps

    @property
    def steps_per_pass(self) -> int:
        return len(self.passes[0].steps)

    @property
    def n_subkernels(self) -> int:
        return len(self.passes)

    @property
    def total_step_instances(self) -> int:
        return sum(len(p.steps) for p in self.passes)

    def slots_for_step(self, step: Step) -> int:
        if self.policy == POLICY_PAPER_STEPS:
            return self.acct_n_rd_per_step
        return max(len(step.groups), 1)


def n_subkernels(r: int) -> int:
    return (r - 1) // 2


def subkernel_plan(r: int) -> list[SubKernel]:
    return [SubKernel(index=j, col_offset_units=2 * j) for j in range(n_subkernels(r))]


def equivalent_exposures(r: int, s: int, include_transition_wait: bool = True) -> int:
    """Exposure slots per channel frame: two phases per step plus, when
    counted, one wait per column-splice reconfiguration (two per pass)."""
    _check_geometry(r, s)
    per_pass_steps = 2 * math.ceil((r + 1) / s)
    if include_transition_wait:
        return (r - 1) * (per_pass_steps + 1)
    return (r - 1) * per_pass_steps


def _check_geometry(r: int, s: int) -> None:
    if r not in SUPPORTED_KERNEL_SIZES:
        raise UnsupportedGeometry(f"kernel side {r} not in {SUPPORTED_KERNEL_SIZES}")
    if s not in SUPPORTED_STRIDES_PX:
        raise UnsupportedGeometry(f"stride {s} px not in {SUPPORTED_STRIDES_PX}")


def _build_step(index: int, dy: int, dx: int, stall: bool, sub: SubKernel,
                sched_geom: tuple[int, int, int, int, int], r: int,
                tile_id_base: int) -> Step:
    unit_h, unit_w, out_h, out_w, u = sched_geom
    tiles = []
    rows_seen: dict[int, int] = {}
    for iy in range(out_h):
        oy = iy * u
        if oy % (r + 1) != dy:
            continue
        row_pos = len(rows_seen)
        rows_seen[iy] = row_pos
        for ix in range(out_w):
            ox = ix * u
            if ox % H_PERIOD != dx:
                continue
            tiles.append(Tile(
                tile_id=tile_id_base + iy * out_w + ix,
                origin_y=oy,
                origin_x=ox + sub.col_offset_units,
                h_units=r,
                w_units=TILE_W_UNITS,
                out_y=iy,
                out_x=ix,
                subkernel=sub.index,
                enable=row_pos % 3,
            ))
    groups = []
    ordered_rows = sorted(rows_seen)
    for g in range(0, len(ordered_rows), 3):
        rows = tuple(ordered_rows[g:g + 3])
        members = tuple(t for t in tiles if t.out_y in rows)
        groups.append(Group(index=g // 3, tile_rows=rows, tiles=members))
    return Step(index=index, dy=dy, dx=dx, stall_before=stall,
                tiles=tuple(tiles), groups=tuple(groups))


def plan_steps(r: int, s: int, cfg: ValidatedConfig,
               policy: str = POLICY_FULL_COVERAGE) -> TileSchedule:
    """Enumerate steps, tiles, and groups for every sub-kernel pass."""
    _check_geometry(r, s)
    if policy not in POLICIES:
        raise UnsupportedGeometry(f"policy {policy!r} not in {POLICIES}")
    u = s // 2
    unit_h, unit_w = cfg.unit_height, cfg.unit_width
    if unit_h < r or unit_w < r:
        raise UnsupportedGeometry(
            f"array {unit_h}x{unit_w} units too small for r={r} tiling")
    out_h = (unit_h - r) // u + 1
    out_w = (unit_w - r) // u + 1

    if policy == POLICY_PAPER_STEPS:
        dys = [j * u for j in range(math.ceil((r + 1) / s))]
        dxs = [0, 2]
    else:
        dys = list(range(0, r + 1, u))
        dxs = list(range(0, H_PERIOD, u))

    # Snake through row offsets per column offset; every column-offset
    # change reconfigures the column splicing and stalls.
    offsets: list[tuple[int, int, bool]] = []
    for ci, dx in enumerate(dxs):
        rows = dys if ci % 2 == 0 else list(reversed(dys))
        for ri, dy in enumerate(rows):
            offsets.append((dy, dx, ci > 0 and ri == 0))

    geom = (unit_h, unit_w, out_h, out_w, u)
    passes = []
    for sub in subkernel_plan(r):
        base = sub.index * out_h * out_w
        steps = [
            _build_step(i, dy, dx, stall, sub, geom, r, base)
            for i, (dy, dx, stall) in enumerate(offsets)
        ]
        passes.append(PassPlan(subkernel=sub, steps=steps))

    rows_acct = cfg.height_px / (r + 1)
    n_rd_acct = math.ceil(rows_acct / 3)
    if policy == POLICY_FULL_COVERAGE:
        n_rd_acct = max((len(st.groups) for p in passes for st in p.steps), default=1)

    return TileSchedule(
        policy=policy, r=r, s=s,
        unit_h=unit_h, unit_w=unit_w, out_h=out_h, out_w=out_w, u=u,
        passes=passes,
        acct_rows_per_step=rows_acct,
        acct_n_rd_per_step=n_rd_acct,
        eq_exposures=equivalent_exposures(r, s),
    )


def build_timeline(sched: TileSchedule, cfg: ValidatedConfig,
                   *, t_expo: float | None = None,
                   strict: bool = False) -> TileSchedule:
    """Attach per-group timestamps satisfying the pipelining constraint.

    Groups within a step are read back-to-back while the already-read groups
    reset and expose for the next phase. If the raw constraint
    (n_rd - 1) * t_rd > t_rst + t_expo cannot hold, the step period is
    stretched so exposure sets the pace (or InfeasibleTiming when strict).
    """
    t_expo = cfg.t_expo_max if t_expo is None else float(t_expo)
    t_rd, t_rst = cfg.t_rd, cfg.t_rst

    min_slots = min(sched.slots_for_step(st) for p in sched.passes for st in p.steps)
    raw = check_pipeline(max(min_slots, 1), t_rd, t_rst, t_expo)
    if strict and not raw.satisfied:
        raise InfeasibleTiming(
            f"(n_rd-1)*t_rd = {(min_slots-1)*t_rd:.3e} s does not cover "
            f"t_rst + t_expo = {t_rst + t_expo:.3e} s")

    timeline: list[GroupTiming] = []
    stretched = False
    t = t_rst + t_expo  # first exposures complete before the first readout
    prev_period = None
    for p_idx, p in enumerate(sched.passes):
        for st in p.steps:
            n_slots = sched.slots_for_step(st)
            period = n_slots * t_rd
            required = t_rd + t_rst + t_expo
            if period < required:
                period = required
                stretched = True
            # Pass boundaries also flip the column splicing configuration.
            needs_stall = st.stall_before or (st.index == 0 and p_idx > 0)
            if needs_stall and prev_period is not None:
                t += prev_period
            for phase_sign in (1, -1):
                slack = period - t_rd - t_rst - t_expo
                for g in st.groups:
                    t_read = t + g.index * t_rd
                    t_reset = t_read - t_expo - t_rst
                    if -1e-15 * max(t_read, 1.0) < t_reset < 0.0:
                        t_reset = 0.0  # rounding dust from the warm-up offset
                    timeline.append(GroupTiming(
                        pass_index=p_idx, step_index=st.index,
                        phase_sign=phase_sign, slot=g.index,
                        group_index=g.index,
                        t_reset=t_reset,
                        t_expose_start=t_read - t_expo,
                        t_expose_end=t_read,
                        t_read=t_read,
                        slack=slack,
                    ))
                t += period
            prev_period = period
    # Trailing stall: returning to the first step flips the column splicing.
    t += prev_period if prev_period is not None else 0.0

    return replace(sched, timeline=timeline, frame_time=t, t_expo=t_expo,
                   pipeline=raw, stretched=stretched)


@dataclass(frozen=True)
class WiringReport:
    violations: tuple[str, ...]
    orientations: dict  # (pass_index, step_index) -> "forward" | "reversed"

    @property
    def ok(self) -> bool:
        return not self.violations


def wire_order(origin_x: int, w_units: int = TILE_W_UNITS) -> tuple[int, ...]:
    return tuple(WIRE_PATTERN[(origin_x + i) % H_PERIOD] for i in range(w_units))


def wiring_check(sched: TileSchedule, cfg: ValidatedConfig) -> WiringReport:
    """Verify weight-wire order per tile and distinct C1..C3 enables per group."""
    violations = []
    orientations = {}
    for p_idx, p in enumerate(sched.passes):
        for st in p.steps:
            step_orientation = None
            for tile in st.tiles:
                order = wire_order(tile.origin_x, tile.w_units)
                if order == (1, 2, 3):
                    o = "forward"
                elif order == (3, 2, 1):
                    o = "reversed"
                else:
                    violations.append(
                        f"pass {p_idx} step {st.index} tile {tile.tile_id} at "
                        f"({tile.origin_y},{tile.origin_x}): wire order {order} "
                        f"is not a kernel alignment")
                    continue
                if step_orientation is None:
                    step_orientation = o
                elif step_orientation != o:
                    violations.append(
                        f"pass {p_idx} step {st.index}: mixed wire orientations")
            orientations[(p_idx, st.index)] = step_orientation or "empty"
            for g in st.groups:
                enables = {}
                for tile in g.tiles:
                    enables.setdefault(tile.out_y, tile.enable)
                used = list(enables.values())
                if len(set(used)) != len(used):
                    violations.append(
                        f"pass {p_idx} step {st.index} group {g.index}: row "
                        f"enables {used} are not distinct")
    return WiringReport(violations=tuple(violations), orientations=orientations)


@dataclass(frozen=True)
class RollingRow:
    unit_row: int
    t_expose_start: float
    t_read: float


@dataclass(frozen=True)
class RollingSchedule:
    """Traditional-mode rolling shutter: one readout per unit row, in order."""

    rows: tuple[RollingRow, ...]
    t_expo: float
    t_rd_row: float
    frame_time: float


def traditional_mode_plan(cfg: ValidatedConfig,
                          t_expo: float | None = None) -> RollingSchedule:
    t_expo = cfg.t_expo_max if t_expo is None else float(t_expo)
    t_rd_row = 4.0 / cfg.f_adc  # four RGGB conversions per unit row per column
    rows = tuple(
        RollingRow(unit_row=k,
                   t_expose_start=k * t_rd_row,
                   t_read=k * t_rd_row + t_expo)
        for k in range(cfg.unit_height)
    )
    frame_time = t_expo + cfg.unit_height * t_rd_row
    return RollingSchedule(rows=rows, t_expo=t_expo, t_rd_row=t_rd_row,
                           frame_time=frame_time)


def dump_schedule_csv(sched: TileSchedule, path) -> None:
    """step/tile/group layout plus timestamps, one row per tile per phase."""
    times = {}
    for gt in sched.timeline:
        times[(gt.pass_index, gt.step_index, gt.phase_sign, gt.group_index)] = gt
    lines = ["pass,step,phase,group,tile_id,origin_y,origin_x,out_y,out_x,"
             "enable,t_reset,t_expose_start,t_read"]
    for p_idx, p in enumerate(sched.passes):
        for st in p.steps:
            for g in st.groups:
                for phase in (1, -1):
                    gt = times.get((p_idx, st.index, phase, g.index))
                    stamp = (f"{gt.t_reset:.9e},{gt.t_expose_start:.9e},"
                             f"{gt.t_read:.9e}") if gt else ",,"
                    for tile in g.tiles:
                        lines.append(
                            f"{p_idx},{st.index},{phase:+d},{g.index},"
                            f"{tile.tile_id},{tile.origin_y},{tile.origin_x},"
                            f"{tile.out_y},{tile.out_x},C{tile.enable + 1},{stamp}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
