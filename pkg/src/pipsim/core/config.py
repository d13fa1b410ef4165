"""Sensor configuration: physical constants, validation, and flat-file I/O.

All quantities are SI (meters, seconds, volts, amps, farads, ohms, hertz).
The pixel array is organized as 2x2 RGGB photodiode units sharing one
floating-diffusion (FD) node, so unit dimensions are half the pixel
dimensions and must divide evenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import InvalidConfig

# Physical constants (exact SI values).
K_BOLTZMANN = 1.380649e-23  # J/K
ELEMENTARY_CHARGE = 1.602176634e-19  # C

# Weight magnitudes span 0..128 exposure steps (signed 8-bit weights).
MAX_WEIGHT_STEPS = 128

# Default full exposure budget: the 60 fps x 64 channel design point for a
# 3x3 kernel at stride 2 works out to 1/38400 s (~26.04 us) per exposure.
T_EXPO_MAX_DEFAULT = 1.0 / 38400.0


@dataclass(frozen=True)
class SensorConfig:
    """Raw, possibly incomplete configuration as supplied by the user."""

    width_px: int = 128
    height_px: int = 128
    c_fd: float = 22.2e-15        # FD capacitance per unit, F
    r_leak: float = 8.07e15       # FD leakage resistance, ohm (math.inf disables)
    v_rst: float = 1.8            # reset voltage, V
    v_min: float = 0.4            # lowest usable FD voltage before saturation, V
    responsivity: float = 0.35    # photodiode responsivity, A/W
    pd_area: float = 1.0e-10      # photodiode area, m^2
    i_dark: float = 1.0e-15       # dark current per photodiode, A
    t_rst: float = 100e-9         # reset interval, s
    t_rd: float | None = None     # per-group readout time, s (default 3/f_adc)
    k_expo: float | None = None   # exposure seconds per weight LSB (default budget/128)
    adc_bits: int = 10
    f_adc: float = 330e3          # ADC conversion rate, Hz


@dataclass(frozen=True)
class ValidatedConfig:
    """Configuration with every invariant checked and derived fields filled."""

    width_px: int
    height_px: int
    unit_width: int
    unit_height: int
    c_fd: float
    r_leak: float
    v_rst: float
    v_min: float
    responsivity: float
    pd_area: float
    i_dark: float
    t_rst: float
    t_rd: float
    k_expo: float
    adc_bits: int
    f_adc: float

    @property
    def t_expo_max(self) -> float:
        """Exposure window consumed by the largest weight magnitude."""
        return self.k_expo * MAX_WEIGHT_STEPS

    @property
    def v_swing(self) -> float:
        return self.v_rst - self.v_min

    def with_overrides(self, **kwargs) -> "ValidatedConfig":
        """Revalidated copy with some fields replaced."""
        raw = SensorConfig(**{f.name: getattr(self, f.name)
                              for f in fields(SensorConfig)})
        return validate_config(replace(raw, **kwargs))


def _is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_config(cfg: SensorConfig) -> ValidatedConfig:
    """Check every invariant and fill derived fields.

    Total over finite inputs: either a ValidatedConfig comes back or
    InvalidConfig is raised carrying the complete list of violations.
    """
    v: list[str] = []

    if not isinstance(cfg.width_px, int) or cfg.width_px < 4 or cfg.width_px % 2:
        v.append(f"width_px must be an even integer >= 4, got {cfg.width_px!r}")
    if not isinstance(cfg.height_px, int) or cfg.height_px < 4 or cfg.height_px % 2:
        v.append(f"height_px must be an even integer >= 4, got {cfg.height_px!r}")

    def positive(name, value, allow_inf=False):
        ok = isinstance(value, (int, float)) and value > 0
        if ok and not allow_inf and math.isinf(value):
            ok = False
        if not ok:
            v.append(f"{name} must be positive{' (inf allowed)' if allow_inf else ''}, "
                     f"got {value!r}")
        return ok

    positive("c_fd", cfg.c_fd)
    positive("r_leak", cfg.r_leak, allow_inf=True)
    positive("responsivity", cfg.responsivity)
    positive("pd_area", cfg.pd_area)
    positive("t_rst", cfg.t_rst)
    positive("f_adc", cfg.f_adc)

    if not (_is_finite_number(cfg.i_dark) and cfg.i_dark >= 0):
        v.append(f"i_dark must be >= 0, got {cfg.i_dark!r}")
    if not (_is_finite_number(cfg.v_min) and cfg.v_min >= 0):
        v.append(f"v_min must be >= 0, got {cfg.v_min!r}")
    if not (_is_finite_number(cfg.v_rst) and cfg.v_rst > (cfg.v_min if _is_finite_number(cfg.v_min) else 0)):
        v.append(f"v_rst must exceed v_min, got v_rst={cfg.v_rst!r} v_min={cfg.v_min!r}")
    if not (isinstance(cfg.adc_bits, int) and 1 <= cfg.adc_bits <= 16):
        v.append(f"adc_bits must be an integer in [1, 16], got {cfg.adc_bits!r}")

    t_rd = cfg.t_rd
    if t_rd is None:
        # Three column conversions per group readout slot.
        t_rd = 3.0 / cfg.f_adc if _is_finite_number(cfg.f_adc) and cfg.f_adc > 0 else None
    elif not positive("t_rd", t_rd):
        t_rd = None

    k_expo = cfg.k_expo
    if k_expo is None:
        k_expo = T_EXPO_MAX_DEFAULT / MAX_WEIGHT_STEPS
    elif not positive("k_expo", k_expo):
        k_expo = None

    if v:
        raise InvalidConfig(v)

    return ValidatedConfig(
        width_px=cfg.width_px,
        height_px=cfg.height_px,
        unit_width=cfg.width_px // 2,
        unit_height=cfg.height_px // 2,
        c_fd=float(cfg.c_fd),
        r_leak=float(cfg.r_leak),
        v_rst=float(cfg.v_rst),
        v_min=float(cfg.v_min),
        responsivity=float(cfg.responsivity),
        pd_area=float(cfg.pd_area),
        i_dark=float(cfg.i_dark),
        t_rst=float(cfg.t_rst),
        t_rd=float(t_rd),
        k_expo=float(k_expo),
        adc_bits=cfg.adc_bits,
        f_adc=float(cfg.f_adc),
    )


_INT_KEYS = {"width_px", "height_px", "adc_bits"}
_KNOWN_KEYS = {f.name for f in fields(SensorConfig)}


def parse_config(text: str) -> SensorConfig:
    """Parse flat `key = value` text (one pair per line, `#` comments, SI units)."""
    problems: list[str] = []
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KNOWN_KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif val.lower() in ("inf", "+inf", "infinity"):
                values[key] = math.inf
            else:
                values[key] = float(val)
        except ValueError:
            problems.append(f"line {lineno}: cannot parse value {val!r} for {key!r}")
    if problems:
        raise InvalidConfig(problems)
    return SensorConfig(**values)


def load_config(path) -> SensorConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config() -> ValidatedConfig:
    return validate_config(SensorConfig())
