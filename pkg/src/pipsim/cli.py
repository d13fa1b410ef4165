"""Command-line entry point.

Subcommands: simulate (full computing-mode frame), rates (ADC/frame-rate
tables), power (power/efficiency/FoM table), sweep-noise (RMS error grid),
replay (re-run a stored manifest). Every run that writes outputs also
writes a manifest.json; re-running the manifest reproduces the outputs
byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    format_rate_hz,
    frame_rate_curve,
    power_model,
    rate_report,
)
from .core import (
    DimensionMismatch,
    InfeasibleTiming,
    InputError,
    InvalidConfig,
    PipsimError,
    UnsupportedGeometry,
    default_config,
    load_config,
    load_weights,
    validate_config,
)
from .noise import NoiseModel
from .optics import default_lux_scale, load_raster, scene_from_image, scene_to_csv
from .pipeline import (
    dump_codes_csv,
    rms_error_sweep,
    simulate_frame,
    sweep_to_csv,
)
from .scheduler import dump_schedule_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_GEOMETRY = 4
EXIT_TIMING = 5
EXIT_INTERNAL = 70


@dataclasses.dataclass
class RunManifest:
    command: str
    config: str | None
    scene: str | None
    weights: str | None
    seed: int
    out_dir: str
    version: str
    options: dict

    def write(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            return cls(**data)
        except (OSError, ValueError, TypeError) as exc:
            raise InputError(f"cannot load manifest {path}: {exc}") from exc


def _load_cfg(path: str | None):
    cfg = load_config(path) if path else None
    return validate_config(cfg) if cfg is not None else default_config()


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    if not args.weights:
        raise InputError("simulate requires --weights")
    if not args.scene:
        raise InputError("simulate requires --scene")
    stride_px, kernels = load_weights(args.weights)
    raster = load_raster(args.scene)
    scene = scene_from_image(raster, args.lux_scale, cfg)

    noise = None
    if args.noise == "on":
        noise = NoiseModel.default_on(seed=args.seed)
    result = simulate_frame(
        cfg, scene, kernels, stride_px=stride_px, policy=args.policy,
        noise_model=noise, adc=args.adc,
        k_expo="auto" if args.k_expo is None else args.k_expo,
        dark_correction=args.dark_correction, collect_codes=args.dump_codes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fm in result.features:
        fm.to_csv(out / f"feature_ch{fm.channel_id:03d}.csv")
        if args.binary:
            raw = out / f"feature_ch{fm.channel_id:03d}.f64"
            fm.values.astype("<f8").tofile(raw)
            with open(out / f"feature_ch{fm.channel_id:03d}.f64.hdr", "w",
                      encoding="utf-8") as fh:
                fh.write(f"dtype=float64-le rows={fm.out_h} cols={fm.out_w}\n")
    dump_schedule_csv(result.schedule, out / "schedule.csv")
    if args.dump_codes:
        dump_codes_csv(result, out / "codes.csv")
    if args.dump_scene:
        scene_to_csv(scene, out / "scene.csv")
    _manifest_for(args, "simulate").write(out / "manifest.json")
    print(f"simulated {len(result.features)} channels at "
          f"{result.out_shape[0]}x{result.out_shape[1]} "
          f"(k_expo={result.k_expo:.6e} s, saturated tiles: "
          f"{result.saturated_tiles}) -> {out}")
    return EXIT_OK


def _cmd_rates(args) -> int:
    reports = [rate_report(r, args.stride, args.fps, args.channels,
                           args.height, args.t_expo)
               for r in args.kernel_sizes]
    rows = [(f"{rep.r}x{rep.r}", format_rate_hz(rep.f_adc_min),
             str(rep.f_real_max_floor)) for rep in reports]
    _print_table(["kernel", "min ADC rate", "max real frame rate"], rows)
    height_reports = [rate_report(3, args.stride, args.fps, args.channels,
                                  h, args.t_expo) for h in args.heights]
    if height_reports:
        print()
        _print_table(["height", "min ADC rate"],
                     [(str(rep.h_px), format_rate_hz(rep.f_adc_min))
                      for rep in height_reports])
    if args.csv:
        lines = ["r,s,fps,channels,height_px,t_expo_s,f_adc_min_hz,"
                 "f_real_max,f_real_max_floor"]
        for rep in reports + height_reports:
            lines.append(f"{rep.r},{rep.s},{rep.f:g},{rep.n},{rep.h_px},"
                         f"{rep.t_expo:.10g},{rep.f_adc_min:.10g},"
                         f"{rep.f_real_max:.10g},{rep.f_real_max_floor}")
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_power(args) -> int:
    if args.fps is not None and args.fps <= 0:
        raise InputError(f"fps must be positive, got {args.fps:g}")
    conditions = ([(args.fps, args.r, args.s)] if args.fps is not None else
                  [(60, 3, 2), (120, 3, 2), (60, 5, 2), (60, 5, 4),
                   (60, 7, 2), (60, 7, 4)])
    reports = [power_model(fps, r, s) for fps, r, s in conditions]
    rows = [(f"{rep.fps:g}fps {rep.r}x{rep.r} s={rep.s}",
             f"{rep.p_pixel * 1e6:.2f}",
             f"{rep.p_readout * 1e6:.2f}",
             f"{rep.p_adc * 1e6:.2f}",
             f"{rep.p_total * 1e6:.2f}",
             f"{rep.efficiency_tops_w:.2f}",
             f"{rep.fom_pj:.2f}") for rep in reports]
    _print_table(["condition", "pixel uW", "readout uW", "adc uW",
                  "total uW", "TOPS/W", "pJ/px/frame"], rows)
    if args.csv:
        lines = ["fps,r,s,p_pixel_uw,p_readout_uw,p_adc_uw,p_total_uw,"
                 "efficiency_tops_w,fom_pj"]
        for rep in reports:
            lines.append(f"{rep.fps:g},{rep.r},{rep.s},"
                         f"{rep.p_pixel * 1e6:.6f},{rep.p_readout * 1e6:.6f},"
                         f"{rep.p_adc * 1e6:.6f},{rep.p_total * 1e6:.6f},"
                         f"{rep.efficiency_tops_w:.6f},{rep.fom_pj:.6f}")
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_curve(args) -> int:
    cfg = _load_cfg(args.config)
    grid = args.lux
    comp = frame_rate_curve(grid, cfg, "computing", r=args.r, s=args.s)
    trad = frame_rate_curve(grid, cfg, "traditional")
    rows = [(f"{lux:g}", f"{c:.1f}", f"{t:.1f}")
            for (lux, c), (_, t) in zip(comp, trad)]
    _print_table(["lux", "computing (ch-fps)", "traditional (fps)"], rows)
    return EXIT_OK


def _cmd_sweep_noise(args) -> int:
    cfg = _load_cfg(args.config)
    if not args.weights or not args.scene:
        raise InputError("sweep-noise requires --weights and --scene")
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    stride_px, kernels = load_weights(args.weights)
    raster = load_raster(args.scene)
    scene = scene_from_image(raster, args.lux_scale, cfg)
    snr_grid = [None if str(v).lower() in ("inf", "none") else float(v)
                for v in args.snr_grid]
    cells = rms_error_sweep(
        cfg, scene, kernels, stride_px=stride_px, snr_grid_db=snr_grid,
        mismatch_grid=[float(m) for m in args.mismatch_grid],
        trials=args.trials, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_to_csv(cells, out / "rms_sweep.csv")
    _manifest_for(args, "sweep-noise").write(out / "manifest.json")
    rows = [(f"{c.sigma_cap:.0%}",
             "inf" if c.snr_db is None else f"{c.snr_db:g}",
             f"{c.mean_rms:.3e}") for c in cells]
    _print_table(["mismatch", "SNR dB", "mean RMS"], rows)
    print(f"wrote {out / 'rms_sweep.csv'}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    man = RunManifest.load(args.manifest)
    argv = [man.command]
    opts = dict(man.options)
    opts.update({"config": man.config, "scene": man.scene,
                 "weights": man.weights, "seed": man.seed,
                 "out": args.out or man.out_dir})
    for key, value in opts.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif isinstance(value, (list, tuple)):
            argv.append(flag)
            argv.extend(str(v) for v in value)
        else:
            argv.extend([flag, str(value)])
    return main(argv)


def _manifest_for(args, command: str) -> RunManifest:
    skip = {"config", "scene", "weights", "seed", "out", "func", "command"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    return RunManifest(
        command=command,
        config=args.config,
        scene=getattr(args, "scene", None),
        weights=getattr(args, "weights", None),
        seed=getattr(args, "seed", 0),
        out_dir=str(getattr(args, "out", ".")),
        version=__version__,
        options=options,
    )


def _print_table(headers, rows) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    line = " | ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("-+-".join("-" * w for w in widths))
    for r in rows:
        print(" | ".join(c.ljust(w) for c, w in zip(r, widths)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pipsim",
        description="Convolution-in-pixel image sensor simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a computing-mode frame")
    sim.add_argument("--config", help="sensor config file (key = value)")
    sim.add_argument("--scene", help="8-bit RGGB mosaic raster (PGM or PNG)")
    sim.add_argument("--weights", help="kernel weights file")
    sim.add_argument("--policy", choices=["paper-steps", "full-coverage"],
                     default="full-coverage")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--noise", choices=["on", "off"], default="off")
    sim.add_argument("--adc", choices=["model", "bypass"], default="model")
    sim.add_argument("--lux-scale", type=float, default=default_lux_scale(),
                     help="W/m^2 per full-scale raster code")
    sim.add_argument("--k-expo", type=float, default=None,
                     help="exposure seconds per weight LSB (default: auto)")
    sim.add_argument("--dark-correction", action="store_true",
                     help="digitally remove the residual dark term")
    sim.add_argument("--dump-codes", action="store_true",
                     help="also write the raw readout log")
    sim.add_argument("--dump-scene", action="store_true",
                     help="also write the converted scene as CSV")
    sim.add_argument("--binary", action="store_true",
                     help="also write raw float64 feature maps")
    sim.add_argument("--out", default="out")
    sim.set_defaults(func=_cmd_simulate)

    rates = sub.add_parser("rates", help="rate tables (ADC and frame rates)")
    rates.add_argument("--kernel-sizes", type=int, nargs="+",
                       default=[3, 5, 7, 9])
    rates.add_argument("--stride", type=int, default=2)
    rates.add_argument("--fps", type=float, default=60.0)
    rates.add_argument("--channels", type=int, default=64)
    rates.add_argument("--height", type=int, default=128)
    rates.add_argument("--t-expo", type=float, default=None,
                       help="exposure budget in seconds (default: derived "
                            "from fps and channels; 26.04 us at defaults)")
    rates.add_argument("--heights", type=int, nargs="*", default=[],
                       help="also print the resolution table for these heights")
    rates.add_argument("--csv", default=None,
                       help="write the reports as CSV to this path")
    rates.set_defaults(func=_cmd_rates)

    power = sub.add_parser("power", help="power/efficiency/FoM table")
    power.add_argument("--fps", type=float, default=None,
                       help="single condition instead of the standard table")
    power.add_argument("--r", type=int, default=3)
    power.add_argument("--s", type=int, default=2)
    power.add_argument("--csv", default=None,
                       help="write the reports as CSV to this path")
    power.set_defaults(func=_cmd_power)

    curve = sub.add_parser("curve", help="frame rate vs illuminance")
    curve.add_argument("--config")
    curve.add_argument("--r", type=int, default=3)
    curve.add_argument("--s", type=int, default=2)
    curve.add_argument("--lux", type=float, nargs="+",
                       default=[1, 10, 100, 1000, 10000, 100000])
    curve.set_defaults(func=_cmd_curve)

    sweep = sub.add_parser("sweep-noise", help="RMS error vs SNR and mismatch")
    sweep.add_argument("--config")
    sweep.add_argument("--scene")
    sweep.add_argument("--weights")
    sweep.add_argument("--lux-scale", type=float, default=default_lux_scale())
    sweep.add_argument("--snr-grid", nargs="+", default=["60", "40", "20", "0"],
                       help="SNR levels in dB ('inf' for no injection)")
    sweep.add_argument("--mismatch-grid", type=float, nargs="+",
                       default=[0.05, 0.10, 0.20])
    sweep.add_argument("--trials", type=int, default=3)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out", default="out")
    sweep.set_defaults(func=_cmd_sweep_noise)

    rep = sub.add_parser("replay", help="re-run a stored manifest")
    rep.add_argument("manifest")
    rep.add_argument("--out", default=None,
                     help="override the output directory")
    rep.set_defaults(func=_cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, DimensionMismatch) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedGeometry as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except InfeasibleTiming as exc:
        print(f"timing error: {exc}", file=sys.stderr)
        return EXIT_TIMING
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PipsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
