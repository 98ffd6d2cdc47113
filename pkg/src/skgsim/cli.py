"""Command-line experiment runner.

Subcommands:
  capacity-sweep   key capacity across a swept parameter, CSV per (value, rep)
  run-protocol     full protocol repetitions with leakage measurements
  gen-maps         dump gain maps and the isohypse partition for one scene

Flags override config-file values, which override the built-in defaults.
All outputs are deterministic functions of the resolved config and seed.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import csvio
from .config import ExperimentConfig, config_from_sources
from .experiments import (
    SWEEP_AXES,
    canonical_axis,
    generate_maps,
    run_capacity_sweep,
    run_protocol_batch,
)
from .capacity import upper_bound


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key=value config file")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed")
    p.add_argument("--out", metavar="PATH", help="output file (or directory for gen-maps)")
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), help="grid dimensions")
    p.add_argument("--area-m", type=float, metavar="F", help="square area side in metres")
    p.add_argument("--altitude-m", type=float, metavar="F")
    p.add_argument("--fc-mhz", type=float, metavar="F")
    p.add_argument("--a-tx-db", type=float, metavar="F")
    p.add_argument("--a-rx-db", type=float, metavar="F")
    p.add_argument("--snr-min-db", type=float, metavar="F")
    p.add_argument("--rho-db", type=float, metavar="F")
    p.add_argument("--pilots", type=int, metavar="K")
    p.add_argument("--levels", type=int, metavar="Q")
    p.add_argument("--delta-e", metavar="F|auto", help="isohypse bin width (linear gain)")
    p.add_argument("--sigma-sh-a-db", type=float, metavar="F")
    p.add_argument("--sigma-sh-e-db", type=float, metavar="F")
    p.add_argument("--dref-m", type=float, metavar="F")
    p.add_argument("--eve-dist-m", type=float, metavar="F")
    p.add_argument("--reps", type=int, metavar="N", help="number of repetitions")
    p.add_argument("--transmissions", type=int, metavar="N", help="protocol length N")
    p.add_argument("--class-limit", type=int, metavar="N", help="optimize only the N largest classes")
    p.add_argument("--approx-fields", action="store_true", default=None,
                   help="approximate neighbor-conditional field sampling (large grids)")
    p.add_argument("--training-pilots", type=int, metavar="K",
                   help="noisy training maps with K pilots (default: exact training)")
    p.add_argument(
        "--sweep", nargs=2, metavar=("AXIS", "V1,V2,..."),
        help=f"sweep axis and comma-separated values; axes: {', '.join(sorted(SWEEP_AXES))}",
    )


def _config_from_args(args, parser) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "area_m": args.area_m,
        "altitude_m": args.altitude_m,
        "fc_mhz": args.fc_mhz,
        "a_tx_db": args.a_tx_db,
        "a_rx_db": args.a_rx_db,
        "snr_min_db": args.snr_min_db,
        "rho_db": args.rho_db,
        "pilots": args.pilots,
        "levels": args.levels,
        "sigma_sh_a_db": args.sigma_sh_a_db,
        "sigma_sh_e_db": args.sigma_sh_e_db,
        "d_ref_m": args.dref_m,
        "eve_dist_m": args.eve_dist_m,
        "repetitions": args.reps,
        "n_transmissions": args.transmissions,
        "class_limit": args.class_limit,
        "approx_fields": args.approx_fields,
        "training_pilots": args.training_pilots,
    }
    if args.grid is not None:
        overrides["nx"], overrides["ny"] = args.grid
    force_auto_delta = args.delta_e == "auto"
    if args.delta_e is not None and not force_auto_delta:
        try:
            overrides["delta_e"] = float(args.delta_e)
        except ValueError:
            parser.error(f"--delta-e expects a number or 'auto', got {args.delta_e!r}")
    if args.sweep is not None:
        axis, values = args.sweep
        try:
            axis = canonical_axis(axis)
        except ValueError as exc:
            parser.error(str(exc))
        try:
            parsed = tuple(float(v) for v in values.split(",") if v.strip())
        except ValueError:
            parser.error(f"bad sweep values {values!r}: expected comma-separated numbers")
        if not parsed:
            parser.error("sweep needs at least one value")
        overrides["sweep_axis"] = axis
        overrides["sweep_values"] = parsed
    try:
        cfg = config_from_sources(args.config, overrides)
        if force_auto_delta:
            cfg = cfg.with_overrides(delta_e=None)
        return cfg
    except (ValueError, OSError, KeyError) as exc:
        parser.error(str(exc))


def cmd_capacity_sweep(args, parser) -> int:
    cfg = _config_from_args(args, parser)
    if cfg.sweep_axis is None:
        parser.error("capacity-sweep requires --sweep AXIS v1,v2,... "
                     f"(axes: {', '.join(sorted(SWEEP_AXES))})")
    rows = run_capacity_sweep(cfg)
    out = args.out or "skg_sweep.csv"
    csvio.write_sweep_csv(out, rows, cfg.manifest_line())
    by_value: dict[float, list[float]] = {}
    for r in rows:
        by_value.setdefault(r.value, []).append(r.c_key_bits)
    for v in cfg.sweep_values:
        caps = by_value.get(float(v), [])
        mean = sum(caps) / len(caps) if caps else math.nan
        print(f"{cfg.sweep_axis}={v:g}: mean C_key = {mean:.4f} bits over {len(caps)} reps")
    print(f"wrote {out}")
    return 0


def cmd_run_protocol(args, parser) -> int:
    cfg = _config_from_args(args, parser)
    reports = run_protocol_batch(cfg)
    out = args.out or "skg_protocol.csv"
    csvio.write_protocol_csv(out, reports, cfg.manifest_line())
    if args.dump_keys and reports:
        csvio.write_key_material_hex(
            args.dump_keys, [r.bob_bits for r in reports], cfg.manifest_line()
        )
    if reports:
        caps = np.array([r.capacity_bits for r in reports])
        leaks = np.array([r.leak_q_t_bits for r in reports])
        finite = leaks[np.isfinite(leaks)]
        leak_max = finite.max() if finite.size else math.nan
        print(
            f"{len(reports)} repetitions: C_key mean {caps.mean():.4f} bits, "
            f"leakage I(q;t) max {leak_max:.4g} bits"
        )
    print(f"wrote {out}")
    return 0


def cmd_gen_maps(args, parser) -> int:
    cfg = _config_from_args(args, parser)
    out_dir = args.out or "skg_maps"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return 1
    bundle = generate_maps(cfg)
    manifest = cfg.manifest_line()
    try:
        csvio.write_gain_map_csv(os.path.join(out_dir, "bob_map.csv"), bundle.scenario.bob_map, manifest)
        csvio.write_gain_map_csv(os.path.join(out_dir, "eve_map.csv"), bundle.scenario.eve_map, manifest)
        csvio.write_partition_csv(os.path.join(out_dir, "partition.csv"), bundle.partition, manifest)
    except OSError as exc:
        print(f"cannot write maps under {out_dir}: {exc}", file=sys.stderr)
        return 1
    part = bundle.partition
    print(f"L = {part.num_classes}")
    print(f"max class size = {int(part.sizes.max())}")
    print(f"upper bound C_key = {upper_bound(part):.12g} bits")
    print(f"wrote {out_dir}/bob_map.csv, eve_map.csv, partition.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skgsim",
        description="Drone-to-ground secret key generation: simulation and capacity optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("capacity-sweep", help="sweep a parameter and record key capacity")
    _add_common_flags(p_sweep)

    p_proto = sub.add_parser("run-protocol", help="run full protocol repetitions")
    _add_common_flags(p_proto)
    p_proto.add_argument("--dump-keys", metavar="PATH", help="write distilled keys as hex lines")

    p_maps = sub.add_parser("gen-maps", help="write gain map and partition CSVs")
    _add_common_flags(p_maps)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "capacity-sweep": cmd_capacity_sweep,
        "run-protocol": cmd_run_protocol,
        "gen-maps": cmd_gen_maps,
    }
    subparser = parser  # parser.error carries usage for the active command
    try:
        return handlers[args.command](args, subparser)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
