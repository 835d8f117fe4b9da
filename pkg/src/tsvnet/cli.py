"""Command-line entry point: tsvnet sweep | thermal | optimize | dataset.

Every run echoes its fully resolved configuration into the output
directory for reproducibility. Exit codes: 0 success, 2 validation error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from tsvnet.core import (
    FrequencyGrid,
    GeometryError,
    GeometryMaterials,
    LayoutError,
    TsvLayout,
)
from tsvnet import em, touchstone
from tsvnet.optimizer import (
    SearchConfig,
    SearchError,
    combinatorial_search,
    geometric_sweep,
    records_to_csv,
)
from tsvnet import datasetgen, thermal

EXIT_VALIDATION = 2
EXIT_SOLVER = 3

GEOMETRY_FLAGS = ("r_cond", "p_int", "h_int", "t_ins", "h_imd",
                  "sigma_s", "sigma_cu", "eps_s", "eps_ins", "eps_imd", "n_a")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tsvnet run configuration",
    "type": "object",
    "properties": {
        "layout": {
            "type": "object",
            "properties": {
                "rows": {"type": "integer", "minimum": 1},
                "cols": {"type": "integer", "minimum": 1},
                "roles": {
                    "type": "array",
                    "items": {"enum": [1, 0, -1]},
                },
            },
            "required": ["rows", "cols", "roles"],
        },
        "geometry": {
            "type": "object",
            "properties": {k: {"type": "number"} for k in GEOMETRY_FLAGS},
        },
        "frequency": {
            "type": "object",
            "properties": {
                "start_hz": {"type": "number", "exclusiveMinimum": 0},
                "stop_hz": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 1},
            },
        },
        "scenario": {"enum": ["natural-full", "natural-sparse", "forced-top"]},
        "excitation": {
            "type": "object",
            "properties": {
                "frequency_hz": {"type": "number"},
                "p_in_w": {"type": "number", "minimum": 0},
                "excited_ports": {"type": "array", "items": {"type": "integer"}},
            },
        },
        "search": {"type": "object"},
        "dataset": {"type": "object"},
    },
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load_json(path, what):
    if not os.path.exists(path):
        raise CliError(f"{what} file not found: {path}", EXIT_VALIDATION)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise CliError(f"malformed {what} file {path}: {e}", EXIT_VALIDATION)


def _load_layout(path):
    d = _load_json(path, "layout")
    try:
        return TsvLayout.from_dict(d)
    except (LayoutError, KeyError, TypeError, ValueError) as e:
        raise CliError(f"invalid layout {path}: {e}", EXIT_VALIDATION)


def _geometry_from(args, config):
    base = dict(config.get("geometry", {}))
    for name in GEOMETRY_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    try:
        return GeometryMaterials(**base)
    except (GeometryError, TypeError) as e:
        raise CliError(f"invalid geometry: {e}", EXIT_VALIDATION)


def _grid_from(args, config):
    fc = dict(config.get("frequency", {}))
    start = args.f_start if args.f_start is not None else fc.get("start_hz", 1e9)
    stop = args.f_stop if args.f_stop is not None else fc.get("stop_hz", 100e9)
    points = args.f_points if args.f_points is not None else fc.get("points", 100)
    try:
        if points == 1:
            return FrequencyGrid((start,))
        return FrequencyGrid.linspace(start, stop, points)
    except ValueError as e:
        raise CliError(f"invalid frequency grid: {e}", EXIT_VALIDATION)


def _echo_config(out_dir, payload):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _add_geometry_flags(p):
    for name in GEOMETRY_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float,
                       help=f"override geometry field {name}")


def _add_common(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)


def cmd_sweep(args):
    config = _load_json(args.config, "config") if args.config else {}
    layout = _load_layout(args.layout) if args.layout else TsvLayout.from_dict(
        config.get("layout") or _fail("layout required", EXIT_VALIDATION)
    )
    g = _geometry_from(args, config)
    grid = _grid_from(args, config)
    if not layout.solvable:
        raise CliError("layout has no signal/ground pair", EXIT_VALIDATION)
    _echo_config(args.out, {
        "command": "sweep",
        "layout": layout.to_dict(),
        "geometry": _geo_dict(g),
        "frequency": {"start_hz": grid.points[0], "stop_hz": grid.points[-1],
                      "points": len(grid)},
        "z_ref": args.z_ref,
        "workers": args.workers,
    })
    try:
        block = em.solve_sweep(layout, g, grid, z_ref=args.z_ref,
                               workers=args.workers)
    except em.SolveError as e:
        raise CliError(str(e), EXIT_SOLVER)
    n_ports = 2 * block.n_signals
    ts_path = os.path.join(args.out, f"sweep.s{n_ports}p")
    touchstone.write_touchstone(block, ts_path)

    checks = {
        "max_reciprocity_rfe": max(
            em.reciprocity_error(block.data[i]) for i in range(len(grid))
        ),
        "max_passivity_margin": max(
            em.passivity_margin(block.data[i]) for i in range(len(grid))
        ),
    }
    metrics = {"invariants": checks, "ports": n_ports,
               "port_order": [list(p) for p in block.ports]}
    if block.n_signals >= 2:
        f_x = min(grid.points, key=lambda f: abs(f - args.xtalk_frequency))
        metrics["crosstalk"] = em.crosstalk_report(block, f_x).to_dict()
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    if args.debug_rlcg:
        from tsvnet.rlcg import extract_rlcg, model_debug_dict

        with open(os.path.join(args.out, "rlcg_debug.json"), "w") as fh:
            json.dump(model_debug_dict(extract_rlcg(layout, g, grid)), fh,
                      indent=2, sort_keys=True)
    if not args.no_figures:
        from tsvnet.report import sweep_figure

        sweep_figure(block, os.path.join(args.out, "sweep.png"))
    return 0


def _geo_dict(g):
    return {k: getattr(g, k) for k in GEOMETRY_FLAGS}


def _fail(msg, code):
    raise CliError(msg, code)


def cmd_thermal(args):
    config = _load_json(args.config, "config") if args.config else {}
    layout = _load_layout(args.layout) if args.layout else TsvLayout.from_dict(
        config.get("layout") or _fail("layout required", EXIT_VALIDATION)
    )
    g = _geometry_from(args, config)
    scenario = args.scenario or config.get("scenario", "natural-full")
    try:
        boundary = thermal.boundary_preset(scenario)
    except ValueError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    exc_cfg = dict(config.get("excitation", {}))
    excitation = thermal.Excitation(
        frequency=args.frequency or exc_cfg.get("frequency_hz", 15e9),
        p_in=args.p_in if args.p_in is not None else exc_cfg.get("p_in_w", 0.1),
        excited_ports=tuple(exc_cfg.get("excited_ports", (0,))),
    )
    _echo_config(args.out, {
        "command": "thermal",
        "layout": layout.to_dict(),
        "geometry": _geo_dict(g),
        "scenario": scenario,
        "excitation": {
            "frequency_hz": excitation.frequency,
            "p_in_w": excitation.p_in,
            "excited_ports": list(excitation.excited_ports),
        },
        "workers": args.workers,
    })
    grid = FrequencyGrid((excitation.frequency,))
    try:
        result = thermal.electrothermal_fixed_point(
            layout, g, grid, excitation, boundary=boundary, workers=args.workers
        )
    except (thermal.ThermalError, em.SolveError) as e:
        raise CliError(str(e), EXIT_SOLVER)
    if not result.converged:
        raise CliError(
            "electrothermal loop did not converge; T_max trace: "
            + ", ".join(f"{t:.2f}" for t in result.t_max_history),
            EXIT_SOLVER,
        )
    tb = thermal.array_etc(layout, g)
    summary = {
        "max_temperature_k": result.temperature.t_max,
        "iterations": result.iterations,
        "t_max_history_k": result.t_max_history,
        "k_eq_w_per_mk": {"x": tb.k_x_eq, "y": tb.k_y_eq, "z": tb.k_z_eq},
        "energy_imbalance": result.temperature.energy_imbalance,
        "scenario": scenario,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    rows = thermal.temperature_csv_rows(result.temperature)
    with open(os.path.join(args.out, "temperature.csv"), "w") as fh:
        fh.write("x_m,y_m,z_m,t_k\n")
        for x, y, z, t in rows:
            fh.write(f"{x:.9e},{y:.9e},{z:.9e},{t:.6f}\n")
    if not args.no_figures:
        from tsvnet.report import thermal_figure

        thermal_figure(result.temperature, os.path.join(args.out, "thermal.png"))
    return 0


def cmd_optimize(args):
    config = _load_json(args.config, "config") if args.config else {}
    search = dict(config.get("search", {}))

    def pick(flag, key, default):
        v = getattr(args, flag, None)
        return v if v is not None else search.get(key, default)

    try:
        sc = SearchConfig(
            rows=int(pick("rows", "rows", 3)),
            cols=int(pick("cols", "cols", 3)),
            s_min=int(pick("s_min", "s_min", 2)),
            s_max=int(pick("s_max", "s_max", 3)),
            frequency=float(pick("frequency", "frequency_hz", 15e9)),
            symmetry=bool(args.symmetry),
            samples=int(pick("samples", "samples", 4096)),
            seed=int(pick("seed", "seed", 42)),
            workers=args.workers,
            checkpoint_path=os.path.join(args.out, "checkpoint.json"),
        )
    except SearchError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    g = _geometry_from(args, config)
    _echo_config(args.out, {
        "command": "optimize",
        "mode": args.mode,
        "search": {
            "rows": sc.rows, "cols": sc.cols, "s_min": sc.s_min,
            "s_max": sc.s_max, "frequency_hz": sc.frequency,
            "symmetry": sc.symmetry, "samples": sc.samples, "seed": sc.seed,
        },
        "geometry": _geo_dict(g),
        "workers": args.workers,
    })

    def progress(k):
        print(f"evaluated {k} designs", file=sys.stderr)

    try:
        if args.mode == "layout":
            result = combinatorial_search(sc, g, resume=args.resume,
                                          progress=progress)
        else:
            layout = (
                _load_layout(args.layout)
                if args.layout
                else TsvLayout.from_dict(
                    config.get("layout")
                    or _fail("geometric mode needs a layout", EXIT_VALIDATION)
                )
            )
            result = geometric_sweep(layout, sc, base=g, progress=progress)
    except SearchError as e:
        raise CliError(str(e), EXIT_SOLVER)
    with open(os.path.join(args.out, "results.csv"), "w") as fh:
        fh.write(records_to_csv(result.records))
    with open(os.path.join(args.out, "front.json"), "w") as fh:
        json.dump([r.to_dict() for r in result.front], fh, indent=2,
                  sort_keys=True)
    if not args.no_figures:
        from tsvnet.report import pareto_figure

        pareto_figure(result.records, result.front,
                      os.path.join(args.out, "pareto.png"))
    return 0


def cmd_dataset(args):
    config = _load_json(args.config, "config") if args.config else {}
    ds = dict(config.get("dataset", {}))
    count = args.count if args.count is not None else ds.get("count", 100)
    seed = args.seed if args.seed is not None else ds.get("seed", 42)
    size_min = args.size_min if args.size_min is not None else ds.get("size_min", 3)
    size_max = args.size_max if args.size_max is not None else ds.get("size_max", 5)
    split = args.split if args.split is not None else ds.get("split")
    if count < 1:
        raise CliError("count must be >= 1", EXIT_VALIDATION)
    if not 3 <= size_min <= size_max <= 20:
        raise CliError("grid sizes must satisfy 3 <= min <= max <= 20",
                       EXIT_VALIDATION)
    _echo_config(args.out, {
        "command": "dataset",
        "count": count, "seed": seed,
        "size_min": size_min, "size_max": size_max,
        "split": split,
    })
    out_path = os.path.join(args.out, "dataset.jsonl")
    try:
        written = datasetgen.generate_dataset(
            count, seed, out_path, split=split, size_range=(size_min, size_max)
        )
    except OSError as e:
        raise CliError(f"dataset write failed: {e}", EXIT_SOLVER)
    with open(os.path.join(args.out, "dataset_manifest.json"), "w") as fh:
        json.dump(written, fh, indent=2, sort_keys=True)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tsvnet",
        description="TSV array electro-thermal solver and optimizer",
    )
    parser.add_argument("--print-config-schema", action="store_true",
                        help="print the JSON Schema for config files and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sweep", help="broadband S-parameter extraction")
    _add_common(p)
    p.add_argument("--layout", help="layout JSON file")
    _add_geometry_flags(p)
    p.add_argument("--f-start", type=float, default=None, help="Hz")
    p.add_argument("--f-stop", type=float, default=None, help="Hz")
    p.add_argument("--f-points", type=int, default=None)
    p.add_argument("--z-ref", type=float, default=50.0, help="Ohm")
    p.add_argument("--xtalk-frequency", type=float, default=15e9, help="Hz")
    p.add_argument("--debug-rlcg", action="store_true",
                   help="dump all RLCG matrices as JSON")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("thermal", help="electrothermal steady state")
    _add_common(p)
    p.add_argument("--layout", help="layout JSON file")
    _add_geometry_flags(p)
    p.add_argument("--scenario",
                   choices=["natural-full", "natural-sparse", "forced-top"])
    p.add_argument("--frequency", type=float, default=None, help="Hz")
    p.add_argument("--p-in", dest="p_in", type=float, default=None, help="W")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_thermal)

    p = sub.add_parser("optimize", help="combinatorial / geometric search")
    _add_common(p)
    p.add_argument("--mode", choices=["layout", "geometry"], default="layout")
    p.add_argument("--layout", help="fixed layout for geometric mode")
    _add_geometry_flags(p)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--s-min", dest="s_min", type=int, default=None)
    p.add_argument("--s-max", dest="s_max", type=int, default=None)
    p.add_argument("--frequency", type=float, default=None, help="Hz")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--symmetry", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("dataset", help="surrogate dataset export")
    _add_common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size-min", type=int, default=None)
    p.add_argument("--size-max", type=int, default=None)
    p.add_argument("--split", type=float, default=None,
                   help="train fraction, e.g. 0.8")
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config_schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True))
        return 0
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except CliError as e:
        print(f"tsvnet {args.command}: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
