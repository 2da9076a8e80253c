"""Command-line entry point.

Subcommands: ``run`` executes a scenario and writes CSV + JSON-lines logs
plus a text summary, ``calibrate`` fits material sweep datasets and ranks
the candidates, ``replay`` recomputes the summary of a stored log, and
``serve`` hosts the live WebSocket session for the browser console.

Config files resolve in order: explicit flag path, the config directory
(``--config-dir`` or $TACTILEWBC_CONFIG_DIR), then the packaged defaults.
Exit codes: 0 success, 2 configuration error, 3 simulation divergence.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

from .calib import (bundled_reports, bundled_sweep_files, load_sweeps, material_report,
                    materials_in, report_json, report_table, select_material)
from .control import default_gains, load_gains
from .errors import ConfigError, DivergenceError
from .model import default_robot, load_robot
from .sim import (SimConfig, bundled_scenario, bundled_scenario_names, load_scenario,
                  log_from_csv, log_from_jsonl, run_scenario, summary_text)
from .taxels import TaxelArray, default_taxel_array, taxel_array_from_files

CONFIG_DIR_ENV = "TACTILEWBC_CONFIG_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _config_dir(args) -> Optional[Path]:
    raw = args.config_dir or os.environ.get(CONFIG_DIR_ENV)
    if raw is None:
        return None
    path = Path(raw)
    if not path.is_dir():
        raise ConfigError(f"config directory {path} does not exist")
    return path


def _find(explicit: Optional[str], config_dir: Optional[Path], default_name: str) -> Optional[Path]:
    """Explicit path beats config-dir file; None means packaged default."""
    if explicit is not None:
        path = Path(explicit)
        if not path.is_file():
            raise ConfigError(f"no such file: {path}")
        return path
    if config_dir is not None:
        candidate = config_dir / default_name
        if candidate.is_file():
            return candidate
    return None


def _load_stack(args):
    """Robot model, gains, and taxel array per the resolution order."""
    config_dir = _config_dir(args)
    model_path = _find(args.model, config_dir, "robot.yaml")
    gains_path = _find(args.gains, config_dir, "gains.yaml")
    layout_path = _find(args.layout, config_dir, "layout.yaml")
    cal_path = _find(args.calibration, config_dir, "calibration.yaml")

    model = load_robot(model_path) if model_path else default_robot()
    gains = load_gains(gains_path) if gains_path else default_gains()
    if layout_path or cal_path:
        default = default_taxel_array()
        if layout_path and cal_path:
            array = taxel_array_from_files(layout_path, cal_path)
        elif layout_path:
            from .taxels import load_layout
            array = TaxelArray(geometry=tuple(load_layout(layout_path)),
                               calibration=default.calibration, per_taxel=default.per_taxel)
        else:
            from .taxels import load_calibration
            cal, per_taxel = load_calibration(cal_path)
            array = TaxelArray(geometry=default.geometry, calibration=cal, per_taxel=per_taxel)
    else:
        array = default_taxel_array()
    return model, gains, array


def _resolve_scenario(name_or_path: str, config_dir: Optional[Path]):
    path = Path(name_or_path)
    if path.is_file():
        return load_scenario(path)
    if config_dir is not None:
        candidate = config_dir / f"{name_or_path}.yaml"
        if candidate.is_file():
            return load_scenario(candidate)
    if name_or_path in bundled_scenario_names():
        return bundled_scenario(name_or_path)
    raise ConfigError(
        f"unknown scenario {name_or_path!r}; bundled: {', '.join(bundled_scenario_names())}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    model, gains, array = _load_stack(args)
    scenario = _resolve_scenario(args.scenario, _config_dir(args))
    config = SimConfig(seed=args.seed)
    log = run_scenario(config, scenario, model, gains, array=array)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{scenario.name}.csv"
    jsonl_path = out_dir / f"{scenario.name}.jsonl"
    log.to_csv(csv_path)
    log.to_jsonl(jsonl_path)

    print(summary_text(log.summary()))
    print(f"wrote {csv_path} and {jsonl_path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.list_data:
        for path in bundled_sweep_files():
            print(path)
        return EXIT_OK
    if args.data:
        reports = []
        for raw in args.data:
            samples = load_sweeps(raw)
            for material in materials_in(samples):
                reports.append(material_report(material, samples))
    else:
        reports = bundled_reports()
    if not reports:
        raise ConfigError("no sweep data to report on")
    print(report_table(reports))
    print(f"selected: {select_material(reports)}")
    if args.json:
        Path(args.json).write_text(report_json(reports) + "\n")
        print(f"wrote {args.json}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.log)
    if not path.is_file():
        raise ConfigError(f"no such log: {path}")
    if path.suffix in (".jsonl", ".ndjson"):
        log = log_from_jsonl(path)
    else:
        log = log_from_csv(path)
    print(summary_text(log.summary()))
    return EXIT_OK


def cmd_serve(args) -> int:
    model, gains, array = _load_stack(args)
    scenario = None
    if args.scenario is not None:
        scenario = _resolve_scenario(args.scenario, _config_dir(args))
    from .server import serve  # deferred: pulls in the web stack

    serve(model=model, gains=gains, array=array, scenario=scenario,
          host=args.host, port=args.port, snapshot_rate=args.rate)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", help="robot model YAML")
    sub.add_argument("--layout", help="taxel layout YAML")
    sub.add_argument("--gains", help="controller gains YAML")
    sub.add_argument("--calibration", help="taxel calibration YAML")
    sub.add_argument("--config-dir", help=f"config directory (default ${CONFIG_DIR_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactilewbc",
        description="Tactile whole-body control sandbox for a mobile manipulator.")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    run = subs.add_parser("run", help="run a scenario and write logs")
    run.add_argument("--scenario", required=True,
                     help="bundled scenario name or path to a scenario YAML")
    run.add_argument("--out", default=".", help="output directory for logs")
    run.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
    _add_config_flags(run)
    run.set_defaults(fn=cmd_run)

    cal = subs.add_parser("calibrate", help="fit material sweeps and rank candidates")
    cal.add_argument("--data", nargs="*", help="sweep CSV files (default: bundled datasets)")
    cal.add_argument("--json", help="also write the report as JSON to this path")
    cal.add_argument("--list-data", action="store_true",
                     help="print the bundled dataset paths and exit")
    cal.set_defaults(fn=cmd_calibrate)

    replay = subs.add_parser("replay", help="recompute the summary of a stored log")
    replay.add_argument("log", help="CSV or JSON-lines log file")
    replay.set_defaults(fn=cmd_replay)

    serve = subs.add_parser("serve", help="host the live console session")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--rate", type=float, default=30.0, help="snapshot broadcast rate (Hz)")
    serve.add_argument("--scenario", default=None,
                       help="optional scenario providing events/obstacles for the session")
    _add_config_flags(serve)
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
