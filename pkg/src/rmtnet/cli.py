"""Command-line driver: ``rmtnet run|simulate|evaluate|export-graph``.

Exit codes: 0 on success, 2 for bad input or configuration, 3 when the
pipeline detects a broken internal invariant.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import DEFAULT_CONFIG, PipelineConfig, load_config
from .errors import ConfigInvalid, PipelineInvariantError, RmtError
from .graph import write_dot, write_graphml
from .ingest import (
    apply_account_map,
    check_warehouse_roles,
    load_account_map,
    parse_market_records,
    parse_play_log,
    parse_trade_log,
)
from .pipeline import _atomic_write, node_attributes, run_pipeline, write_outputs
from .simulator import evaluate_detection, generate_scenario, load_truth, write_scenario
from .tagging import CommunityType

log = logging.getLogger("rmtnet")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3


class InputError(RmtError):
    """A command-line level input problem (missing file, mismatched runs)."""


# --------------------------------------------------------------------------- #
# input loading
# --------------------------------------------------------------------------- #


def _read(path: Path, parser, fmt: str, strict: bool, what: str) -> list:
    try:
        with open(path, newline="") as fh:
            records, errors = parser(fh, fmt, strict=strict)
    except FileNotFoundError:
        raise InputError(f"{what} not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None
    for err in errors[:20]:
        log.warning("%s %s: %s", what, path.name, err)
    if len(errors) > 20:
        log.warning("%s %s: %d more malformed rows", what, path.name, len(errors) - 20)
    return records


def load_inputs(config: PipelineConfig, strict: bool = False):
    """Parse the configured logs; empty paths for play or market data mean "skip"."""
    fmt = config.inputs.format
    trades_path = config.resolve("trades")
    if trades_path is None:
        raise InputError("no trade log configured")
    trades = _read(trades_path, parse_trade_log, fmt, strict, "trade log")
    if config.resolve("account_map") is not None:
        path = config.resolve("account_map")
        try:
            mapping = load_account_map(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read account map {path}: {exc.strerror}") from None
        trades = apply_account_map(trades, mapping)
    violations = check_warehouse_roles(trades)
    if violations:
        if strict:
            raise violations[0]
        for v in violations[:20]:
            log.warning("%s", v)
    play = market = []
    if config.resolve("play") is not None:
        play = _read(config.resolve("play"), parse_play_log, fmt, strict, "play log")
    if config.resolve("market") is not None:
        market = _read(config.resolve("market"), parse_market_records, fmt, strict, "market log")
    return trades, play, market


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #


def cmd_run(args) -> int:
    config = load_config(args.config)
    trades, play, market = load_inputs(config, args.strict)
    result = run_pipeline(trades, play, market, config, weeks=args.week or None, jobs=args.jobs)
    out = Path(args.out or config.output.dir)
    if args.out is None and not out.is_absolute():
        out = config.base_dir / out
    write_outputs(result, out, args.format, config.output.graphml, args.stamp)
    print(f"analysed {len(result.weeks)} week(s); report written to {out / 'report.json'}")
    return EXIT_OK


def _simulation_toml(fmt: str, epoch: int, phase_weeks: Sequence[int] = ()) -> str:
    ext = "csv" if fmt == "csv" else "jsonl"
    text = (
        "# inputs written by `rmtnet simulate`\n"
        "[inputs]\n"
        f'trades = "trades.{ext}"\n'
        f'play = "play.{ext}"\n'
        f'market = "market.{ext}"\n'
        f'format = "{ext}"\n\n'
        "[windowing]\n"
        f"epoch = {epoch}\n"
    )
    if phase_weeks:
        text += f"\n[estimation]\nphase_weeks = {list(phase_weeks)}\n"
    return text


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.preset is not None:
        config = replace(config, simulation={**config.simulation, "preset": args.preset})
    scenario_cfg = config.scenario(**overrides)
    scenario = generate_scenario(scenario_cfg)
    fmt = "csv" if args.format == "csv" else "jsonl"
    out = Path(args.out)
    write_scenario(scenario, out, fmt)
    _atomic_write(out / "rmtnet.toml", _simulation_toml(fmt, scenario_cfg.epoch, scenario.truth.phase_weeks))
    print(f"wrote {len(scenario.trades)} trades over {scenario_cfg.weeks} week(s) to {out}")
    return EXIT_OK


def _read_run(run_dir: Path):
    assignments: dict[int, dict[str, int]] = {}
    types: dict[int, dict[int, CommunityType]] = {}
    rmt: dict[int, bool] = {}
    try:
        with open(run_dir / "communities.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                w, c = int(row["week"]), int(row["community"])
                assignments.setdefault(w, {})[row["node"]] = c
                types.setdefault(w, {})[c] = CommunityType(row["type"])
        with open(run_dir / "events.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                rmt[int(row["event_index"])] = row["category"] == "InterRMT"
    except FileNotFoundError as exc:
        raise InputError(f"run output incomplete: {exc.filename} missing") from None
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed run output in {run_dir}: {exc}") from None
    return assignments, types, rmt


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run)
    truth = load_truth(args.truth)
    assignments, types, rmt = _read_run(run_dir)
    beyond = sorted(w for w in assignments if w >= truth.weeks)
    if beyond:
        raise InputError(f"run covers week(s) {beyond} but the ground truth has {truth.weeks} week(s)")
    if rmt and max(rmt) >= len(truth.event_rmt):
        raise InputError("run refers to trade events that the ground truth does not have")
    metrics = evaluate_detection(assignments, types, rmt, truth)
    out = Path(args.out) if args.out else run_dir / "metrics.json"
    _atomic_write(out, json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n")

    print(f"{'type':<14}{'precision':>10}{'recall':>10}{'pred':>8}{'actual':>8}")
    for name, prf in metrics.per_type.items():
        print(f"{name:<14}{prf.precision:>10.3f}{prf.recall:>10.3f}{prf.n_predicted:>8}{prf.n_actual:>8}")
    r = metrics.rmt_events
    print(f"{'RMT events':<14}{r.precision:>10.3f}{r.recall:>10.3f}{r.n_predicted:>8}{r.n_actual:>8}")
    print(f"NMI {metrics.nmi:.4f}; metrics written to {out}")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    config = load_config(args.config)
    trades, play, market = load_inputs(config, args.strict)
    result = run_pipeline(trades, play, market, config, weeks=args.week or None, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    writer, ext = (write_dot, "dot") if args.graph_format == "dot" else (write_graphml, "graphml")
    for r in result.weeks:
        buf = io.StringIO()
        writer(r.network, buf, node_attributes(r))
        _atomic_write(out / f"week_{r.week_index:03d}.{ext}", buf.getvalue())
    print(f"exported {len(result.weeks)} graph(s) to {out}")
    return EXIT_OK


def cmd_default_config(args) -> int:
    sys.stdout.write(DEFAULT_CONFIG)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# argument parsing
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmtnet", description="Detect and size RMT activity in game trade logs.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, pipeline: bool = True):
        p.add_argument("--config", help="TOML config file (default: built-in defaults)")
        if pipeline:
            p.add_argument("--week", type=int, action="append", help="analyse only this week index (repeatable)")
            p.add_argument("--jobs", type=int, default=1, help="weeks processed in parallel")
            p.add_argument("--strict", action="store_true", help="abort on the first malformed row")

    p = sub.add_parser("run", help="run the full analysis and write the report")
    common(p)
    p.add_argument("--format", choices=("csv", "json"), default="json", help="format of the weekly series table")
    p.add_argument("--out", help="output directory (default: [output] dir)")
    p.add_argument("--stamp", help="value for the report's generated_at field")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="generate a synthetic economy with ground truth")
    common(p, pipeline=False)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", help="scenario preset, overriding [simulation] preset")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="json writes JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score a run directory against simulator ground truth")
    p.add_argument("run", help="output directory of `rmtnet run`")
    p.add_argument("truth", help="output directory of `rmtnet simulate`")
    p.add_argument("--out", help="metrics file (default: RUN/metrics.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-graph", help="write per-week graphs with community labels")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--graph-format", choices=("graphml", "dot"), default="graphml")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("default-config", help="print the default configuration")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except PipelineInvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (RmtError, ConfigInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
