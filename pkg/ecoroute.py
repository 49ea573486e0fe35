import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import yaml

from emissions.opmode import OpModeTableError
from forecast.correlation import correlation_table
from forecast.dataset import InsufficientHistoryError, build_dataset
from forecast.lstm import ShapeMismatchError
from forecast.predictors import save_model
from forecast.trainer import TrainingDivergedError, grid_search, load_default_hyper, train
from harness.config import ExperimentConfigError, load_experiment_config
from harness.experiment import collect_training_data, run_experiment
from harness.reporting import UnknownStrategyError, UnknownVehicleError, compare, extract_path, load_report
from linkstate.records import IntervalRecordError, read_link_records
from microsim.world import InvariantViolation, SimulationStalledError
from netcore.generator import DISTRIBUTIONS, generate_scenario
from netcore.network import ScenarioParseError, ScenarioValidationError
from netcore.scenario_io import save_demand, save_network
from routing.objectives import ObjectiveConfigError
from utils.file_utils import write_frame_csv
from utils.logger import get_logger, set_verbose

logger = get_logger("ecoroute")

PACKAGE_ERRORS = (
    ScenarioParseError, ScenarioValidationError, OpModeTableError, IntervalRecordError,
    SimulationStalledError, InvariantViolation, InsufficientHistoryError, ShapeMismatchError,
    TrainingDivergedError, ObjectiveConfigError, ExperimentConfigError, UnknownStrategyError,
    UnknownVehicleError, FileNotFoundError, ValueError,
)
TARGETS = {"speed": "speed", "ghg": "ghg_er"}


# --- Subcommands ---
def cmd_run(args) -> int:
    overrides = {}
    if args.output_dir:
        overrides["output_dir"] = str(Path(args.output_dir).resolve())
    if args.workers:
        overrides["workers"] = args.workers
    cfg = load_experiment_config(args.config, overrides)
    report = run_experiment(cfg)
    print(report.summary.to_string(index=False))
    return 0 if (report.summary["status"] == "ok").all() else 1


def cmd_train(args) -> int:
    data = read_link_records(args.data)
    hyper = load_default_hyper(args.hyper) if args.hyper else load_default_hyper()
    if args.epochs is not None:
        hyper = replace(hyper, epochs=args.epochs)
    train_set, test_set = build_dataset(data, TARGETS[args.target], n_steps=hyper.n_steps)

    if args.grid:
        with open(args.grid, "r", encoding="utf-8") as file:
            grid = yaml.safe_load(file) or {}
        hyper, table = grid_search(train_set, grid, seed=args.seed, base=hyper, kind=args.kind)
        print(table.to_string(index=False))

    result = train(train_set, hyper, seed=args.seed, test_set=test_set, kind=args.kind)
    save_model(result.model, args.out)
    for name, m in (("train", result.train_metrics), ("test", result.test_metrics)):
        if m is not None:
            print(f"{name}: RMSE {m.rmse:.4f}  r {m.r:.3f}  R² {m.r2:.3f}  slope {m.slope:.3f}  (n={m.n})")
    return 0


def cmd_correlate(args) -> int:
    data = read_link_records(args.data)
    table = correlation_table(data, TARGETS[args.target])
    frame = table.to_frame()
    print(frame.to_string(index=False, float_format=lambda x: f"{x:.3f}"))
    if args.out:
        write_frame_csv(frame, args.out)
    return 0


def cmd_compare(args) -> int:
    report = load_report(args.report)
    print(compare(report, args.baseline, args.target).to_string(index=False))
    return 0


def cmd_path(args) -> int:
    report = load_report(args.report)
    for link_id, entry in extract_path(report, args.vehicle, args.strategy, args.seed):
        print(f"{entry:>6d} s  link {link_id}")
    return 0


def cmd_gen_scenario(args) -> int:
    network, demand = generate_scenario(
        args.rows, args.cols, args.vehicles, args.distribution, args.horizon, args.seed
    )
    out_dir = Path(args.out_dir)
    save_network(network, out_dir / "network.csv")
    save_demand(demand, out_dir / "demand.csv")
    print(f"{len(network.nodes)} nodes, {len(network.links)} links, {len(demand)} trips → {out_dir}")
    return 0


def cmd_collect(args) -> int:
    cfg = load_experiment_config(args.config)
    data = collect_training_data(cfg, out=Path(args.out))
    print(f"{len(data)} link-interval records from {data['run_id'].nunique()} runs → {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecoroute", description="Eco-routing microsimulation experiments")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train a t+1 link predictor from link-interval CSVs")
    p.add_argument("--target", choices=sorted(TARGETS), required=True)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("lstm", "linear_ar"), default="lstm")
    p.add_argument("--hyper", help="YAML of hyper-parameters (default: config/forecast_defaults.yaml)")
    p.add_argument("--grid", help="YAML mapping hyper-parameter → candidate values")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("correlate", help="lagged correlations of link variables")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--target", choices=sorted(TARGETS), default="speed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("compare", help="percentage deltas between two strategies of a report")
    p.add_argument("--report", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--target", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("path", help="links and entry times of one vehicle")
    p.add_argument("--report", required=True)
    p.add_argument("--vehicle", type=int, required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("gen-scenario", help="generate a grid network and demand")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--vehicles", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distribution", choices=DISTRIBUTIONS, default="uniform")
    p.add_argument("--horizon", type=float, default=900.0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("collect", help="simulate training data at several demand levels")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbose(args.verbose)
    try:
        return args.func(args)
    except PACKAGE_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
