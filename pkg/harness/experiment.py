from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from emissions.opmode import OpModeTable
from harness.config import ExperimentConfig, ExperimentConfigError, load_scenario_spec
from harness.reporting import (
    SUMMARY_COLUMNS,
    MetricsReport,
    cell_file,
    indicators,
    paths_frame,
    write_report,
)
from linkstate.records import records_to_frame
from microsim.runner import SimulationLog, run, series_frame, vehicles_frame
from netcore.generator import DISTRIBUTIONS
from netcore.network import DemandTable, Network
from routing.guidance import guidance_rows
from routing.objectives import ObjectiveConfig, Strategy
from utils.file_utils import write_frame_csv
from utils.logger import get_logger

logger = get_logger(__name__)

DEMAND_LEVELS = (0.7, 1.0, 1.3, 1.6, 2.0)
GUIDANCE_COLUMNS = ["epoch", "node", "destination", "next_link"]


@dataclass(frozen=True)
class CellTask:
    network: Network
    demand: DemandTable
    table: OpModeTable
    objective: ObjectiveConfig
    seed: int
    guard_multiple: float
    departure_jitter_s: float
    check_invariants: bool
    keep_guidance: bool


@dataclass
class CellOutcome:
    objective: ObjectiveConfig
    seed: int
    log: Optional[SimulationLog] = None
    error: str = ""


def run_cell(task: CellTask) -> CellOutcome:
    """One (strategy, seed) simulation; a failure is recorded instead of raised."""
    label = task.objective.label
    logger.info(f"Cell {label} / seed {task.seed} started")
    try:
        log = run(
            task.network,
            task.demand,
            task.objective,
            task.table,
            seed=task.seed,
            guard_multiple=task.guard_multiple,
            departure_jitter_s=task.departure_jitter_s,
            check_invariants=task.check_invariants,
            keep_guidance=task.keep_guidance,
        )
    except Exception as e:
        logger.error(f"Cell {label} / seed {task.seed} failed: {type(e).__name__}: {e}")
        return CellOutcome(task.objective, task.seed, error=f"{type(e).__name__}: {e}")
    logger.info(f"Cell {label} / seed {task.seed} finished")
    return CellOutcome(task.objective, task.seed, log=log)


def summary_row(outcome: CellOutcome) -> Dict[str, object]:
    objective = outcome.objective
    row: Dict[str, object] = {
        "label": objective.label,
        "strategy": objective.strategy.value,
        "costing": objective.costing.value,
        "seed": outcome.seed,
    }
    if outcome.log is None:
        row.update({"status": "failed", "error": outcome.error})
        return row
    log = outcome.log
    row.update(indicators(vehicles_frame(log)))
    row.update({
        "vehicles": len(log.vehicles),
        "duration_s": log.duration_s,
        "guidance_flips": sum(log.guidance_flips),
        "status": "ok",
        "error": "",
    })
    return row


def _execute(tasks: Sequence[CellTask], workers: int) -> List[CellOutcome]:
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            return pool.map(run_cell, tasks)
    return [run_cell(task) for task in tasks]


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> MetricsReport:
    """
    Every (strategy, costing, seed) cell on the configured scenario. Cells that fail are
    listed in the summary with their diagnostic; the others are reported normally.
    """
    network, demand = cfg.load_scenario()
    table = cfg.load_table()
    objectives = cfg.objectives()
    tasks = [
        CellTask(
            network=network,
            demand=demand,
            table=table,
            objective=objective,
            seed=seed,
            guard_multiple=cfg.guard_multiple,
            departure_jitter_s=cfg.departure_jitter_s,
            check_invariants=cfg.check_invariants,
            keep_guidance=cfg.dump_guidance,
        )
        for objective in objectives
        for seed in cfg.seeds
    ]
    logger.info(f"Running {len(tasks)} cells ({len(objectives)} strategies × {len(cfg.seeds)} seeds, {cfg.workers} workers)")
    outcomes = _execute(tasks, cfg.workers)

    report = MetricsReport(summary=pd.DataFrame([summary_row(o) for o in outcomes], columns=SUMMARY_COLUMNS))
    for outcome in outcomes:
        if outcome.log is None:
            continue
        key = (outcome.objective.label, outcome.seed)
        report.series[key] = series_frame(outcome.log)
        report.paths[key] = paths_frame(outcome.log)
        report.vehicles[key] = vehicles_frame(outcome.log)

    failed = int((report.summary["status"] == "failed").sum())
    if failed:
        logger.warning(f"{failed} of {len(outcomes)} cells failed; see the error column of summary.csv")

    if write:
        write_report(report, cfg.output_dir, export_excel=cfg.export_excel)
        for outcome in outcomes:
            if outcome.log is None:
                continue
            label, seed = outcome.objective.label, outcome.seed
            write_frame_csv(records_to_frame(outcome.log.link_records), cfg.output_dir / cell_file("links", label, seed))
            if cfg.dump_guidance:
                rows = [row for guidance in outcome.log.guidance_history for row in guidance_rows(guidance)]
                write_frame_csv(pd.DataFrame(rows, columns=GUIDANCE_COLUMNS), cfg.output_dir / cell_file("guidance", label, seed))
    return report


def collect_training_data(
    cfg: ExperimentConfig,
    levels: Sequence[float] = DEMAND_LEVELS,
    distributions: Sequence[str] = DISTRIBUTIONS,
    strategy: Strategy = Strategy.TT_M,
    out: Optional[Path] = None,
) -> pd.DataFrame:
    """
    Link-interval records from simulations of the configured scenario at several demand
    levels and departure distributions, one run_id per simulation.
    """
    if cfg.scenario is None:
        raise ExperimentConfigError("Training-data collection needs a generator 'scenario' to scale demand from")
    if strategy.anticipatory:
        raise ExperimentConfigError("Training data is collected under a myopic strategy")
    base = load_scenario_spec(cfg.scenario)
    table = cfg.load_table()
    objective = ObjectiveConfig(strategy=strategy, w_t=cfg.w_t, w_e=cfg.w_e, tt_cap_multiple=cfg.guard_multiple)
    seed = cfg.seeds[0]

    frames = []
    run_id = 0
    for level in levels:
        for distribution in distributions:
            spec = replace(base, vehicles=max(1, round(level * base.vehicles)), distribution=distribution)
            network, demand = spec.build()
            log = run(
                network, demand, objective, table,
                seed=seed,
                guard_multiple=cfg.guard_multiple,
                departure_jitter_s=cfg.departure_jitter_s,
                check_invariants=False,
            )
            frame = records_to_frame(log.link_records)
            frame["run_id"] = run_id
            frames.append(frame)
            logger.info(f"Collected run {run_id}: {spec.vehicles} vehicles, {distribution} departures, {len(frame)} link-intervals")
            run_id += 1

    data = pd.concat(frames, ignore_index=True)
    if out is not None:
        write_frame_csv(data, out)
    return data
