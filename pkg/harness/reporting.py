import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from microsim.runner import SERIES_COLUMNS, VEHICLE_COLUMNS, SimulationLog
from utils.file_utils import export_workbook, read_frame_csv, write_frame_csv
from utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

INDICATORS = ("mean_tt_min", "mean_vkt_km", "total_ghg_kg", "total_nox_kg")
SUMMARY_COLUMNS = [
    "label", "strategy", "costing", "seed", "vehicles", *INDICATORS,
    "duration_s", "guidance_flips", "status", "error",
]
PATH_COLUMNS = ["vehicle_id", "step", "link_id", "entry_s"]
COMPARE_COLUMNS = ["indicator", "baseline", "target", "mean_pct", "min_pct", "max_pct", "seeds"]

CellKey = Tuple[str, int]


class UnknownStrategyError(KeyError):
    """The report holds no completed run for that strategy label."""


class UnknownVehicleError(KeyError):
    """No completed trip for that vehicle under the requested run."""


@dataclass
class MetricsReport:
    """The four indicators per (label, seed) plus the per-run tables they were computed from."""

    summary: pd.DataFrame
    series: Dict[CellKey, pd.DataFrame] = field(default_factory=dict)
    paths: Dict[CellKey, pd.DataFrame] = field(default_factory=dict)
    vehicles: Dict[CellKey, pd.DataFrame] = field(default_factory=dict)

    def completed(self) -> pd.DataFrame:
        return self.summary[self.summary["status"] == "ok"]

    @property
    def labels(self) -> List[str]:
        return list(dict.fromkeys(self.summary["label"]))


def indicators(vehicles: pd.DataFrame) -> Dict[str, float]:
    return {
        "mean_tt_min": float(vehicles["tt_s"].mean()) / 60.0,
        "mean_vkt_km": float(vehicles["vkt_m"].mean()) / 1000.0,
        "total_ghg_kg": float(vehicles["ghg_g"].sum()) / 1000.0,
        "total_nox_kg": float(vehicles["nox_g"].sum()) / 1000.0,
    }


def paths_frame(log: SimulationLog) -> pd.DataFrame:
    rows = [
        {"vehicle_id": v.vehicle_id, "step": k, "link_id": link_id, "entry_s": entry}
        for v in log.vehicles
        for k, (link_id, entry) in enumerate(zip(v.path, v.entry_times))
    ]
    return pd.DataFrame(rows, columns=PATH_COLUMNS)


def compare(report: MetricsReport, baseline: str, target: str) -> pd.DataFrame:
    """
    Percentage change (baseline − target)/baseline on the four indicators, paired by
    seed, with the mean and the per-seed min/max. Positive means target is better.
    """
    done = report.completed()
    for label in (baseline, target):
        if label not in set(done["label"]):
            raise UnknownStrategyError(f"No completed run for strategy '{label}' in report")
    base = done[done["label"] == baseline].set_index("seed")
    tgt = done[done["label"] == target].set_index("seed")
    seeds = sorted(set(base.index) & set(tgt.index))
    if not seeds:
        raise UnknownStrategyError(f"'{baseline}' and '{target}' share no seed")

    rows = []
    for name in INDICATORS:
        b = base.loc[seeds, name].astype(float)
        t = tgt.loc[seeds, name].astype(float)
        pct = 100.0 * (b - t) / b
        rows.append({
            "indicator": name,
            "baseline": baseline,
            "target": target,
            "mean_pct": float(pct.mean()),
            "min_pct": float(pct.min()),
            "max_pct": float(pct.max()),
            "seeds": len(seeds),
        })
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def extract_path(report: MetricsReport, vehicle_id: int, label: str, seed: Optional[int] = None) -> List[Tuple[int, int]]:
    """(link id, entry second) pairs of one vehicle's trip, in driving order."""
    keys = sorted(k for k in report.paths if k[0] == label)
    if not keys:
        raise UnknownStrategyError(f"No path records for strategy '{label}'")
    key = (label, seed) if seed is not None else keys[0]
    if key not in report.paths:
        raise UnknownStrategyError(f"No path records for strategy '{label}' seed {seed}")
    frame = report.paths[key]
    rows = frame[frame["vehicle_id"] == vehicle_id].sort_values("step")
    if rows.empty:
        raise UnknownVehicleError(f"Vehicle {vehicle_id} did not complete a trip under '{label}' seed {key[1]}")
    return [(int(r.link_id), int(r.entry_s)) for r in rows.itertuples(index=False)]


def cell_file(kind: str, label: str, seed: int) -> str:
    return f"{kind}_{label}_{seed}.csv"


def write_report(report: MetricsReport, output_dir: PathLike, export_excel: bool = False) -> Path:
    output_dir = Path(output_dir)
    write_frame_csv(report.summary, output_dir / "summary.csv")
    for (label, seed), frame in report.series.items():
        write_frame_csv(frame, output_dir / cell_file("series", label, seed))
    for (label, seed), frame in report.paths.items():
        write_frame_csv(frame, output_dir / cell_file("paths", label, seed))
    for (label, seed), frame in report.vehicles.items():
        write_frame_csv(frame, output_dir / cell_file("vehicles", label, seed))
    if export_excel:
        sheets = {"summary": report.summary}
        for (label, seed), frame in report.series.items():
            sheets[f"{label[:22]} s{seed}"] = frame
        export_workbook(sheets, output_dir / "report.xlsx")
    logger.info(f"Report written to {output_dir} ({len(report.summary)} runs)")
    return output_dir


_CELL_FILE = re.compile(r"^(series|paths|vehicles)_(.+)_(-?\d+)\.csv$")


def load_report(output_dir: PathLike) -> MetricsReport:
    """Rebuild a report from the files write_report produced."""
    output_dir = Path(output_dir)
    summary = read_frame_csv(output_dir / "summary.csv", SUMMARY_COLUMNS)
    summary["error"] = summary["error"].fillna("").astype(str)
    report = MetricsReport(summary=summary)
    required = {"series": SERIES_COLUMNS, "paths": PATH_COLUMNS, "vehicles": VEHICLE_COLUMNS}
    for path in sorted(output_dir.glob("*.csv")):
        match = _CELL_FILE.match(path.name)
        if not match:
            continue
        kind, label, seed = match.group(1), match.group(2), int(match.group(3))
        frame = read_frame_csv(path, required[kind])
        getattr(report, kind)[(label, seed)] = frame
    logger.info(f"Loaded report from {output_dir}: {len(summary)} runs, labels {report.labels}")
    return report
