from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from linkstate.records import LinkIntervalRecord, records_to_frame
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_N_STEPS = 3
TRAIN_FRACTION = 0.8

TARGET_COLUMNS = {"speed": "V_kmh", "ghg_er": "ghg_er_gps"}

SPEED_FEATURES = ("V_kmh", "density_lane", "inlink_mean_V_kmh")
GHG_FEATURES = ("V_kmh", "ghg_er_gps", "density_lane", "inlink_mean_V_kmh")


class InsufficientHistoryError(ValueError):
    """Not enough consecutive intervals to build a single sample."""


def target_column(target: str) -> str:
    try:
        return TARGET_COLUMNS[target]
    except KeyError:
        raise ValueError(f"Unknown target '{target}', expected one of: {', '.join(TARGET_COLUMNS)}") from None


def default_features(target: str) -> Tuple[str, ...]:
    target_column(target)
    return SPEED_FEATURES if target == "speed" else GHG_FEATURES


@dataclass(frozen=True)
class Standardizer:
    """Per-feature (x − mean)/sd; a constant feature keeps sd = 1."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        values = np.asarray(values, dtype=float)
        flat = values.reshape(-1, values.shape[-1]) if values.ndim > 1 else values.reshape(-1, 1)
        mean = flat.mean(axis=0)
        sd = flat.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(mean=mean, sd=sd)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.sd + self.mean


@dataclass(frozen=True)
class SequenceDataset:
    """Sliding windows: X[i] holds n_steps consecutive intervals of one link, y[i] the next interval's target."""

    X: np.ndarray               # (N, n_steps, n_features), physical units
    y: np.ndarray               # (N,)
    link_ids: np.ndarray        # (N,)
    intervals: np.ndarray       # (N,) interval index of the target
    features: Tuple[str, ...]
    target: str

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_steps(self) -> int:
        return self.X.shape[1]

    def subset(self, index) -> "SequenceDataset":
        return SequenceDataset(
            X=self.X[index], y=self.y[index], link_ids=self.link_ids[index],
            intervals=self.intervals[index], features=self.features, target=self.target,
        )


def _as_frame(records: Union[pd.DataFrame, Iterable[LinkIntervalRecord]]) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return records_to_frame(records)


def build_windows(
    records: Union[pd.DataFrame, Iterable[LinkIntervalRecord]],
    target: str,
    n_steps: int = DEFAULT_N_STEPS,
    features: Optional[Sequence[str]] = None,
) -> SequenceDataset:
    """
    All windows of n_steps consecutive intervals followed by a target interval, per link
    and per run. Windows that cross a missing interval or contain non-finite values are
    skipped.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    frame = _as_frame(records)
    y_col = target_column(target)
    features = tuple(features) if features is not None else default_features(target)
    missing = [c for c in (*features, y_col, "link_id", "interval") if c not in frame.columns]
    if missing:
        raise ValueError(f"Link records are missing columns: {missing}")

    keys = ["run_id", "link_id"] if "run_id" in frame.columns else ["link_id"]
    xs, ys, links, intervals = [], [], [], []
    for _, group in frame.sort_values([*keys, "interval"]).groupby(keys, sort=True):
        steps = group["interval"].to_numpy(dtype=int)
        values = group[list(features)].to_numpy(dtype=float)
        target_values = group[y_col].to_numpy(dtype=float)
        link_id = int(group["link_id"].iloc[0])
        for end in range(n_steps, len(group)):
            if steps[end] - steps[end - n_steps] != n_steps:
                continue
            window = values[end - n_steps:end]
            if not (np.isfinite(window).all() and np.isfinite(target_values[end])):
                continue
            xs.append(window)
            ys.append(target_values[end])
            links.append(link_id)
            intervals.append(steps[end])

    n_features = len(features)
    return SequenceDataset(
        X=np.array(xs, dtype=float).reshape(len(xs), n_steps, n_features),
        y=np.array(ys, dtype=float),
        link_ids=np.array(links, dtype=int),
        intervals=np.array(intervals, dtype=int),
        features=features,
        target=target,
    )


def split_dataset(dataset: SequenceDataset, train_fraction: float = TRAIN_FRACTION) -> Tuple[SequenceDataset, SequenceDataset]:
    """Time-blocked split: the earliest target intervals train, the latest test."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    order = np.argsort(dataset.intervals, kind="stable")
    n_train = int(np.floor(train_fraction * len(dataset)))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def build_dataset(
    records: Union[pd.DataFrame, Iterable[LinkIntervalRecord]],
    target: str,
    n_steps: int = DEFAULT_N_STEPS,
    train_fraction: float = TRAIN_FRACTION,
    features: Optional[Sequence[str]] = None,
) -> Tuple[SequenceDataset, SequenceDataset]:
    dataset = build_windows(records, target, n_steps, features)
    if len(dataset) == 0:
        raise InsufficientHistoryError(
            f"No link has {n_steps + 1} consecutive intervals; cannot build a {target} dataset"
        )
    train, test = split_dataset(dataset, train_fraction)
    logger.info(f"{target} dataset: {len(train)} train / {len(test)} test samples, {n_steps} steps × {len(dataset.features)} features")
    return train, test
