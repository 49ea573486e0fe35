from dataclasses import dataclass
from typing import FrozenSet, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from forecast.dataset import InsufficientHistoryError, target_column
from linkstate.records import LinkIntervalRecord, records_to_frame
from utils.logger import get_logger

logger = get_logger(__name__)

CORRELATION_VARIABLES = (
    "V_kmh", "density_lane", "flow_vph", "flow_lane_vph", "delay_s", "ghg_er_gps", "inlink_mean_V_kmh",
)
DEFAULT_LAGS = (1, 2, 3, 4, 5)
MIN_SAMPLES = 30


@dataclass(frozen=True)
class CorrelationTable:
    target: str
    coefficients: pd.DataFrame                      # index: variable, columns: lag
    samples: Mapping[int, int]                      # lag → number of (lagged, target) pairs
    zero_variance: FrozenSet[Tuple[str, int]]       # (variable, lag) reported as 0

    def to_frame(self) -> pd.DataFrame:
        frame = self.coefficients.copy()
        frame.columns = [f"lag_{lag}" for lag in frame.columns]
        frame.index.name = "variable"
        return frame.reset_index()


def pearson(x: Sequence[float], y: Sequence[float]) -> Tuple[float, bool]:
    """Pearson coefficient; a constant series gives (0.0, True)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.std(x) == 0 or np.std(y) == 0:
        return 0.0, True
    return float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0)), False


def lagged_correlations(
    frame: pd.DataFrame,
    target: str,
    variables: Sequence[str] = CORRELATION_VARIABLES,
    lags: Iterable[int] = DEFAULT_LAGS,
    min_samples: int = MIN_SAMPLES,
) -> CorrelationTable:
    """
    Correlate each variable at interval t − lag with the target column at t, pairing
    intervals of the same link (and run, when a run_id column is present).
    """
    keys = ["run_id", "link_id"] if "run_id" in frame.columns else ["link_id"]
    y_col = target_column(target)
    base = frame[[*keys, "interval", y_col]].rename(columns={y_col: "__target"})

    coefficients = {}
    samples = {}
    flagged = set()
    for lag in lags:
        if lag < 1:
            raise ValueError(f"Lags must be >= 1, got {lag}")
        lagged = frame[[*keys, "interval", *variables]].copy()
        lagged["interval"] = lagged["interval"] + lag
        pairs = base.merge(lagged, on=[*keys, "interval"], how="inner").dropna()
        if len(pairs) < min_samples:
            raise InsufficientHistoryError(
                f"Lag {lag}: only {len(pairs)} samples, need at least {min_samples}"
            )
        samples[lag] = len(pairs)
        column = {}
        for var in variables:
            r, zero = pearson(pairs[var], pairs["__target"])
            column[var] = r
            if zero:
                flagged.add((var, lag))
        coefficients[lag] = column

    if flagged:
        logger.warning(f"Zero-variance series reported as 0: {sorted(flagged)}")
    return CorrelationTable(
        target=target,
        coefficients=pd.DataFrame(coefficients).reindex(list(variables)),
        samples=samples,
        zero_variance=frozenset(flagged),
    )


def correlation_table(
    records: Union[pd.DataFrame, Iterable[LinkIntervalRecord]],
    target: str = "speed",
    lags: Iterable[int] = DEFAULT_LAGS,
    variables: Sequence[str] = CORRELATION_VARIABLES,
) -> CorrelationTable:
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    table = lagged_correlations(frame, target, variables, lags)
    logger.info(f"Correlations against {target} over lags {list(table.samples)} from {len(frame)} link-intervals")
    return table
