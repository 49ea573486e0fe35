import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np
import pandas as pd

from utils.file_utils import read_frame_csv, write_frame_csv
from utils.logger import get_logger

logger = get_logger(__name__)

OPMODE_COLUMNS = ["bin_id", "vsp_lo", "vsp_hi", "v_lo", "v_hi", "ghg_gps", "nox_gps"]
DEFAULT_TABLE_PATH = Path(__file__).resolve().parent.parent / "config" / "opmode_table_v1.csv"

IDLE_SPEED_MS = 0.5

# Light-duty VSP coefficients (kW/tonne)
VSP_ROLLING = 0.132
VSP_AERO = 0.000302
VSP_MASS = 1.1
GRAVITY = 9.81

PathLike = Union[str, Path]


class OpModeTableError(ValueError):
    """Bins that do not partition the (VSP, speed) plane, or invalid rates."""


def vsp(v: float, a: float, grade: float = 0.0) -> float:
    """Vehicle specific power in kW/tonne for speed v (m/s) and acceleration a (m/s²)."""
    return v * (VSP_MASS * a + GRAVITY * grade + VSP_ROLLING) + VSP_AERO * v ** 3


@dataclass(frozen=True)
class OpModeBin:
    bin_id: int
    vsp_lo: float
    vsp_hi: float
    v_lo: float
    v_hi: float
    ghg_gps: float
    nox_gps: float

    def contains(self, vsp_value: float, v: float) -> bool:
        return self.vsp_lo <= vsp_value < self.vsp_hi and self.v_lo <= v < self.v_hi


@dataclass(frozen=True)
class OpModeTable:
    """
    Operating-mode bins over half-open (VSP, speed) rectangles. The constructor indexes the
    bins by speed band and rejects tables that leave gaps or overlaps.
    """

    bins: Tuple[OpModeBin, ...]
    _band_starts: List[float] = field(init=False, repr=False, compare=False)
    _band_vsp_los: List[List[float]] = field(init=False, repr=False, compare=False)
    _band_bins: List[List[OpModeBin]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.bins:
            raise OpModeTableError("Operating-mode table is empty")
        ids = [b.bin_id for b in self.bins]
        if len(set(ids)) != len(ids):
            raise OpModeTableError("Duplicate bin ids")
        for b in self.bins:
            for rate in (b.ghg_gps, b.nox_gps):
                if not (math.isfinite(rate) and rate >= 0):
                    raise OpModeTableError(f"Bin {b.bin_id}: rates must be finite and >= 0")
            if not (b.vsp_lo < b.vsp_hi and b.v_lo < b.v_hi):
                raise OpModeTableError(f"Bin {b.bin_id}: empty interval")

        cuts = {0.0}
        for b in self.bins:
            cuts.update(x for x in (b.v_lo, b.v_hi) if math.isfinite(x) and x > 0)
        starts = sorted(cuts)
        ends = starts[1:] + [math.inf]

        band_los, band_bins = [], []
        for lo, hi in zip(starts, ends):
            members = sorted(
                (b for b in self.bins if b.v_lo <= lo and b.v_hi >= hi),
                key=lambda b: b.vsp_lo,
            )
            if not members:
                raise OpModeTableError(f"No bin covers speeds [{lo}, {hi})")
            if members[0].vsp_lo != -math.inf or members[-1].vsp_hi != math.inf:
                raise OpModeTableError(f"Speed band [{lo}, {hi}) does not span all VSP values")
            for prev, nxt in zip(members, members[1:]):
                if prev.vsp_hi != nxt.vsp_lo:
                    kind = "overlap" if prev.vsp_hi > nxt.vsp_lo else "gap"
                    raise OpModeTableError(
                        f"VSP {kind} between bins {prev.bin_id} and {nxt.bin_id} in speed band [{lo}, {hi})"
                    )
            band_los.append([b.vsp_lo for b in members])
            band_bins.append(members)

        object.__setattr__(self, "_band_starts", starts)
        object.__setattr__(self, "_band_vsp_los", band_los)
        object.__setattr__(self, "_band_bins", band_bins)

        idle = self.lookup(0.0, 0.0)
        if not (idle.vsp_lo == -math.inf and idle.vsp_hi == math.inf and idle.v_hi >= IDLE_SPEED_MS):
            raise OpModeTableError(f"Table needs a dedicated idle bin covering v < {IDLE_SPEED_MS} m/s")

    def lookup(self, vsp_value: float, v: float) -> OpModeBin:
        band = max(bisect_right(self._band_starts, v) - 1, 0)
        idx = bisect_right(self._band_vsp_los[band], vsp_value) - 1
        return self._band_bins[band][idx]

    @property
    def ghg_range(self) -> Tuple[float, float]:
        rates = [b.ghg_gps for b in self.bins]
        return min(rates), max(rates)

    @property
    def nox_range(self) -> Tuple[float, float]:
        rates = [b.nox_gps for b in self.bins]
        return min(rates), max(rates)


def emission_rates(v: float, a: float, table: OpModeTable) -> Tuple[float, float]:
    """(GHG g/s, NOx g/s) of the bin holding (VSP at zero grade, v)."""
    b = table.lookup(vsp(v, a, 0.0), v)
    return b.ghg_gps, b.nox_gps


def cruise_rates(v: float, table: OpModeTable) -> Tuple[float, float]:
    """Rates at constant speed; used as the free-flow emission rate of a link."""
    return emission_rates(v, 0.0, table)


def check_partition(
    table: OpModeTable,
    vsp_range: Tuple[float, float] = (-30.0, 40.0),
    v_range: Tuple[float, float] = (0.0, 40.0),
    step: float = 0.1,
) -> int:
    """
    Exhaustive grid scan: every (vsp, v) point must fall in exactly one bin.
    Returns the number of points checked.
    """
    vsp_grid = np.round(np.arange(vsp_range[0], vsp_range[1] + step / 2, step), 10)
    v_grid = np.round(np.arange(v_range[0], v_range[1] + step / 2, step), 10)
    lo_vsp = np.array([b.vsp_lo for b in table.bins])
    hi_vsp = np.array([b.vsp_hi for b in table.bins])
    lo_v = np.array([b.v_lo for b in table.bins])
    hi_v = np.array([b.v_hi for b in table.bins])

    in_vsp = (vsp_grid[:, None] >= lo_vsp) & (vsp_grid[:, None] < hi_vsp)   # (n_vsp, n_bins)
    in_v = (v_grid[:, None] >= lo_v) & (v_grid[:, None] < hi_v)               # (n_v, n_bins)
    hits = in_vsp.astype(np.int64) @ in_v.T.astype(np.int64)                  # (n_vsp, n_v)
    bad = np.argwhere(hits != 1)
    if bad.size:
        i, j = bad[0]
        raise OpModeTableError(
            f"Point (vsp={vsp_grid[i]}, v={v_grid[j]}) falls in {hits[i, j]} bins"
        )
    return int(hits.size)


def load_opmode_table(path: PathLike) -> OpModeTable:
    path = Path(path)
    try:
        df = read_frame_csv(path, OPMODE_COLUMNS)
        bins = tuple(
            OpModeBin(
                bin_id=int(row.bin_id),
                vsp_lo=float(row.vsp_lo),
                vsp_hi=float(row.vsp_hi),
                v_lo=float(row.v_lo),
                v_hi=float(row.v_hi),
                ghg_gps=float(row.ghg_gps),
                nox_gps=float(row.nox_gps),
            )
            for row in df.itertuples(index=False)
        )
    except FileNotFoundError:
        raise
    except (ValueError, TypeError) as e:
        raise OpModeTableError(f"Failed to parse operating-mode table {path.name}: {e}") from e

    table = OpModeTable(bins=bins)
    logger.info(f"Loaded operating-mode table {path.name}: {len(bins)} bins")
    return table


def save_opmode_table(table: OpModeTable, path: PathLike) -> Path:
    df = pd.DataFrame(
        [(b.bin_id, b.vsp_lo, b.vsp_hi, b.v_lo, b.v_hi, b.ghg_gps, b.nox_gps) for b in table.bins],
        columns=OPMODE_COLUMNS,
    )
    return write_frame_csv(df, path)


def default_opmode_table() -> OpModeTable:
    return load_opmode_table(DEFAULT_TABLE_PATH)


def from_rows(rows: Iterable[Tuple]) -> OpModeTable:
    """Build a table from (bin_id, vsp_lo, vsp_hi, v_lo, v_hi, ghg, nox) tuples."""
    return OpModeTable(bins=tuple(OpModeBin(*row) for row in rows))
