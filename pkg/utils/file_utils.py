from pathlib import Path
from typing import Iterable, Mapping, Union

import pandas as pd

from utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def read_frame_csv(path: PathLike, required_columns: Iterable[str]) -> pd.DataFrame:
    """
    Read a CSV into a DataFrame and check its header.

    Args:
        path: CSV file to read.
        required_columns: Columns that must all be present.

    Returns:
        pd.DataFrame: Parsed file, floats read back exactly as written.

    Raises:
        FileNotFoundError: The file does not exist.
        ValueError: The file cannot be parsed or misses a required column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        df = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    except Exception as e:
        raise ValueError(f"Failed to read {path.name}: {e}") from e

    df.columns = [str(col).strip() for col in df.columns]
    missing = [col for col in required_columns if col not in df.columns]
    if missing:
        raise ValueError(f"{path.name} is missing columns: {', '.join(missing)}")
    return df


def write_frame_csv(df: pd.DataFrame, path: PathLike) -> Path:
    """Write a DataFrame as UTF-8 CSV with LF line endings, creating parent folders."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def export_workbook(frames: Mapping[str, pd.DataFrame], path: PathLike) -> Path:
    """
    Write several DataFrames into one Excel workbook, one sheet each.

    Sheet names are cut to Excel's 31-character limit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(path, engine="xlsxwriter") as writer:
        for name, df in frames.items():
            df.to_excel(writer, index=False, sheet_name=name[:31])
    logger.info(f"Workbook exported: {len(frames)} sheets → {path}")
    return path
