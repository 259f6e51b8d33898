"""Dataset ingestion and result writers.

Datasets are CSV files of unit vectors (q+1 columns) or of longitude/latitude
pairs in degrees. Results are JSON for structured output and CSV tables written
through pandas; every float is written with 17 significant digits.
"""

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from framework.core.errors import EmptyFileError, ParseError
from framework.core.sphere_core import lonlat_array_to_unit

logger = logging.getLogger(__name__)

FORMATS = ("unit_csv", "lonlat_csv")
RENORM_TOL = 1e-14
WARN_TOL = 1e-6
FLOAT_FORMAT = "%.17g"


@dataclass
class Dataset:
    points: np.ndarray
    source: str

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim_q(self) -> int:
        return self.points.shape[1] - 1


def _is_header(line: str) -> bool:
    cells = pd.Series([cell.strip() for cell in line.split(",")])
    return bool(pd.to_numeric(cells, errors="coerce").isna().any()) and any(c.isalpha() for c in line)


def _data_lines(path: Path) -> Tuple[List[str], List[int]]:
    """Data lines and their 1-based line numbers; comments, blanks and a leading header dropped."""
    lines, numbers = [], []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not lines and _is_header(stripped):
            continue
        lines.append(stripped)
        numbers.append(lineno)
    return lines, numbers


def _read_table(lines: List[str], width: int) -> pd.DataFrame:
    return pd.read_csv(
        io.StringIO("\n".join(lines)),
        header=None,
        names=list(range(width)),
        comment="#",
        skip_blank_lines=True,
        skipinitialspace=True,
        float_precision="round_trip",
    )


def ingest(path: Union[str, Path], fmt: str = "unit_csv") -> Dataset:
    """Read a dataset; rows off the sphere by more than 1e-14 are renormalised."""
    if fmt not in FORMATS:
        raise ValueError(f"Unknown format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    lines, numbers = _data_lines(path)
    if not lines:
        raise EmptyFileError(f"No data rows in {path}")

    counts = [line.count(",") + 1 for line in lines]
    width = 2 if fmt == "lonlat_csv" else counts[0]
    for lineno, count in zip(numbers, counts):
        if count != width:
            raise ParseError(f"expected {width} columns, got {count}", lineno)

    frame = _read_table(lines, width).apply(pd.to_numeric, errors="coerce")
    values = frame.to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if bad.size:
        raise ParseError(f"non-numeric or non-finite value in {lines[bad[0]]!r}", numbers[bad[0]])

    if fmt == "lonlat_csv":
        bad = np.flatnonzero(np.abs(values[:, 1]) > 90.0)
        if bad.size:
            raise ParseError("latitude outside [-90, 90]", numbers[bad[0]])
        points = lonlat_array_to_unit(values)
    else:
        if width < 2:
            raise ParseError("unit vectors need at least 2 columns", numbers[0])
        points = values

    norms = np.linalg.norm(points, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ParseError("zero vector", numbers[zero[0]])
    off = np.abs(norms - 1.0)
    if np.any(off > WARN_TOL):
        logger.warning(
            "%d rows of %s are not unit vectors (max deviation %.3g); renormalised",
            int(np.sum(off > WARN_TOL)), path, off.max(),
        )
    fix = off > RENORM_TOL
    points[fix] = points[fix] / norms[fix, None]
    logger.info("Read %d points on the %d-sphere from %s", points.shape[0], points.shape[1] - 1, path)
    return Dataset(points=points, source=str(path))


def fmt_float(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a table with a header row; floats use 17 significant digits."""
    path = Path(path)
    frame = pd.DataFrame(list(rows), columns=list(header))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    return path


def write_points_csv(path: Union[str, Path], points: np.ndarray) -> Path:
    """Headerless unit_csv file, readable back by ingest."""
    path = Path(path)
    pd.DataFrame(np.asarray(points, dtype=float)).to_csv(
        path, header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serialisable")


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """JSON with shortest round-trip float repr (17 significant digits at most)."""
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return path
