"""
CSV export for result tables.

Numbers are written in scientific notation with 12 significant digits.
When a run fails part-way, the rows produced so far are kept and a
trailing ``# ERROR:`` marker line names the failure.
"""

import csv
import math
import sys
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

Cell = Union[float, int, str, None]

ERROR_MARKER = "# ERROR:"


def format_cell(value: Cell) -> str:
    """Format one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.11e}"
    return str(value)


def write_table(
    header: Sequence[str],
    rows: Iterable[Sequence[Cell]],
    target: Union[str, Path, IO[str], None] = None,
    error: Optional[str] = None,
) -> int:
    """
    Write a header and rows as CSV.

    Args:
        header: Column names
        rows: Row values, formatted by ``format_cell``
        target: File path, open text stream, or None for stdout
        error: Optional failure message appended as a marker line

    Returns:
        Number of data rows written
    """
    if target is None or not isinstance(target, (str, Path)):
        stream = target if target is not None else sys.stdout
        return _write(stream, header, rows, error)

    with open(target, "w", newline="", encoding="utf-8") as handle:
        return _write(handle, header, rows, error)


def _write(
    stream: IO[str],
    header: Sequence[str],
    rows: Iterable[Sequence[Cell]],
    error: Optional[str],
) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        writer.writerow([format_cell(cell) for cell in row])
        count += 1
    if error is not None:
        stream.write(f"{ERROR_MARKER} {error}\n")
    return count
