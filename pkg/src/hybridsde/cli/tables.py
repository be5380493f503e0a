"""CSV tables and atomic file output."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["format_float", "write_atomic", "write_csv", "read_csv"]


def format_float(value) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(value), ".17g")


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    width = len(header)
    for row in rows:
        row = list(row)
        if len(row) != width:
            raise ValueError(f"row has {len(row)} fields, header has {width}")
        writer.writerow([format_float(v) for v in row])
    return write_atomic(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, {name: data[:, i] for i, name in enumerate(header)}
