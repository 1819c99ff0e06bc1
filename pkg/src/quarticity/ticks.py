"""Tick CSV ingestion with previous-tick resampling to a regular grid."""

from __future__ import annotations

import csv
import io
import math
from typing import Tuple

import numpy as np

from .errors import DataError


def read_ticks(csv_text: str) -> Tuple[np.ndarray, np.ndarray]:
    """Parse a ``timestamp,price`` CSV; timestamps are seconds."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("tick file is empty") from None
    if [h.strip() for h in header] != ["timestamp", "price"]:
        raise DataError(f"line 1: expected header 'timestamp,price', got {','.join(header)!r}")

    times, prices = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise DataError(f"line {line}: expected 2 fields, got {len(row)}")
        try:
            ts, px = float(row[0]), float(row[1])
        except ValueError:
            raise DataError(f"line {line}: non-numeric field in {row!r}") from None
        if not (math.isfinite(ts) and math.isfinite(px)):
            raise DataError(f"line {line}: non-finite value")
        if px <= 0:
            raise DataError(f"line {line}: price must be > 0, got {px}")
        if times and ts <= times[-1]:
            raise DataError(f"line {line}: timestamp {ts} is not after {times[-1]}")
        times.append(ts)
        prices.append(px)

    if len(times) < 2:
        raise DataError(f"need at least 2 ticks, got {len(times)}")
    return np.array(times), np.array(prices)


def ingest_ticks(csv_text: str, delta_n: float, use_log: bool = False) -> Tuple[np.ndarray, float]:
    """Sample ticks on the grid ``t0 + j * delta_n`` by previous-tick interpolation.

    ``t0`` is the first tick time and the grid stops at the last tick.
    """
    if not delta_n > 0:
        raise DataError(f"delta_n must be > 0, got {delta_n}")
    times, prices = read_ticks(csv_text)
    t0 = times[0]
    steps = int(math.floor((times[-1] - t0) / delta_n + 1e-9))
    if steps < 1:
        raise DataError(
            f"grid step {delta_n} is longer than the data span {times[-1] - t0}"
        )
    grid = t0 + delta_n * np.arange(steps + 1)
    idx = np.searchsorted(times, grid + 1e-9 * delta_n, side="right") - 1
    values = prices[idx]
    if use_log:
        values = np.log(values)
    return values, float(delta_n)
