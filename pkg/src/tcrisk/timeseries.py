"""Price ingestion, loss transformation and serial-dependence diagnostics.

Prices are turned into daily negative log-returns ("losses"); the ACF and
Ljung-Box utilities are the standard checks that the losses show volatility
clustering while filtered residuals behave like white noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammainc

__all__ = [
    "PriceSeries",
    "LossSeries",
    "load_prices",
    "to_losses",
    "sample_acf",
    "ljung_box",
]


@dataclass(frozen=True)
class PriceSeries:
    """Strictly positive prices with opaque, ordered date labels."""

    prices: np.ndarray
    dates: tuple = field(default=())

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.ndim != 1 or prices.size < 2:
            raise ValueError("need at least two prices")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0.0):
            bad = int(np.flatnonzero(~(np.isfinite(prices) & (prices > 0.0)))[0])
            raise ValueError(f"non-positive or non-finite price at position {bad}")
        if not self.dates:
            object.__setattr__(self, "dates", tuple(range(prices.size)))
        else:
            object.__setattr__(self, "dates", tuple(self.dates))
            if len(self.dates) != prices.size:
                raise ValueError("dates and prices length mismatch")
            # date labels are opaque; order is only checked when numeric
            if all(isinstance(d, (int, float)) for d in self.dates):
                if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
                    raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class LossSeries:
    """Daily negative log-returns, one shorter than the price series."""

    losses: np.ndarray

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float)
        object.__setattr__(self, "losses", losses)
        if losses.ndim != 1 or losses.size < 1:
            raise ValueError("need at least one loss")
        if not np.all(np.isfinite(losses)):
            raise ValueError("losses must be finite")

    def __len__(self) -> int:
        return self.losses.size

    @property
    def values(self) -> np.ndarray:
        return self.losses


def as_loss_array(losses) -> np.ndarray:
    """Accept a LossSeries or a plain 1-d array of losses."""
    if isinstance(losses, LossSeries):
        return losses.losses
    arr = np.asarray(losses, dtype=float)
    if arr.ndim != 1:
        raise ValueError("losses must be one-dimensional")
    return arr


def load_prices(
    path,
    column: str | int = 1,
    delimiter: str = ",",
    date_column: str | int | None = None,
) -> PriceSeries:
    """Read a price column from a delimited text file.

    ``column`` may be a header name or a 0-based index.  A header row is
    auto-detected (first row whose chosen field does not parse as a number).
    Rows with a missing or non-positive price are a hard error naming the
    row: risk inputs are not patched up silently.
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")

    header: list[str] | None = None
    first = rows[0]
    if isinstance(column, str):
        if column not in first:
            raise ValueError(f"{path}: no column named {column!r}")
        header = first
        col_idx = first.index(column)
    else:
        col_idx = int(column)
        if col_idx >= len(first):
            raise ValueError(f"{path}: no column index {col_idx}")
        if not _is_number(first[col_idx]):
            header = first
    date_idx: int | None = None
    if date_column is not None:
        if isinstance(date_column, str):
            if header is None or date_column not in header:
                raise ValueError(f"{path}: no column named {date_column!r}")
            date_idx = header.index(date_column)
        else:
            date_idx = int(date_column)

    data_rows = rows[1:] if header is not None else rows
    start = 2 if header is not None else 1  # 1-based file row of first data row
    prices, dates = [], []
    for offset, row in enumerate(data_rows):
        rownum = start + offset
        if col_idx >= len(row) or not row[col_idx].strip():
            raise ValueError(f"{path}: missing price in row {rownum}")
        cell = row[col_idx].strip()
        if not _is_number(cell):
            raise ValueError(f"{path}: non-numeric price {cell!r} in row {rownum}")
        value = float(cell)
        if not math.isfinite(value) or value <= 0.0:
            raise ValueError(f"{path}: non-positive price {cell!r} in row {rownum}")
        prices.append(value)
        if date_idx is not None and date_idx < len(row):
            dates.append(row[date_idx].strip())
    if len(prices) < 2:
        raise ValueError(f"{path}: fewer than 2 valid price rows")
    return PriceSeries(np.array(prices), tuple(dates) if dates else ())


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def to_losses(p: PriceSeries) -> LossSeries:
    """losses[i] = -(ln p[i+1] - ln p[i]); a price drop is a positive loss."""
    return LossSeries(-np.diff(np.log(p.prices)))


def sample_acf(x: Sequence[float], max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..max_lag (lag-0 denominator)."""
    arr = np.asarray(x, dtype=float)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    n = arr.size
    if n <= max_lag:
        raise ValueError("series shorter than max_lag")
    centered = arr - arr.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0.0:
        raise ValueError("constant series has no autocorrelation")
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for k in range(1, max_lag + 1):
        acf[k] = float(np.dot(centered[:-k], centered[k:])) / denom
    return acf


def ljung_box(x: Sequence[float], h: int) -> tuple[float, float]:
    """Portmanteau test of no autocorrelation up to lag h.

    Q = n(n+2) sum_k acf[k]^2 / (n-k); the p-value is the chi-square upper
    tail with h degrees of freedom, evaluated through the regularized lower
    incomplete gamma function.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    arr = np.asarray(x, dtype=float)
    n = arr.size
    acf = sample_acf(arr, h)
    k = np.arange(1, h + 1)
    q = float(n * (n + 2) * np.sum(acf[1:] ** 2 / (n - k)))
    p = 1.0 - float(gammainc(h / 2.0, q / 2.0))
    return q, min(max(p, 0.0), 1.0)
