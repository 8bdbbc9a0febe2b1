"""Dated index observations and the CSV file contract for them."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DAYS_PER_YEAR = 365.25


class SeriesFormatError(ValueError):
    """Malformed price file: bad header, unsorted dates, nonpositive levels."""


def year_fraction(start, end):
    """Actual/365.25 year fraction between two ``datetime64`` values."""
    days = (np.asarray(end, dtype="datetime64[D]") - np.datetime64(start, "D")).astype(float)
    return days / DAYS_PER_YEAR


@dataclass(frozen=True)
class PriceSeries:
    """Index levels discounted by the savings account.

    ``times`` are years since the first observation.  ``dates`` is optional so
    synthetic series can be built straight from year grids.
    """

    times: np.ndarray
    levels: np.ndarray
    dates: np.ndarray | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.levels, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise SeriesFormatError("times and levels must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise SeriesFormatError("observation times must be strictly increasing")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise SeriesFormatError("index levels must be strictly positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "levels", s)
        if self.dates is not None:
            object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))

    @classmethod
    def from_dates(cls, dates, levels, **metadata):
        d = np.asarray(dates, dtype="datetime64[D]")
        if d.size > 1 and np.any(np.diff(d).astype(int) <= 0):
            raise SeriesFormatError("dates must be strictly increasing")
        t = year_fraction(d[0], d) if d.size else np.array([])
        return cls(t, np.asarray(levels, dtype=float), d, dict(metadata))

    def __len__(self):
        return self.levels.size

    def window(self, start=None, end=None, *, before=None):
        """Observations with ``start <= date <= end`` (and ``date < before``), re-originated."""
        if self.dates is None:
            raise SeriesFormatError("date windows need a dated series")
        keep = np.ones(len(self), dtype=bool)
        if start is not None:
            keep &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            keep &= self.dates <= np.datetime64(end, "D")
        if before is not None:
            keep &= self.dates < np.datetime64(before, "D")
        meta = dict(self.metadata)
        meta.update(window_start=str(start), window_end=str(end))
        return PriceSeries.from_dates(self.dates[keep], self.levels[keep], **meta)

    def index_of(self, date):
        """Position of the observation nearest to ``date``."""
        gap = np.abs((self.dates - np.datetime64(date, "D")).astype(int))
        return int(np.argmin(gap))


def load_series(path, format="prediscounted"):
    """Read a price CSV.

    ``prediscounted`` files carry ``date,index``; ``raw`` files carry
    ``date,index,savings`` and are discounted here (index / savings, rescaled to 1
    at the first date).
    """
    path = Path(path)
    if format not in ("raw", "prediscounted"):
        raise ValueError(f"unknown series format {format!r}")
    required = ["date", "index"] + (["savings"] if format == "raw" else [])
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise SeriesFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        dates, index, savings = [], [], []
        for row_no, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items()}
            try:
                d = np.datetime64(row["date"].strip(), "D")
                x = float(row["index"])
                b = float(row["savings"]) if format == "raw" else 1.0
            except (ValueError, AttributeError) as exc:
                raise SeriesFormatError(f"{path}: row {row_no}: {exc}") from None
            if not (x > 0 and b > 0):
                raise SeriesFormatError(f"{path}: row {row_no}: levels must be positive")
            if dates and d <= dates[-1]:
                raise SeriesFormatError(f"{path}: row {row_no}: dates not strictly increasing")
            dates.append(d)
            index.append(x)
            savings.append(b)
    levels = np.asarray(index) / np.asarray(savings)
    if format == "raw" and levels.size:
        levels = levels / levels[0]
    return PriceSeries.from_dates(
        np.array(dates, dtype="datetime64[D]"),
        levels,
        source=str(path),
        discounting="savings-account" if format == "raw" else "prediscounted",
    )


def write_series(series, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "index"])
        for d, x in zip(series.dates, series.levels):
            w.writerow([str(d), repr(float(x))])
