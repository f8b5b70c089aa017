"""Bar ingestion, regularization and return / log-volume construction.

Instants are ``numpy.datetime64`` values at second resolution, always UTC.
Returns are expressed in percent-log units, ``100 * ln(p_t / p_{t-1})``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    DuplicateTimestamp,
    InvalidPrice,
    InvalidVolume,
    LeadingGap,
    NonPositiveShift,
    ParseError,
    SeriesTooShort,
    UnorderedInput,
)

__all__ = [
    "FREQUENCIES",
    "Bar",
    "BarSeries",
    "ReturnSeries",
    "LogVolumeSeries",
    "to_instant",
    "format_instant",
    "parse_bar_csv",
    "read_bar_csv",
    "emit_bar_csv",
    "regularize",
    "log_returns",
    "log_volume",
]

FREQUENCIES = {
    "minute": np.timedelta64(60, "s"),
    "day": np.timedelta64(86400, "s"),
}

CSV_HEADER = ["timestamp", "close", "volume"]
_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _step(frequency):
    try:
        return FREQUENCIES[frequency]
    except KeyError:
        raise ValueError(f"unknown frequency {frequency!r}; expected one of {sorted(FREQUENCIES)}") from None


def to_instant(value) -> np.datetime64:
    """Coerce a string, ``datetime`` or ``datetime64`` to a UTC ``datetime64[s]``.

    Strings must use ``YYYY-MM-DDTHH:MM:SSZ``. Aware datetimes are converted to
    UTC; naive ones are taken to already be UTC.
    """
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[s]")
    if isinstance(value, str):
        value = datetime.strptime(value, _TS_FORMAT)
    if isinstance(value, datetime):
        if value.tzinfo is not None:
            value = value.astimezone(timezone.utc).replace(tzinfo=None)
        return np.datetime64(value, "s")
    raise TypeError(f"cannot interpret {value!r} as an instant")


def format_instant(ts) -> str:
    return str(np.datetime64(ts, "s")) + "Z"


def _is_aligned(ts, frequency):
    seconds = ts.astype("datetime64[s]").astype(np.int64)
    return seconds % _step(frequency).astype(np.int64) == 0


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Bar:
    timestamp: np.datetime64
    close: float
    volume: float

    def __post_init__(self):
        if not (math.isfinite(self.close) and self.close > 0):
            raise InvalidPrice(f"close must be finite and > 0, got {self.close!r}")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise InvalidVolume(f"volume must be finite and >= 0, got {self.volume!r}")


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Close/volume bars for one asset at one frequency.

    Timestamps are strictly increasing and aligned to the frequency. A series
    straight from :func:`parse_bar_csv` may skip grid steps; after
    :func:`regularize` it is gap-free (see :attr:`is_regular`).
    """

    asset_id: str
    frequency: str
    timestamps: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    gap_filled: np.ndarray = field(default=None)

    def __post_init__(self):
        _step(self.frequency)
        ts = _frozen(self.timestamps, "datetime64[s]")
        close = _frozen(self.close, float)
        volume = _frozen(self.volume, float)
        flags = np.zeros(len(ts), bool) if self.gap_filled is None else self.gap_filled
        flags = _frozen(flags, bool)
        if not (len(ts) == len(close) == len(volume) == len(flags)):
            raise ValueError("timestamps, close, volume and gap_filled must have equal length")
        if len(ts) > 1:
            diffs = np.diff(ts)
            if np.any(diffs == np.timedelta64(0, "s")):
                raise DuplicateTimestamp(f"{self.asset_id}: duplicate timestamps")
            if np.any(diffs < np.timedelta64(0, "s")):
                raise UnorderedInput(f"{self.asset_id}: timestamps not increasing")
        if len(ts) and not np.all(_is_aligned(ts, self.frequency)):
            raise ValueError(f"{self.asset_id}: timestamps not aligned to {self.frequency}")
        if np.any(~np.isfinite(close)) or np.any(close <= 0):
            raise InvalidPrice(f"{self.asset_id}: closes must be finite and > 0")
        if np.any(~np.isfinite(volume)) or np.any(volume < 0):
            raise InvalidVolume(f"{self.asset_id}: volumes must be finite and >= 0")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "close", close)
        object.__setattr__(self, "volume", volume)
        object.__setattr__(self, "gap_filled", flags)

    def __len__(self):
        return len(self.timestamps)

    @property
    def step(self):
        return _step(self.frequency)

    @property
    def is_regular(self):
        return len(self) < 2 or bool(np.all(np.diff(self.timestamps) == self.step))

    @property
    def bars(self):
        return [Bar(t, float(c), float(v)) for t, c, v in zip(self.timestamps, self.close, self.volume)]

    @property
    def fill_flags(self):
        return ["gap_filled" if f else "observed" for f in self.gap_filled]


@dataclass(frozen=True, eq=False)
class _PointSeries:
    asset_id: str
    frequency: str
    timestamps: np.ndarray
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamps", _frozen(self.timestamps, "datetime64[s]"))
        object.__setattr__(self, "values", _frozen(self.values, float))
        object.__setattr__(self, "observed", _frozen(self.observed, bool))
        if not (len(self.timestamps) == len(self.values) == len(self.observed)):
            raise ValueError("timestamps, values and observed must have equal length")

    def __len__(self):
        return len(self.timestamps)

    def locate(self, timestamps):
        """Return ``(index, present)`` arrays for the requested timestamps.

        ``present[k]`` is False when ``timestamps[k]`` is not in the series;
        the matching ``index[k]`` is then meaningless.
        """
        timestamps = np.asarray(timestamps, dtype="datetime64[s]")
        idx = np.searchsorted(self.timestamps, timestamps)
        clipped = np.minimum(idx, max(len(self.timestamps) - 1, 0))
        if len(self.timestamps) == 0:
            return clipped, np.zeros(len(timestamps), bool)
        present = (idx < len(self.timestamps)) & (self.timestamps[clipped] == timestamps)
        return clipped, present

    @property
    def points(self):
        return list(zip(self.timestamps, self.values.tolist()))


class ReturnSeries(_PointSeries):
    """Percent-log returns stamped at the later bar of each pair.

    ``observed[k]`` is False when the later bar was gap-filled.
    """


@dataclass(frozen=True, eq=False)
class LogVolumeSeries(_PointSeries):
    """``ln(volume + shift)`` per bar."""

    shift: float = 1.0


def parse_bar_csv(text: str, frequency: str, asset_id: str = "") -> BarSeries:
    """Parse a ``timestamp,close,volume`` CSV document.

    Row numbers in :class:`ParseError` are 1-based file lines (the header is
    line 1). Ordering is validated, never repaired.
    """
    _step(frequency)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty document") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise ParseError(1, f"header must be exactly {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")

    stamps, closes, volumes = [], [], []
    prev = None
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(line_no, f"expected 3 fields, got {len(row)}")
        try:
            ts = np.datetime64(datetime.strptime(row[0].strip(), _TS_FORMAT), "s")
            close = float(row[1])
            volume = float(row[2])
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if not _is_aligned(ts, frequency):
            raise ParseError(line_no, f"timestamp {row[0]} not aligned to {frequency}")
        if prev is not None:
            if ts == prev:
                raise DuplicateTimestamp(f"row {line_no}: duplicate timestamp {row[0]}")
            if ts < prev:
                raise UnorderedInput(f"row {line_no}: timestamp {row[0]} precedes previous row")
        if not (math.isfinite(close) and close > 0):
            raise InvalidPrice(f"row {line_no}: close must be finite and > 0, got {row[1]}")
        if not (math.isfinite(volume) and volume >= 0):
            raise InvalidVolume(f"row {line_no}: volume must be finite and >= 0, got {row[2]}")
        stamps.append(ts)
        closes.append(close)
        volumes.append(volume)
        prev = ts

    return BarSeries(
        asset_id,
        frequency,
        np.array(stamps, dtype="datetime64[s]"),
        np.array(closes, float),
        np.array(volumes, float),
    )


def read_bar_csv(path, frequency, asset_id=None) -> BarSeries:
    from pathlib import Path

    path = Path(path)
    return parse_bar_csv(path.read_text(encoding="utf-8"), frequency, asset_id or path.stem)


def emit_bar_csv(series: BarSeries) -> str:
    """Serialize bars back to CSV; floats use ``repr`` so they round-trip exactly."""
    lines = [",".join(CSV_HEADER)]
    for ts, c, v in zip(series.timestamps, series.close.tolist(), series.volume.tolist()):
        lines.append(f"{format_instant(ts)},{c!r},{v!r}")
    return "\n".join(lines) + "\n"


def regularize(series: BarSeries, start, end) -> BarSeries:
    """Place the series on the closed grid ``[start, end]``.

    Missing steps carry the previous close forward with zero volume and are
    flagged ``gap_filled``. Observations before ``start`` seed the carry.
    """
    start, end = to_instant(start), to_instant(end)
    step = series.step
    if end < start:
        raise ValueError("start must not be after end")
    if not (_is_aligned(start, series.frequency) and _is_aligned(end, series.frequency)):
        raise ValueError("start and end must be aligned to the series frequency")
    grid = np.arange(start, end + step, step).astype("datetime64[s]")
    idx = np.searchsorted(series.timestamps, grid, side="right") - 1
    if len(series) == 0 or idx[0] < 0:
        raise LeadingGap(f"{series.asset_id}: no observation at or before {format_instant(start)}")
    hit = series.timestamps[idx] == grid
    close = series.close[idx]
    volume = np.where(hit, series.volume[idx], 0.0)
    gap = ~hit | series.gap_filled[idx]
    return BarSeries(series.asset_id, series.frequency, grid, close, volume, gap)


def log_returns(series: BarSeries) -> ReturnSeries:
    if len(series) < 2:
        raise SeriesTooShort(f"{series.asset_id}: need at least 2 bars, got {len(series)}")
    values = 100.0 * np.log(series.close[1:] / series.close[:-1])
    return ReturnSeries(series.asset_id, series.frequency, series.timestamps[1:], values, ~series.gap_filled[1:])


def log_volume(series: BarSeries, c: float = 1.0) -> LogVolumeSeries:
    if not c > 0:
        raise NonPositiveShift(f"shift constant must be > 0, got {c!r}")
    values = np.log(series.volume + c)
    return LogVolumeSeries(series.asset_id, series.frequency, series.timestamps, values, ~series.gap_filled, float(c))
