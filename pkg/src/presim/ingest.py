"""Station metadata and raw observation ingest.

Reads the station CSV (`id,latitude_deg,longitude_deg,elevation_m`) and
long-format observation CSV (`timestamp,station_id,pressure_kPa`, missing
encoded as an empty field), fills short gaps by linear interpolation,
block-averages, and assembles the aligned data grid. Timestamps are UTC
ISO-8601 in files; internally time is an integer index plus (start, step).
"""

import csv
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from .errors import AlignmentError, DataQualityError, FormatError, ValidationError


@dataclass(frozen=True)
class StationMeta:
    id: str
    latitude: float
    longitude: float
    elevation: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValidationError(f"station {self.id}: latitude {self.latitude} out of range")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValidationError(f"station {self.id}: longitude {self.longitude} out of range")
        if not math.isfinite(self.elevation):
            raise ValidationError(f"station {self.id}: elevation not finite")


@dataclass(frozen=True)
class RawSeries:
    """One station's series; missing values are NaN."""

    station: StationMeta
    start_time: datetime
    step_seconds: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.step_seconds <= 0:
            raise ValidationError("step must be positive")
        if len(values) == 0:
            raise ValidationError("empty series")


@dataclass(frozen=True)
class DataGrid:
    """Complete n x T matrix of kPa on a shared time axis."""

    stations: list
    start_time: datetime
    step_seconds: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != len(self.stations):
            raise ValidationError("grid shape inconsistent with station list")
        if values.shape[1] < 2:
            raise ValidationError("grid needs at least 2 time steps")
        if np.isnan(values).any():
            raise ValidationError("grid contains missing values")

    @property
    def n_stations(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def elevations(self) -> np.ndarray:
        return np.array([s.elevation for s in self.stations])


def load_stations(path) -> list:
    """Parse the station CSV; duplicate ids are rejected."""
    stations = []
    seen = set()
    expected = ["id", "latitude_deg", "longitude_deg", "elevation_m"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != expected:
            raise FormatError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                meta = StationMeta(
                    id=row["id"].strip(),
                    latitude=float(row["latitude_deg"]),
                    longitude=float(row["longitude_deg"]),
                    elevation=float(row["elevation_m"]),
                )
            except (TypeError, KeyError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad station row ({exc})") from exc
            if meta.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate station id {meta.id!r}")
            seen.add(meta.id)
            stations.append(meta)
    return stations


def _parse_time(text: str, path: str, lineno: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_observations(path, stations) -> list:
    """Parse the long-format observation CSV into one RawSeries per station.

    Rows for each station must be contiguous in time with a constant step;
    the empty pressure field marks a missing observation.
    """
    by_id = {s.id: s for s in stations}
    rows = {s.id: [] for s in stations}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["timestamp", "station_id", "pressure_kPa"]
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != expected:
            raise FormatError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            sid = row["station_id"].strip()
            if sid not in by_id:
                continue  # rows for stations outside the requested set
            ts = _parse_time(row["timestamp"].strip(), path, lineno)
            raw = row["pressure_kPa"].strip()
            if raw == "":
                value = np.nan
            else:
                try:
                    value = float(raw)
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad pressure {raw!r}") from exc
            rows[sid].append((ts, value))

    series = []
    for sid, recs in rows.items():
        if not recs:
            continue
        recs.sort(key=lambda r: r[0])
        times = [r[0] for r in recs]
        if len(times) > 1:
            step = (times[1] - times[0]).total_seconds()
            for a, b in zip(times[:-1], times[1:]):
                if abs((b - a).total_seconds() - step) > 1e-6:
                    raise AlignmentError(f"{path}: station {sid}: uneven time step near {a.isoformat()}")
        else:
            step = 60.0
        series.append(
            RawSeries(
                station=by_id[sid],
                start_time=times[0],
                step_seconds=step,
                values=np.array([r[1] for r in recs]),
            )
        )
    return series


def fill_missing(series: RawSeries, max_gap: int) -> RawSeries:
    """Linearly interpolate interior gaps of at most max_gap missing values.

    Leading/trailing gaps up to max_gap are filled by copying the nearest
    present value (no extrapolation). Longer gaps raise DataQualityError.
    """
    v = series.values.copy()
    missing = np.isnan(v)
    if not missing.any():
        return series
    if missing.all():
        raise DataQualityError(f"station {series.station.id}: series entirely missing")

    idx = np.flatnonzero(missing)
    # group consecutive indices into gaps
    splits = np.flatnonzero(np.diff(idx) > 1) + 1
    for gap in np.split(idx, splits):
        lo, hi = gap[0], gap[-1]
        if len(gap) > max_gap:
            t0 = series.start_time
            raise DataQualityError(
                f"station {series.station.id}: gap of {len(gap)} > {max_gap} "
                f"missing values at steps {lo}..{hi} after {t0.isoformat()}"
            )
        left = lo - 1
        right = hi + 1
        if left < 0:
            v[lo : hi + 1] = v[right]
        elif right >= len(v):
            v[lo : hi + 1] = v[left]
        else:
            frac = (np.arange(lo, hi + 1) - left) / (right - left)
            v[lo : hi + 1] = v[left] + frac * (v[right] - v[left])
    return replace(series, values=v)


def block_average(series: RawSeries, block: int) -> RawSeries:
    """Non-overlapping block means; a trailing partial block is discarded."""
    if block <= 0:
        raise ValueError("block must be >= 1")
    v = series.values
    if np.isnan(v).any():
        raise ValidationError("block_average requires a complete series")
    if len(v) < block:
        raise ValidationError("series shorter than one block")
    nblocks = len(v) // block
    avg = v[: nblocks * block].reshape(nblocks, block).mean(axis=1)
    return replace(series, values=avg, step_seconds=series.step_seconds * block)


def assemble_grid(series_list, target_len: int) -> DataGrid:
    """Align complete series into an n x (target_len + 1) grid.

    One extra block average is kept so the differenced series has length
    target_len.
    """
    if not series_list:
        raise ValidationError("no series to assemble")
    first = series_list[0]
    for s in series_list[1:]:
        if abs(s.step_seconds - first.step_seconds) > 1e-9:
            raise AlignmentError("series have differing time steps")
        if s.start_time != first.start_time:
            raise AlignmentError(
                f"series start times differ: {s.station.id} at {s.start_time} "
                f"vs {first.station.id} at {first.start_time}"
            )
    need = target_len + 1
    for s in series_list:
        if len(s.values) < need:
            raise ValidationError(
                f"station {s.station.id}: {len(s.values)} averages < required {need}"
            )
        if np.isnan(s.values).any():
            raise ValidationError(f"station {s.station.id}: series incomplete")
    values = np.vstack([s.values[:need] for s in series_list])
    return DataGrid(
        stations=[s.station for s in series_list],
        start_time=first.start_time,
        step_seconds=first.step_seconds,
        values=values,
    )
