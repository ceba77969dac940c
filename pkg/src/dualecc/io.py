"""CSV ingestion and persistence.

Input tables (forecasts, observations) are written with shortest round-trip
float formatting so that write -> read is bit-exact. Derived outputs
(coefficients, scores, spectra, reports) use 10 significant digits.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from dualecc.core import EnsembleForecast, ObservationSeries
from dualecc.errors import ValidationError

log = logging.getLogger(__name__)


def fmt(value) -> str:
    """Derived-output number format: 10 significant digits."""
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.10g}"


def fmt_exact(value) -> str:
    v = float(value)
    return "" if math.isnan(v) else repr(v)


def round_sig(value, digits: int = 10):
    """Recursively round floats in nested containers for JSON output."""
    if isinstance(value, dict):
        return {str(k): round_sig(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_sig(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return round_sig(value.tolist(), digits)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{digits}g}")
    if isinstance(value, (dt.date,)):
        return value.isoformat()
    return value


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(round_sig(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def member_columns(n_members: int, prefix: str = "m") -> list:
    width = max(2, len(str(n_members)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(n_members)]


def _parse_date(text, line):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"line {line}: invalid ISO date {text!r}") from None


def _parse_int(text, line, column):
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"line {line}, column {column!r}: invalid integer {text!r}") from None


def _parse_float(text, line, column):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(f"line {line}, column {column!r}: invalid number {text!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"line {line}, column {column!r}: non-finite value {text!r}")
    if v < 0:
        raise ValidationError(f"line {line}, column {column!r}: negative wind speed {text}")
    return v


def write_forecasts(path, forecasts) -> None:
    forecasts = list(forecasts)
    if not forecasts:
        raise ValidationError("no forecasts to write")
    N = forecasts[0].n_members
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "station", "lead_time", *member_columns(N)])
        for f in sorted(forecasts, key=lambda f: (f.run_date, f.station_id)):
            for t, lt in enumerate(f.lead_times):
                w.writerow([f.run_date.isoformat(), f.station_id, int(lt), *map(fmt_exact, f.members[t])])


def ingest_forecasts(path, lead_times=None) -> list:
    """Read ``date,station,lead_time,m01..mNN`` rows into forecasts.

    Parameters
    ----------
    path : path-like
    lead_times : sequence of int, optional
        Expected lead-time grid. Defaults to every lead time seen in the file.

    Raises
    ------
    ValidationError
        On a malformed row (with its line number), a negative or non-finite
        wind value (naming the cell), or a duplicated
        ``(date, station, lead_time)``.

    A ``(date, station)`` missing any lead time of the grid is dropped with a
    warning.
    """
    rows = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["date", "station", "lead_time"] or len(header) < 5:
            raise ValidationError(f"{path}: header must be date,station,lead_time,m01,...")
        cols = header[3:]
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValidationError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
            date = _parse_date(rec[0], line)
            station = rec[1].strip()
            lt = _parse_int(rec[2], line, "lead_time")
            vals = [_parse_float(v, line, c) for v, c in zip(rec[3:], cols)]
            key = (date, station)
            if lt in rows[key]:
                raise ValidationError(f"line {line}: duplicate entry for {date} {station} lead time {lt}")
            rows[key][lt] = vals
    grid = sorted(set(lead_times) if lead_times is not None else {lt for r in rows.values() for lt in r})
    out = []
    for (date, station), by_lt in sorted(rows.items()):
        missing = [lt for lt in grid if lt not in by_lt]
        if missing:
            log.warning("dropping forecast %s %s: missing lead times %s", date, station, missing)
            continue
        members = np.array([by_lt[lt] for lt in grid])
        out.append(EnsembleForecast(date, station, np.array(grid), members))
    return out


def write_observations(path, observations) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "station", "lead_time", "obs"])
        rows = []
        for series in observations:
            for date, vals in series.values.items():
                for lt, v in zip(series.lead_times, vals):
                    rows.append((date, series.station_id, int(lt), v))
        for date, sid, lt, v in sorted(rows, key=lambda r: (r[0], r[1], r[2])):
            w.writerow([date.isoformat(), sid, lt, fmt_exact(v)])


def ingest_observations(path, lead_times=None) -> list:
    """Read ``date,station,lead_time,obs`` rows (empty ``obs`` = missing).

    Lead times absent from the file for a date are treated as missing.
    """
    data = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header != ["date", "station", "lead_time", "obs"]:
            raise ValidationError(f"{path}: header must be date,station,lead_time,obs")
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 4:
                raise ValidationError(f"line {line}: expected 4 fields, got {len(rec)}")
            date = _parse_date(rec[0], line)
            station = rec[1].strip()
            lt = _parse_int(rec[2], line, "lead_time")
            v = math.nan if not rec[3].strip() else _parse_float(rec[3], line, "obs")
            key = (station, date)
            if lt in data[key]:
                raise ValidationError(f"line {line}: duplicate entry for {date} {station} lead time {lt}")
            data[key][lt] = v
    grid = sorted(set(lead_times) if lead_times is not None else {lt for r in data.values() for lt in r})
    by_station = defaultdict(dict)
    for (station, date), vals in data.items():
        by_station[station][date] = np.array([vals.get(lt, math.nan) for lt in grid])
    return [ObservationSeries(s, np.array(grid), v) for s, v in sorted(by_station.items())]


def write_coefficients(path, records) -> None:
    """``records``: iterable of ``(date, station, lead_time, coeffs_at_t)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "station", "lead_time", "a", "b", "c", "d"])
        for date, station, lt, (a, b, c, d) in records:
            w.writerow([date.isoformat(), station, int(lt), fmt(a), fmt(b), fmt(c), fmt(d)])


def write_quantiles(path, records) -> None:
    """``records``: iterable of ``(date, station, lead_times, QuantileSet)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header_written = False
        for date, station, lead_times, q in records:
            if not header_written:
                w.writerow(["date", "station", "lead_time", *member_columns(q.values.shape[1], "q")])
                header_written = True
            for lt, row in zip(lead_times, q.values):
                w.writerow([date.isoformat(), station, int(lt), *map(fmt_exact, row)])


def write_scenarios(path, records) -> None:
    """``records``: iterable of ``(date, station, lead_times, ScenarioSet)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header_written = False
        for date, station, lead_times, s in records:
            if not header_written:
                w.writerow(
                    ["date", "station", "lead_time", "provenance", *member_columns(s.values.shape[1], "member_")]
                )
                header_written = True
            for lt, row in zip(lead_times, s.values):
                w.writerow([date.isoformat(), station, int(lt), s.provenance, *map(fmt_exact, row)])


def read_scenarios(path) -> dict:
    """Read a scenario CSV into ``{(date, station, provenance): (lead_times, T x N)}``."""
    groups = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:4] != ["date", "station", "lead_time", "provenance"]:
            raise ValidationError(f"{path}: header must start with date,station,lead_time,provenance")
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValidationError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
            key = (_parse_date(rec[0], line), rec[1].strip(), rec[3].strip())
            lt = _parse_int(rec[2], line, "lead_time")
            groups[key].append((lt, [_parse_float(v, line, c) for v, c in zip(rec[4:], header[4:])]))
    out = {}
    for key, rows in sorted(groups.items()):
        rows.sort()
        out[key] = (np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
    return out


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
