"""Parse raw bus-record CSVs into typed records and apply the cleaning filters.

The expected input is a CSV with one row per observation of one bus between
stops. Column headers are mapped to logical field names through a column map
so differently-labeled exports can be loaded without editing code.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta
from typing import IO, Iterable, Optional, Sequence

from .errors import SchemaError

logger = logging.getLogger(__name__)

DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"

# Logical field -> CSV header of the source export.
DEFAULT_COLUMNS = {
    "recorded_at": "RecordedAtTime",
    "arrival_time": "ArrivalTime",
    "scheduled_arrival": "ScheduledArrivalTime",
    "distance_from_stop": "DistanceFromStop",
    "vehicle_lon": "VehicleLocation.Longitude",
    "vehicle_lat": "VehicleLocation.Latitude",
    "origin_lon": "OriginLong",
    "origin_lat": "OriginLat",
    "dest_lon": "DestinationLong",
    "dest_lat": "DestinationLat",
    "origin_name": "OriginName",
    "destination_name": "DestinationName",
    "published_line_name": "PublishedLineName",
    "next_stop_name": "NextStopPointName",
    "arrival_proximity_text": "ArrivalProximityText",
    "vehicle_ref": "VehicleRef",
    "direction_ref": "DirectionRef",
}

AT_STOP_TOKEN = "at stop"
DEFAULT_OUTBOUND_TOKEN = "1"


@dataclass(slots=True)
class RawRecord:
    """One parsed observation of one bus between stops."""

    recorded_at: datetime
    arrival_time: datetime
    scheduled_arrival: Optional[datetime]
    distance_from_stop: float
    vehicle_lon: float
    vehicle_lat: float
    origin_lon: float
    origin_lat: float
    dest_lon: float
    dest_lat: float
    origin_name: str
    destination_name: str
    published_line_name: str
    next_stop_name: str
    arrival_proximity_text: str
    vehicle_ref: str
    direction_ref: str


@dataclass(slots=True)
class CleanRecord:
    """A record that passed the cleaning filters.

    ``trip_time`` (seconds to the next stop) is filled in later by the
    feature pipeline; it is ``None`` straight out of :func:`clean`.
    """

    recorded_at: datetime
    arrival_time: datetime
    scheduled_arrival: Optional[datetime]
    distance_from_stop: float
    vehicle_lon: float
    vehicle_lat: float
    origin_lon: float
    origin_lat: float
    dest_lon: float
    dest_lat: float
    origin_name: str
    destination_name: str
    published_line_name: str
    next_stop_name: str
    vehicle_ref: str
    trip_time: Optional[int] = None


@dataclass(slots=True)
class RowError:
    """A row that could not be parsed, with its 1-based row number."""

    row: int
    message: str


@dataclass
class CleaningStats:
    """Counts of records dropped by each cleaning rule."""

    input_count: int = 0
    kept: int = 0
    at_stop: int = 0
    inbound: int = 0
    negative_trip_time: int = 0
    direction_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "kept": self.kept,
            "dropped": {
                "at_stop": self.at_stop,
                "inbound": self.inbound,
                "negative_trip_time": self.negative_trip_time,
            },
            "direction_counts": dict(self.direction_counts),
        }


def parse_timestamp(text: str, fmt: str = DEFAULT_TIMESTAMP_FORMAT) -> datetime:
    return datetime.strptime(text.strip(), fmt)


def parse_scheduled_arrival(
    text: str, recorded_at: datetime, fmt: str = DEFAULT_TIMESTAMP_FORMAT
) -> Optional[datetime]:
    """Resolve a scheduled-arrival token to a timestamp.

    The source carries a time of day that follows the service-day convention,
    so the hour may run past 24 ("25:10:00" means 01:10 on the next calendar
    day). Hours >= 24 roll forward from ``recorded_at``'s date. A full
    timestamp in the configured format is also accepted. Empty means the
    schedule is unknown.
    """
    token = text.strip()
    if not token:
        return None
    parts = token.split(":")
    if len(parts) == 3 and all(p.lstrip("-").isdigit() for p in parts):
        hours, minutes, seconds = (int(p) for p in parts)
        if not (0 <= minutes < 60 and 0 <= seconds < 60 and hours >= 0):
            raise ValueError(f"invalid time of day: {token!r}")
        midnight = datetime.combine(recorded_at.date(), datetime.min.time())
        return midnight + timedelta(hours=hours, minutes=minutes, seconds=seconds)
    return parse_timestamp(token, fmt)


def _parse_coord(text: str, low: float, high: float, what: str) -> float:
    value = float(text)
    if not (low <= value <= high):
        raise ValueError(f"{what} {value} outside [{low}, {high}]")
    return value


def parse_csv(
    stream: IO,
    columns: Optional[dict] = None,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> tuple[list[RawRecord], list[RowError]]:
    """Parse a bus-record CSV into RawRecords plus a list of rejected rows.

    Every input row either yields a record or a :class:`RowError` naming the
    row and the reason; input order is preserved. A missing required column
    is fatal and raises :class:`SchemaError`.
    """
    columns = dict(DEFAULT_COLUMNS if columns is None else columns)
    missing_logical = set(DEFAULT_COLUMNS) - set(columns)
    if missing_logical:
        raise SchemaError(f"column map lacks logical fields: {sorted(missing_logical)}")

    if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(
        stream, "mode", ""
    ):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")

    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("input has no header row") from None

    header_index = {name.strip(): i for i, name in enumerate(header)}
    missing = [csv_name for csv_name in columns.values() if csv_name not in header_index]
    if missing:
        raise SchemaError(f"missing required columns: {missing}")
    idx = {logical: header_index[csv_name] for logical, csv_name in columns.items()}

    records: list[RawRecord] = []
    errors: list[RowError] = []
    for row_num, row in enumerate(reader, start=2):
        try:
            records.append(_parse_row(row, idx, timestamp_format))
        except (ValueError, IndexError) as exc:
            errors.append(RowError(row=row_num, message=str(exc)))
    return records, errors


def _parse_row(row: Sequence[str], idx: dict, fmt: str) -> RawRecord:
    def cell(logical: str) -> str:
        return row[idx[logical]]

    recorded_at = parse_timestamp(cell("recorded_at"), fmt)
    arrival_time = parse_timestamp(cell("arrival_time"), fmt)
    scheduled = parse_scheduled_arrival(cell("scheduled_arrival"), recorded_at, fmt)
    distance = float(cell("distance_from_stop"))
    if distance < 0:
        raise ValueError(f"negative distance_from_stop: {distance}")
    line = cell("published_line_name").strip()
    stop = cell("next_stop_name").strip()
    if not line:
        raise ValueError("empty published_line_name")
    if not stop:
        raise ValueError("empty next_stop_name")
    return RawRecord(
        recorded_at=recorded_at,
        arrival_time=arrival_time,
        scheduled_arrival=scheduled,
        distance_from_stop=distance,
        vehicle_lon=_parse_coord(cell("vehicle_lon"), -180, 180, "longitude"),
        vehicle_lat=_parse_coord(cell("vehicle_lat"), -90, 90, "latitude"),
        origin_lon=_parse_coord(cell("origin_lon"), -180, 180, "longitude"),
        origin_lat=_parse_coord(cell("origin_lat"), -90, 90, "latitude"),
        dest_lon=_parse_coord(cell("dest_lon"), -180, 180, "longitude"),
        dest_lat=_parse_coord(cell("dest_lat"), -90, 90, "latitude"),
        origin_name=cell("origin_name").strip(),
        destination_name=cell("destination_name").strip(),
        published_line_name=line,
        next_stop_name=stop,
        arrival_proximity_text=cell("arrival_proximity_text").strip(),
        vehicle_ref=cell("vehicle_ref").strip(),
        direction_ref=cell("direction_ref").strip(),
    )


def _scheduled_token(record: RawRecord) -> str:
    """Scheduled arrival as a service-day time of day relative to recorded_at.

    Hours may exceed 24 so that re-parsing resolves to the same timestamp.
    """
    sched = record.scheduled_arrival
    if sched is None:
        return ""
    midnight = datetime.combine(record.recorded_at.date(), datetime.min.time())
    offset = sched - midnight
    total = int(offset.total_seconds())
    if total < 0:
        return sched.strftime("%H:%M:%S")
    hours, rest = divmod(total, 3600)
    minutes, seconds = divmod(rest, 60)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}"


def serialize_csv(
    records: Iterable[RawRecord],
    stream: IO,
    columns: Optional[dict] = None,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> None:
    """Write records in the same CSV schema :func:`parse_csv` consumes."""
    columns = dict(DEFAULT_COLUMNS if columns is None else columns)
    writer = csv.writer(stream, lineterminator="\n")
    logical_order = list(columns)
    writer.writerow([columns[name] for name in logical_order])
    for rec in records:
        row = []
        for name in logical_order:
            if name == "scheduled_arrival":
                row.append(_scheduled_token(rec))
            elif name in ("recorded_at", "arrival_time"):
                row.append(getattr(rec, name).strftime(timestamp_format))
            elif name == "distance_from_stop":
                row.append(repr(rec.distance_from_stop))
            elif name in ("vehicle_lon", "vehicle_lat", "origin_lon", "origin_lat",
                          "dest_lon", "dest_lat"):
                row.append(repr(getattr(rec, name)))
            else:
                row.append(getattr(rec, name))
        writer.writerow(row)


_CLEAN_FIELDS = [f.name for f in fields(CleanRecord) if f.name != "trip_time"]


def _is_at_stop(record, at_stop_token: str) -> bool:
    text = getattr(record, "arrival_proximity_text", None)
    if text is None:
        return False
    return " ".join(text.split()).lower() == at_stop_token


def _is_outbound(record, outbound_token: str) -> bool:
    direction = getattr(record, "direction_ref", None)
    if direction is None:
        return True
    return str(direction).strip() == outbound_token


def passes_filters(
    record,
    outbound_token: str = DEFAULT_OUTBOUND_TOKEN,
    at_stop_token: str = AT_STOP_TOKEN,
) -> bool:
    """True when a record would survive :func:`clean`."""
    return (
        not _is_at_stop(record, at_stop_token)
        and _is_outbound(record, outbound_token)
        and record.arrival_time >= record.recorded_at
    )


def clean(
    records: Iterable,
    outbound_token: str = DEFAULT_OUTBOUND_TOKEN,
    at_stop_token: str = AT_STOP_TOKEN,
) -> tuple[list[CleanRecord], CleaningStats]:
    """Apply the cleaning filters and report per-rule drop counts.

    Drops, in order: records observed at a stop (the trip is effectively
    over), records not in the outbound direction, and records whose arrival
    precedes the observation time (the trip time would be negative). The
    outbound token is configurable because direction encodings vary between
    exports; the observed distribution of direction values is logged so an
    operator can sanity-check the choice.
    """
    stats = CleaningStats()
    kept: list[CleanRecord] = []
    for rec in records:
        stats.input_count += 1
        direction = getattr(rec, "direction_ref", None)
        if direction is not None:
            key = str(direction).strip()
            stats.direction_counts[key] = stats.direction_counts.get(key, 0) + 1
        if _is_at_stop(rec, at_stop_token):
            stats.at_stop += 1
            continue
        if not _is_outbound(rec, outbound_token):
            stats.inbound += 1
            continue
        if rec.arrival_time < rec.recorded_at:
            stats.negative_trip_time += 1
            continue
        if isinstance(rec, CleanRecord):
            kept.append(rec)
        else:
            kept.append(CleanRecord(**{name: getattr(rec, name) for name in _CLEAN_FIELDS}))
    stats.kept = len(kept)
    if stats.direction_counts:
        logger.info("direction value distribution: %s", dict(Counter(stats.direction_counts)))
    return kept, stats
