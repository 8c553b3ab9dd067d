"""Event-log ingestion and the per-case presence matrix.

The canonical interchange format is a UTF-8 CSV with the exact header
``case_id,activity,lifecycle,timestamp``; XES is supported as a reader
only. Within a case, records are kept sorted by timestamp, with ties
broken by source-file order (stable sort).
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .errors import (
    EmptyLog,
    MalformedRow,
    MissingRequiredAttribute,
    UnknownVariable,
    XmlSyntax,
)

CSV_HEADER = "case_id,activity,lifecycle,timestamp"

# Cell codes for CaseMatrix. Value index 0 = present is a global
# convention shared with Factor tables.
PRESENT = 0
ABSENT = 1
MISSING = -1


class Lifecycle(str, Enum):
    START = "START"
    SCHEDULE = "SCHEDULE"
    COMPLETE = "COMPLETE"
    NONE = "NONE"


@dataclass(frozen=True)
class EventRecord:
    case_id: str
    activity: str
    lifecycle: Lifecycle
    timestamp: datetime

    def __post_init__(self):
        if not self.activity:
            raise ValueError("activity must be non-empty")


@dataclass
class EventLog:
    """Per-case, time-ordered event records.

    ``cases`` preserves first-seen case order; ``activity_universe``
    preserves first-seen activity order (useful for deterministic
    downstream node ordering).
    """

    cases: dict[str, list[EventRecord]] = field(default_factory=dict)
    activity_universe: list[str] = field(default_factory=list)

    def add(self, record: EventRecord) -> None:
        self.cases.setdefault(record.case_id, []).append(record)
        if record.activity not in self._universe_set:
            self._universe_set.add(record.activity)
            self.activity_universe.append(record.activity)

    def __post_init__(self):
        self._universe_set = set(self.activity_universe)

    def sort_cases(self) -> None:
        for records in self.cases.values():
            records.sort(key=lambda r: r.timestamp)  # stable: ties keep source order

    @property
    def n_events(self) -> int:
        return sum(len(records) for records in self.cases.values())

    @property
    def n_cases(self) -> int:
        return len(self.cases)


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_csv(stream) -> EventLog:
    """Parse the canonical CSV format into an EventLog.

    ``stream`` may be bytes, str, or a binary/text file object.
    Rows are grouped by case and time-sorted; shuffled timestamps are
    re-sorted silently. Malformed rows raise MalformedRow with their
    1-based line number.
    """
    text = _as_text(stream)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyLog("no CSV header")
    if ",".join(header) != CSV_HEADER:
        raise MalformedRow(1, f"header must be exactly {CSV_HEADER!r}")

    log = EventLog()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedRow(lineno, f"expected 4 columns, got {len(row)}")
        case_id, activity, lifecycle_raw, ts_raw = row
        if not case_id:
            raise MalformedRow(lineno, "empty case_id")
        if not activity:
            raise MalformedRow(lineno, "empty activity")
        try:
            lifecycle = Lifecycle(lifecycle_raw) if lifecycle_raw else Lifecycle.NONE
        except ValueError:
            raise MalformedRow(lineno, f"bad lifecycle {lifecycle_raw!r}")
        try:
            ts = _parse_timestamp(ts_raw)
        except ValueError:
            raise MalformedRow(lineno, f"bad timestamp {ts_raw!r}")
        log.add(EventRecord(case_id, activity, lifecycle, ts))

    if not log.cases:
        raise EmptyLog("CSV contains no event rows")
    log.sort_cases()
    return log


def write_csv(log: EventLog) -> bytes:
    """Serialize an EventLog back to the canonical CSV format."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for records in log.cases.values():
        for r in records:
            ts = r.timestamp.astimezone(timezone.utc)
            writer.writerow(
                [
                    r.case_id,
                    r.activity,
                    r.lifecycle.value,
                    ts.isoformat(timespec="milliseconds"),
                ]
            )
    return out.getvalue().encode("utf-8")


def _as_text(stream) -> str:
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_xes(stream) -> EventLog:
    """Parse the XES subset: trace/event concept:name, lifecycle:transition,
    time:timestamp. All other attributes are ignored.
    """
    text = _as_text(stream)
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlSyntax(str(exc))

    log = EventLog()
    event_index = 0
    trace_index = 0
    for trace in root.iter():
        if _localname(trace.tag) != "trace":
            continue
        trace_index += 1
        case_id = None
        events = []
        for child in trace:
            name = _localname(child.tag)
            if name == "string" and child.get("key") == "concept:name":
                case_id = child.get("value")
            elif name == "event":
                events.append(child)
        if case_id is None:
            case_id = f"trace_{trace_index}"
        for ev in events:
            event_index += 1
            attrs = {c.get("key"): c.get("value") for c in ev}
            activity = attrs.get("concept:name")
            if not activity:
                raise MissingRequiredAttribute(event_index, "concept:name")
            ts_raw = attrs.get("time:timestamp")
            if not ts_raw:
                raise MissingRequiredAttribute(event_index, "time:timestamp")
            try:
                ts = _parse_timestamp(ts_raw)
            except ValueError:
                raise MissingRequiredAttribute(event_index, "time:timestamp")
            lc_raw = attrs.get("lifecycle:transition")
            try:
                lifecycle = Lifecycle(lc_raw.upper()) if lc_raw else Lifecycle.NONE
            except ValueError:
                lifecycle = Lifecycle.NONE
            log.add(EventRecord(case_id, activity, lifecycle, ts))

    if not log.cases:
        raise EmptyLog("XES contains no traces with events")
    log.sort_cases()
    return log


def filter_lifecycle(log: EventLog, keep: set[Lifecycle]) -> EventLog:
    """Drop worker events (activities starting with ``W_``) whose lifecycle
    is not in ``keep``. Non-worker events are always retained; activities
    whose events are all dropped stay in the universe with zero events.
    """
    out = EventLog(activity_universe=list(log.activity_universe))
    for case_id, records in log.cases.items():
        out.cases[case_id] = [
            r
            for r in records
            if not r.activity.startswith("W_") or r.lifecycle in keep
        ]
    return out


def activity_stats(log: EventLog, lifecycle_filter: set[Lifecycle] | None = None) -> dict[str, int]:
    """Occurrence counts per activity, optionally filtering W_ tasks by
    lifecycle. Counts cover every distinct activity in the log's universe,
    so a never-retained activity reports 0.
    """
    if not log.cases:
        raise EmptyLog("cannot compute stats of an empty log")
    source = log if lifecycle_filter is None else filter_lifecycle(log, lifecycle_filter)
    counts = {name: 0 for name in sorted(log.activity_universe)}
    for records in source.cases.values():
        for r in records:
            counts[r.activity] += 1
    return counts


def merge_activities(log: EventLog, rules) -> EventLog:
    """Rename merge-rule members to their merged activity name.

    Repeated adjacent events are kept as-is; presence semantics absorb
    the duplication downstream.
    """
    rename = {}
    for rule in rules:
        for member in rule.members:
            rename[member] = rule.merged_name
    out = EventLog()
    for case_id, records in log.cases.items():
        out.cases.setdefault(case_id, [])
        for r in records:
            name = rename.get(r.activity, r.activity)
            out.add(EventRecord(case_id, name, r.lifecycle, r.timestamp))
    # preserve zero-event activities under their merged names
    for name in log.activity_universe:
        mapped = rename.get(name, name)
        if mapped not in out._universe_set:
            out._universe_set.add(mapped)
            out.activity_universe.append(mapped)
    return out


@dataclass(frozen=True)
class CaseMatrix:
    """Per-case binary presence matrix.

    ``rows[i, j]`` is PRESENT (0) iff case i contains at least one retained
    event of variable j, ABSENT (1) otherwise, MISSING (-1) after
    missingness injection.
    """

    variables: tuple[str, ...]
    rows: np.ndarray
    case_ids: tuple[str, ...]

    @property
    def n_cases(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cells(self) -> int:
        return int(self.rows.size)

    def has_missing(self) -> bool:
        return bool((self.rows == MISSING).any())


def to_case_matrix(log: EventLog, variables) -> CaseMatrix:
    """Build the presence matrix over ``variables`` (which must all exist
    in the log's activity universe)."""
    variables = tuple(variables)
    universe = set(log.activity_universe)
    for v in variables:
        if v not in universe:
            raise UnknownVariable(v)
    col = {v: j for j, v in enumerate(variables)}
    rows = np.full((len(log.cases), len(variables)), ABSENT, dtype=np.int8)
    case_ids = []
    for i, (case_id, records) in enumerate(log.cases.items()):
        case_ids.append(case_id)
        for r in records:
            j = col.get(r.activity)
            if j is not None:
                rows[i, j] = PRESENT
    return CaseMatrix(variables=variables, rows=rows, case_ids=tuple(case_ids))
