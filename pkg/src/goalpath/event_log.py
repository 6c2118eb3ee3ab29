"""Event-log ingestion: CSV parsing, activity times, prefixes, splits, stats."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MS_PER_DAY = 86_400_000.0

DEFAULT_COLUMNS = {"case_id": "case_id", "activity": "activity", "timestamp": "timestamp"}

START_LABEL = "<START>"
EOS_LABEL = "<EOS>"


class LogFormatError(ValueError):
    """Raised when an event-log file cannot be parsed."""


@dataclass(frozen=True)
class ActivityVocab:
    """Bijection between activity labels and integer indices.

    Raw activities occupy indices 0..size-1; EOS and START are virtual
    indices appended after them so they can never collide with log data.
    """

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("activity labels must be distinct")
        if START_LABEL in self.labels or EOS_LABEL in self.labels:
            raise ValueError("reserved sentinel label found in log data")
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.labels)})

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def eos(self) -> int:
        return len(self.labels)

    @property
    def start(self) -> int:
        return len(self.labels) + 1

    @property
    def n_actions(self) -> int:
        """Number of policy actions: every activity plus EOS."""
        return len(self.labels) + 1

    def index_of(self, label: str) -> int:
        return self._index[label]

    def label_of(self, idx: int) -> str:
        if idx == self.eos:
            return EOS_LABEL
        if idx == self.start:
            return START_LABEL
        return self.labels[idx]

    def __contains__(self, label: str) -> bool:
        return label in self._index


@dataclass(frozen=True)
class Event:
    trace_id: str
    activity: int
    timestamp_ms: int
    activity_time: float = 0.0  # days since the previous event of the trace


@dataclass(frozen=True)
class Trace:
    trace_id: str
    events: tuple[Event, ...]

    def __len__(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> tuple[int, ...]:
        return tuple(e.activity for e in self.events)

    def duration_days(self) -> float:
        return (self.events[-1].timestamp_ms - self.events[0].timestamp_ms) / MS_PER_DAY


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    vocab: ActivityVocab

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def event_count(self) -> int:
        return sum(len(t) for t in self.traces)


@dataclass(frozen=True)
class DatasetStats:
    trace_count: int
    event_count: int
    activity_count: int
    mean_trace_length: float
    conformant_fraction: float
    mean_duration_days: float
    goal_threshold_days: float


def _parse_timestamp(raw: str, line_no: int) -> int:
    """Parse ISO-8601 (offset or 'Z') or integer epoch milliseconds to epoch ms."""
    text = raw.strip()
    if not text:
        raise LogFormatError(f"line {line_no}: empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise LogFormatError(f"line {line_no}: unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def parse_csv(path: str | Path, column_map: dict[str, str] | None = None) -> EventLog:
    """Read a CSV event log and group rows into timestamp-sorted traces.

    The vocabulary is built from distinct activity labels in first-seen
    order. Timestamp ties within a trace keep the original file order.
    """
    cols = dict(DEFAULT_COLUMNS)
    if column_map:
        cols.update(column_map)
    path = Path(path)
    if not path.exists():
        raise LogFormatError(f"no such file: {path}")

    rows: dict[str, list[tuple[int, int, str]]] = {}  # case -> (ts, file order, label)
    labels: list[str] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise LogFormatError(f"empty file: {path}")
        missing = [c for c in cols.values() if c not in reader.fieldnames]
        if missing:
            raise LogFormatError(f"missing columns {missing} in {path}")
        n_rows = 0
        for line_no, row in enumerate(reader, start=2):
            case = row.get(cols["case_id"])
            label = row.get(cols["activity"])
            ts_raw = row.get(cols["timestamp"])
            if not case or not label or ts_raw is None:
                raise LogFormatError(f"line {line_no}: incomplete row {row!r}")
            ts = _parse_timestamp(ts_raw, line_no)
            rows.setdefault(case, []).append((ts, line_no, label))
            if label not in seen:
                seen.add(label)
                labels.append(label)
            n_rows += 1
    if n_rows == 0:
        raise LogFormatError(f"no event rows in {path}")

    vocab = ActivityVocab(tuple(labels))
    traces = []
    for case, recs in rows.items():
        recs.sort(key=lambda r: (r[0], r[1]))  # stable on ties via file order
        events = tuple(
            Event(trace_id=case, activity=vocab.index_of(label), timestamp_ms=ts)
            for ts, _, label in recs
        )
        traces.append(Trace(trace_id=case, events=events))
    return derive_activity_times(EventLog(traces=tuple(traces), vocab=vocab))


def write_csv(log: EventLog, path: str | Path) -> None:
    """Serialize a log back to CSV (timestamps as epoch ms); parse round-trips."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "activity", "timestamp"])
        for trace in log.traces:
            for e in trace.events:
                writer.writerow([e.trace_id, log.vocab.label_of(e.activity), e.timestamp_ms])


def derive_activity_times(log: EventLog) -> EventLog:
    """Set each event's activity time to the gap to its predecessor, in days.

    The first event of every trace gets 0 (it has no predecessor).
    """
    traces = []
    for trace in log.traces:
        events = []
        prev_ts = None
        for e in trace.events:
            at = 0.0 if prev_ts is None else (e.timestamp_ms - prev_ts) / MS_PER_DAY
            events.append(replace(e, activity_time=at))
            prev_ts = e.timestamp_ms
        traces.append(Trace(trace_id=trace.trace_id, events=tuple(events)))
    return EventLog(traces=tuple(traces), vocab=log.vocab)


def goal_value(trace: Trace) -> float:
    """Cumulative KPI of the trace: total duration in days."""
    return sum(e.activity_time for e in trace.events)


def goal_threshold(log: EventLog, quantile: float = 0.75) -> float:
    """Goal threshold: quantile of case durations, linear interpolation."""
    if not log.traces:
        raise ValueError("empty log")
    durations = [goal_value(t) for t in log.traces]
    return float(np.percentile(durations, quantile * 100))


def make_prefixes(trace: Trace) -> list[tuple[tuple[Event, ...], Event]]:
    """All (prefix of length k, event k+1) pairs, k = 1..n-1."""
    return [(trace.events[:k], trace.events[k]) for k in range(1, len(trace.events))]


def split(log: EventLog, ratio: float, seed: int) -> tuple[EventLog, EventLog]:
    """Deterministic trace-level split; train gets floor(n * ratio) traces."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    n = len(log.traces)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * ratio))
    train_idx = sorted(perm[:n_train])
    test_idx = sorted(perm[n_train:])
    train = tuple(log.traces[i] for i in train_idx)
    test = tuple(log.traces[i] for i in test_idx)
    return EventLog(train, log.vocab), EventLog(test, log.vocab)


def sample_traces(log: EventLog, fraction: float, seed: int) -> EventLog:
    """Random trace subsample (for very large logs); seeded for reproducibility."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(log.traces)
    k = max(1, int(np.floor(n * fraction)))
    idx = sorted(np.random.default_rng(seed).permutation(n)[:k])
    return EventLog(tuple(log.traces[i] for i in idx), log.vocab)


def dataset_stats(log: EventLog, graph=None) -> DatasetStats:
    """Summary statistics; conformance is measured against `graph` when given."""
    if not log.traces:
        raise ValueError("empty log")
    if graph is not None:
        from . import dfg as _dfg

        conformant = sum(1 for t in log.traces if _dfg.is_conformant(graph, t))
        c_frac = conformant / len(log.traces)
    else:
        c_frac = 1.0
    durations = [goal_value(t) for t in log.traces]
    return DatasetStats(
        trace_count=len(log.traces),
        event_count=log.event_count,
        activity_count=log.vocab.size,
        mean_trace_length=log.event_count / len(log.traces),
        conformant_fraction=c_frac,
        mean_duration_days=float(np.mean(durations)),
        goal_threshold_days=goal_threshold(log),
    )
