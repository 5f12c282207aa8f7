"""Communication traces: interned (timestamp, sender, receiver) records and the trace-CSV format."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np

from .errors import EmptyTraceError, TraceParseError, ValidationError

HEADER = "timestamp,sender,receiver"


class TraceEvent(NamedTuple):
    timestamp: float
    sender_id: int
    receiver_id: int


@dataclass(frozen=True, eq=False)
class Trace:
    """Columnar, immutable trace.

    Events are stored as three parallel arrays sorted by timestamp (stable on
    ties). ``sender_names[i]`` is the original identifier of sender index ``i``.
    """

    timestamps: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    sender_names: tuple[str, ...]
    receiver_names: tuple[str, ...]

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        snd = np.ascontiguousarray(self.senders, dtype=np.int64)
        rcv = np.ascontiguousarray(self.receivers, dtype=np.int64)
        if not (len(ts) == len(snd) == len(rcv)):
            raise ValidationError("timestamp/sender/receiver arrays differ in length")
        if len(ts) == 0:
            raise EmptyTraceError("trace has no events")
        if not np.all(np.isfinite(ts)) or ts.min() < 0:
            raise ValidationError("timestamps must be finite and non-negative")
        if np.any(np.diff(ts) < 0):
            raise ValidationError("events must be sorted by timestamp")
        n, m = len(self.sender_names), len(self.receiver_names)
        if snd.min() < 0 or snd.max() >= n or rcv.min() < 0 or rcv.max() >= m:
            raise ValidationError("event index outside the interned name tables")
        if len(set(self.sender_names)) != n or len(set(self.receiver_names)) != m:
            raise ValidationError("duplicate names in interning table")
        for arr in (ts, snd, rcv):
            arr.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "senders", snd)
        object.__setattr__(self, "receivers", rcv)
        object.__setattr__(self, "sender_names", tuple(self.sender_names))
        object.__setattr__(self, "receiver_names", tuple(self.receiver_names))

    @property
    def n_senders(self) -> int:
        return len(self.sender_names)

    @property
    def n_receivers(self) -> int:
        return len(self.receiver_names)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def events(self) -> list[TraceEvent]:
        return list(self.iter_events())

    def iter_events(self) -> Iterator[TraceEvent]:
        for t, s, r in zip(self.timestamps.tolist(), self.senders.tolist(), self.receivers.tolist()):
            yield TraceEvent(t, s, r)

    def sender_counts(self) -> np.ndarray:
        return np.bincount(self.senders, minlength=self.n_senders)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.sender_names == other.sender_names
            and self.receiver_names == other.receiver_names
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.senders, other.senders)
            and np.array_equal(self.receivers, other.receivers)
        )

    __hash__ = None


def from_records(records: Iterable[tuple[float, str, str]]) -> Trace:
    """Build a trace from (timestamp, sender name, receiver name) triples.

    Events are stably sorted by timestamp and names are interned in order of
    first appearance in the sorted stream, so serializing and re-parsing gives
    back the same indices.
    """
    s_index: dict[str, int] = {}
    r_index: dict[str, int] = {}
    ts, snd, rcv = [], [], []
    for t, s, r in records:
        ts.append(float(t))
        snd.append(s_index.setdefault(s, len(s_index)))
        rcv.append(r_index.setdefault(r, len(r_index)))
    if not ts:
        raise EmptyTraceError("trace has no events")
    ts_a = np.asarray(ts, dtype=np.float64)
    order = np.argsort(ts_a, kind="stable")
    snd_a = np.asarray(snd, dtype=np.int64)[order]
    rcv_a = np.asarray(rcv, dtype=np.int64)[order]
    return _reintern(ts_a[order], snd_a, rcv_a, tuple(s_index), tuple(r_index))


def parse_trace(source: TextIO | str) -> Trace:
    """Parse trace-CSV text (header ``timestamp,sender,receiver``).

    ``source`` is a text stream or a string holding the whole document.
    Raises :class:`TraceParseError` with the 1-based line number of the first
    malformed row.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = iter(source)
    header = next(lines, None)
    if header is None or header.strip() == "":
        raise EmptyTraceError("empty trace document")
    if header.strip().lstrip("\ufeff") != HEADER:
        raise TraceParseError(1, f"expected header {HEADER!r}, got {header.strip()!r}")

    def records():
        for lineno, line in enumerate(lines, start=2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split(",")
            if len(cols) != 3:
                raise TraceParseError(lineno, f"expected 3 columns, got {len(cols)}")
            try:
                t = float(cols[0])
            except ValueError:
                raise TraceParseError(lineno, f"non-numeric timestamp {cols[0]!r}") from None
            if not math.isfinite(t) or t < 0:
                raise TraceParseError(lineno, f"timestamp must be finite and non-negative, got {cols[0]!r}")
            if not cols[1] or not cols[2]:
                raise TraceParseError(lineno, "empty sender or receiver name")
            yield t, cols[1], cols[2]

    return from_records(records())


def read_trace(path) -> Trace:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh)


def serialize_trace(trace: Trace) -> str:
    """Inverse of :func:`parse_trace`. Timestamps use ``repr`` so they round-trip exactly."""
    out = [HEADER]
    sn, rn = trace.sender_names, trace.receiver_names
    for t, s, r in zip(trace.timestamps.tolist(), trace.senders.tolist(), trace.receivers.tolist()):
        out.append(f"{_fmt_time(t)},{sn[s]},{rn[r]}")
    return "\n".join(out) + "\n"


def write_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_trace(trace))


def _fmt_time(t: float) -> str:
    return str(int(t)) if t.is_integer() and abs(t) < 2**53 else repr(t)


def restrict_to_top_senders(trace: Trace, k: int) -> Trace:
    """Keep the events of the ``k`` busiest senders, then re-intern both index spaces.

    Ties in activity go to the sender that appears first. Receivers left with no
    messages are dropped. ``k >= N`` returns the trace unchanged.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k >= trace.n_senders:
        return trace
    counts = trace.sender_counts()
    # sender index == first-appearance rank, so a stable sort on -count breaks ties correctly
    keep = np.sort(np.argsort(-counts, kind="stable")[:k])
    mask = np.isin(trace.senders, keep)
    snd, rcv = trace.senders[mask], trace.receivers[mask]
    return _reintern(trace.timestamps[mask], snd, rcv, trace.sender_names, trace.receiver_names)


def _reintern(ts, snd, rcv, sender_names, receiver_names) -> Trace:
    # first-appearance order within the surviving events keeps parse->restrict consistent
    s_order = _first_appearance(snd)
    r_order = _first_appearance(rcv)
    s_map = np.full(len(sender_names), -1, dtype=np.int64)
    s_map[s_order] = np.arange(len(s_order))
    r_map = np.full(len(receiver_names), -1, dtype=np.int64)
    r_map[r_order] = np.arange(len(r_order))
    return Trace(
        ts,
        s_map[snd],
        r_map[rcv],
        tuple(sender_names[i] for i in s_order),
        tuple(receiver_names[i] for i in r_order),
    )


def _first_appearance(ids: np.ndarray) -> np.ndarray:
    uniq, first = np.unique(ids, return_index=True)
    return uniq[np.argsort(first, kind="stable")]


def ground_truth_profiles(trace: Trace):
    """Empirical sending profiles: row ``i`` is sender ``i``'s receiver frequencies."""
    from .attack import ProfileMatrix

    counts = np.zeros((trace.n_senders, trace.n_receivers), dtype=np.float64)
    np.add.at(counts, (trace.senders, trace.receivers), 1.0)
    totals = counts.sum(axis=1)
    empty = np.flatnonzero(totals == 0)
    if len(empty):
        raise ValidationError(f"sender {trace.sender_names[empty[0]]!r} has no messages; profile undefined")
    return ProfileMatrix(counts / totals[:, None], kind="ground_truth")
