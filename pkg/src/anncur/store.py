"""Append-only jsonl event log with replay-based recovery.

One log per study.  Every record carries a strictly increasing, gap-free
sequence number, so replay can verify integrity line by line.  A torn
final line (the classic crash-mid-write case) is detected and reported
with the intact prefix attached; interior corruption is unrecoverable
and surfaces as a hard error.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import AnncurError, DataError

EVENT_KINDS = (
    "study-created",
    "registered",
    "annotation",
    "questionnaire",
    "deletion-tombstone",
)


class IoError(AnncurError):
    """The log could not be written (closed handle, filesystem failure)."""


class CorruptRecord(DataError):
    """A log line failed validation.

    Attributes: line (1-based line number), records (the valid prefix),
    is_tail (True when the bad line is the final line, i.e. a torn write).
    """

    def __init__(self, message: str, line: int, records: list, is_tail: bool):
        super().__init__(message)
        self.line = line
        self.records = records
        self.is_tail = is_tail


@dataclass(frozen=True)
class EventRecord:
    seq: int
    kind: str
    at: str
    payload: dict


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _parse_record(raw: bytes, line: int, expected_seq: int, prefix: list, is_tail: bool) -> EventRecord:
    def bad(reason: str) -> CorruptRecord:
        return CorruptRecord(
            f"log line {line}: {reason}", line=line, records=list(prefix), is_tail=is_tail
        )

    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise bad("not a valid json record") from None
    if not isinstance(obj, dict):
        raise bad("record is not an object")
    missing = {"seq", "kind", "at", "payload"} - set(obj)
    if missing:
        raise bad(f"record lacks fields {sorted(missing)}")
    seq = obj["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise bad("'seq' must be an integer")
    if seq != expected_seq:
        raise bad(f"sequence number {seq}, expected {expected_seq}")
    if obj["kind"] not in EVENT_KINDS:
        raise bad(f"unknown event kind {obj['kind']!r}")
    if not isinstance(obj["at"], str):
        raise bad("'at' must be a string timestamp")
    if not isinstance(obj["payload"], dict):
        raise bad("'payload' must be an object")
    return EventRecord(seq=seq, kind=obj["kind"], at=obj["at"], payload=obj["payload"])


def _scan(path: str):
    """Yield (records, good_byte_length). Raises CorruptRecord on any bad line."""
    records: list[EventRecord] = []
    good_bytes = 0
    with open(path, "rb") as fh:
        data = fh.read()
    offset = 0
    line_no = 0
    n = len(data)
    while offset < n:
        newline = data.find(b"\n", offset)
        if newline == -1:
            raw, end, terminated = data[offset:], n, False
        else:
            raw, end, terminated = data[offset:newline], newline + 1, True
        line_no += 1
        if raw.strip():
            is_tail = end >= n
            record = _parse_record(raw, line_no, len(records) + 1, records, is_tail)
            if not terminated:
                # a record without its newline never finished writing
                raise CorruptRecord(
                    f"log line {line_no}: unterminated final record",
                    line=line_no,
                    records=list(records),
                    is_tail=True,
                )
            records.append(record)
            good_bytes = end
        else:
            good_bytes = end
        offset = end
    return records, good_bytes


def read_events(path: str) -> list[EventRecord]:
    """Strict replay read: every line must be a valid, in-sequence record."""
    records, _ = _scan(path)
    return records


class EventLog:
    """Single-writer append log. Opening recovers from a torn final line
    by truncating it; anything worse propagates as CorruptRecord."""

    def __init__(self, path: str):
        self.path = path
        self.recovered: list[EventRecord] = []
        self.recovery_note: str | None = None
        self._lock = threading.Lock()
        if os.path.exists(path):
            try:
                records, good_bytes = _scan(path)
            except CorruptRecord as exc:
                if not exc.is_tail:
                    raise
                records = exc.records
                good_bytes = self._prefix_bytes(path, len(records))
                with open(path, "r+b") as fh:
                    fh.truncate(good_bytes)
                self.recovery_note = f"truncated torn record at line {exc.line}"
            self.recovered = records
        self._next_seq = len(self.recovered) + 1
        self._fh = open(path, "ab")

    @staticmethod
    def _prefix_bytes(path: str, n_records: int) -> int:
        # byte length of the first n_records terminated lines
        with open(path, "rb") as fh:
            data = fh.read()
        offset = 0
        seen = 0
        while seen < n_records:
            newline = data.find(b"\n", offset)
            if data[offset:newline].strip():
                seen += 1
            offset = newline + 1
        return offset

    def append(self, kind: str, payload: dict, at: str | None = None) -> int:
        """Durably append one event; returns its sequence number."""
        if kind not in EVENT_KINDS:
            raise DataError(f"unknown event kind {kind!r}")
        with self._lock:
            if self._fh.closed:
                raise IoError(f"log {self.path} is closed")
            record = {
                "seq": self._next_seq,
                "kind": kind,
                "at": at or _utc_now(),
                "payload": payload,
            }
            try:
                self._fh.write((json.dumps(record, ensure_ascii=False) + "\n").encode("utf-8"))
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except (OSError, ValueError) as exc:
                raise IoError(f"append to {self.path} failed: {exc}") from None
            self._next_seq += 1
            return record["seq"]

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()
