"""Append-only event log: durability, sequencing, and crash recovery."""

import json
import threading

import pytest

from anncur import store
from anncur.store import CorruptRecord, EventLog, EventRecord, IoError


def append_some(log, n, kind="annotation"):
    return [log.append(kind, {"k": i}) for i in range(n)]


def test_append_then_read_roundtrip(tmp_path):
    path = str(tmp_path / "study.jsonl")
    log = EventLog(path)
    assert log.append("study-created", {"a": 1}) == 1
    assert log.append("registered", {"b": 2}, at="2026-01-01T00:00:00+00:00") == 2
    log.close()
    records = store.read_events(path)
    assert [r.seq for r in records] == [1, 2]
    assert records[0].kind == "study-created" and records[0].payload == {"a": 1}
    assert records[1].at == "2026-01-01T00:00:00+00:00"
    assert isinstance(records[0], EventRecord)


def test_append_rejects_unknown_kind(tmp_path):
    log = EventLog(str(tmp_path / "s.jsonl"))
    with pytest.raises(store.DataError, match="unknown event kind"):
        log.append("renamed", {})
    log.close()


def test_reopen_continues_the_sequence(tmp_path):
    path = str(tmp_path / "s.jsonl")
    log = EventLog(path)
    append_some(log, 3)
    log.close()
    log2 = EventLog(path)
    assert log2.recovery_note is None
    assert [r.seq for r in log2.recovered] == [1, 2, 3]
    assert log2.append("annotation", {}) == 4
    log2.close()
    assert [r.seq for r in store.read_events(path)] == [1, 2, 3, 4]


def test_append_after_close_is_an_io_error(tmp_path):
    log = EventLog(str(tmp_path / "s.jsonl"))
    log.close()
    with pytest.raises(IoError, match="closed"):
        log.append("annotation", {})


def test_concurrent_appends_stay_gap_free(tmp_path):
    path = str(tmp_path / "s.jsonl")
    log = EventLog(path)

    def worker():
        for _ in range(25):
            log.append("annotation", {})

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    log.close()
    assert [r.seq for r in store.read_events(path)] == list(range(1, 101))


def test_blank_lines_are_tolerated(tmp_path):
    path = tmp_path / "s.jsonl"
    log = EventLog(str(path))
    append_some(log, 2)
    log.close()
    raw = path.read_bytes()
    head, _, tail = raw.partition(b"\n")
    path.write_bytes(head + b"\n\n   \n" + tail)
    assert [r.seq for r in store.read_events(str(path))] == [1, 2]


def test_torn_tail_is_reported_with_the_intact_prefix(tmp_path):
    path = tmp_path / "s.jsonl"
    log = EventLog(str(path))
    append_some(log, 3)
    log.close()
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])  # cut into the final record, newline lost
    with pytest.raises(CorruptRecord) as info:
        store.read_events(str(path))
    err = info.value
    assert err.is_tail
    assert err.line == 3
    assert [r.seq for r in err.records] == [1, 2]


def test_open_recovers_from_a_torn_tail(tmp_path):
    path = tmp_path / "s.jsonl"
    log = EventLog(str(path))
    append_some(log, 3)
    log.close()
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])
    log2 = EventLog(str(path))
    assert log2.recovery_note is not None and "line 3" in log2.recovery_note
    assert [r.seq for r in log2.recovered] == [1, 2]
    assert log2.append("annotation", {"after": True}) == 3
    log2.close()
    records = store.read_events(str(path))
    assert [r.seq for r in records] == [1, 2, 3]
    assert records[-1].payload == {"after": True}


def test_unterminated_valid_json_tail_is_still_torn(tmp_path):
    # a crash can lose just the newline; the record may parse but never finished
    path = tmp_path / "s.jsonl"
    log = EventLog(str(path))
    append_some(log, 1)
    log.close()
    record = json.dumps({"seq": 2, "kind": "annotation", "at": "t", "payload": {}})
    with open(path, "ab") as fh:
        fh.write(record.encode())
    with pytest.raises(CorruptRecord, match="unterminated") as info:
        store.read_events(str(path))
    assert info.value.is_tail
    log2 = EventLog(str(path))
    assert [r.seq for r in log2.recovered] == [1]
    log2.close()


def test_interior_corruption_is_unrecoverable(tmp_path):
    path = tmp_path / "s.jsonl"
    log = EventLog(str(path))
    append_some(log, 3)
    log.close()
    lines = path.read_bytes().splitlines(keepends=True)
    lines[1] = b'{"seq": 2, "kind": "annotation"\n'
    path.write_bytes(b"".join(lines))
    with pytest.raises(CorruptRecord) as info:
        store.read_events(str(path))
    assert not info.value.is_tail
    assert info.value.line == 2
    with pytest.raises(CorruptRecord):
        EventLog(str(path))


@pytest.mark.parametrize(
    "line,reason",
    [
        (b"not json", "not a valid json record"),
        (b"[1, 2]", "not an object"),
        (b'{"seq": 1, "kind": "annotation"}', "lacks fields"),
        (b'{"seq": "1", "kind": "annotation", "at": "t", "payload": {}}', "must be an integer"),
        (b'{"seq": 7, "kind": "annotation", "at": "t", "payload": {}}', "expected 1"),
        (b'{"seq": 1, "kind": "nope", "at": "t", "payload": {}}', "unknown event kind"),
        (b'{"seq": 1, "kind": "annotation", "at": 4, "payload": {}}', "'at' must be a string"),
        (b'{"seq": 1, "kind": "annotation", "at": "t", "payload": 3}', "must be an object"),
    ],
)
def test_each_validation_failure_names_its_reason(tmp_path, line, reason):
    path = tmp_path / "s.jsonl"
    path.write_bytes(line + b"\n")
    with pytest.raises(CorruptRecord, match=reason):
        store.read_events(str(path))


def test_sequence_gap_detected_mid_file(tmp_path):
    path = tmp_path / "s.jsonl"
    rows = [
        {"seq": 1, "kind": "annotation", "at": "t", "payload": {}},
        {"seq": 3, "kind": "annotation", "at": "t", "payload": {}},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    with pytest.raises(CorruptRecord, match="sequence number 3, expected 2"):
        store.read_events(str(path))


def test_empty_and_missing_files(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.touch()
    assert store.read_events(str(empty)) == []
    log = EventLog(str(empty))
    assert log.recovered == [] and log.recovery_note is None
    log.close()
    with pytest.raises(FileNotFoundError):
        store.read_events(str(tmp_path / "absent.jsonl"))
