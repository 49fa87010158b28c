"""Timed annotation datasets: loading, validation, splitting.

A dataset couples annotatable instances (text plus optional difficulty
metadata and multiple-choice sets) with timing records, i.e. how long a
named annotator took on an instance.  Two input formats are accepted:

* jsonl, one object per line.  A line carries instance fields and, when
  ``time_seconds`` is present, also defines a timing record.  Lines may
  repeat an id (e.g. one line per annotator); repeated instance fields
  must agree.  ``text`` may be omitted on record lines whose instance is
  defined elsewhere in the file.
* tsv with header ``id	annotator	time_seconds	label	text``,
  one timing record per row.

Splits are seeded permutations with floor-sized parts; leftover items go
to the last part, so re-running with the same seed is byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field

from .errors import DataError, ParseError

DIFFICULTY_LEVELS = (1, 2, 3, 4, 5)
CHOICES_PER_SET = 6


class InvalidInstance(DataError):
    pass


class NonPositiveTime(DataError):
    pass


class DanglingReference(DataError):
    pass


class DuplicateRecord(DataError):
    pass


class BadFractions(DataError):
    pass


class UnknownSplitName(DataError):
    pass


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class Instance:
    """One annotatable unit.

    choice_sets, when present, maps a difficulty level to the six choices
    (one gold label plus five distractors) shown for that level.
    """

    id: str
    text: str
    difficulty_level: int | None = None
    gold_label: str | None = None
    choice_sets: dict[int, tuple[str, ...]] | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidInstance(f"instance id must be a non-empty string, got {self.id!r}")
        if not isinstance(self.text, str):
            raise InvalidInstance(f"instance {self.id!r}: text must be a string")
        if self.difficulty_level is not None:
            if not _is_int(self.difficulty_level) or self.difficulty_level not in DIFFICULTY_LEVELS:
                raise InvalidInstance(
                    f"instance {self.id!r}: difficulty_level must be an integer in 1..5, "
                    f"got {self.difficulty_level!r}"
                )
        if self.gold_label is not None and not isinstance(self.gold_label, str):
            raise InvalidInstance(f"instance {self.id!r}: gold_label must be a string")
        if self.choice_sets is not None:
            if self.gold_label is None:
                raise InvalidInstance(
                    f"instance {self.id!r}: choice_sets requires a gold_label"
                )
            normalized: dict[int, tuple[str, ...]] = {}
            for level, choices in self.choice_sets.items():
                if not _is_int(level) or level not in DIFFICULTY_LEVELS:
                    raise InvalidInstance(
                        f"instance {self.id!r}: choice set level {level!r} not in 1..5"
                    )
                choices = tuple(choices)
                if len(choices) != CHOICES_PER_SET or any(not isinstance(c, str) for c in choices):
                    raise InvalidInstance(
                        f"instance {self.id!r}: choice set for level {level} must hold "
                        f"{CHOICES_PER_SET} strings"
                    )
                if len(set(choices)) != CHOICES_PER_SET:
                    raise InvalidInstance(
                        f"instance {self.id!r}: choice set for level {level} has duplicates"
                    )
                if self.gold_label not in choices:
                    raise InvalidInstance(
                        f"instance {self.id!r}: choice set for level {level} lacks the gold label"
                    )
                normalized[level] = choices
            object.__setattr__(self, "choice_sets", normalized)


@dataclass(frozen=True)
class TimedRecord:
    """One annotator's label and wall-clock time for one instance."""

    instance_id: str
    annotator_id: str
    label: str
    time_seconds: float

    def __post_init__(self):
        if not isinstance(self.instance_id, str) or not self.instance_id:
            raise InvalidInstance("record needs a non-empty instance_id")
        if not isinstance(self.annotator_id, str) or not self.annotator_id:
            raise InvalidInstance(f"record for {self.instance_id!r} needs an annotator_id")
        if not isinstance(self.label, str):
            raise InvalidInstance(f"record for {self.instance_id!r}: label must be a string")
        t = self.time_seconds
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t <= 0:
            raise NonPositiveTime(
                f"record for {self.instance_id!r} by {self.annotator_id!r}: "
                f"time_seconds must be a positive finite number, got {t!r}"
            )
        object.__setattr__(self, "time_seconds", float(t))


@dataclass(frozen=True)
class Dataset:
    instances: tuple[Instance, ...]
    records: tuple[TimedRecord, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "records", tuple(self.records))
        by_id: dict[str, Instance] = {}
        for inst in self.instances:
            if inst.id in by_id:
                raise InvalidInstance(f"duplicate instance id {inst.id!r}")
            by_id[inst.id] = inst
        seen_pairs: set[tuple[str, str]] = set()
        for rec in self.records:
            if rec.instance_id not in by_id:
                raise DanglingReference(
                    f"record references unknown instance {rec.instance_id!r}"
                )
            pair = (rec.instance_id, rec.annotator_id)
            if pair in seen_pairs:
                raise DuplicateRecord(
                    f"more than one record for instance {rec.instance_id!r} "
                    f"by annotator {rec.annotator_id!r}"
                )
            seen_pairs.add(pair)
        object.__setattr__(self, "_by_id", by_id)

    def instance(self, instance_id: str) -> Instance:
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise DanglingReference(f"unknown instance {instance_id!r}") from None

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._by_id

    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]

    def annotators(self) -> list[str]:
        return sorted({rec.annotator_id for rec in self.records})


@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset[str]
    dev: frozenset[str]
    test: frozenset[str]
    seed: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "train", frozenset(self.train))
        object.__setattr__(self, "dev", frozenset(self.dev))
        object.__setattr__(self, "test", frozenset(self.test))
        if (self.train & self.dev) or (self.train & self.test) or (self.dev & self.test):
            raise DataError("split parts must be pairwise disjoint")

    def part(self, name: str) -> frozenset[str]:
        if name not in ("train", "dev", "test"):
            raise UnknownSplitName(f"unknown split name {name!r}")
        return getattr(self, name)


def _parse_jsonl(path: str):
    texts: dict[str, tuple[str, int]] = {}
    meta: dict[str, dict] = {}
    order: list[str] = []
    first_line: dict[str, int] = {}
    records: list[tuple[int, str, str, str, object]] = []

    def set_field(iid: str, key: str, value, lineno: int):
        slot = meta.setdefault(iid, {})
        if key in slot and slot[key] != value:
            raise ParseError(f"{path}:{lineno}: conflicting {key!r} for instance {iid!r}")
        slot[key] = value

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid json ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a json object")
            iid = obj.get("id")
            if not isinstance(iid, str) or not iid:
                raise ParseError(f"{path}:{lineno}: missing or empty 'id'")
            if iid not in first_line:
                first_line[iid] = lineno
                order.append(iid)
            has_time = obj.get("time_seconds") is not None
            if "text" in obj:
                if not isinstance(obj["text"], str):
                    raise ParseError(f"{path}:{lineno}: 'text' must be a string")
                prev = texts.get(iid)
                if prev is not None and prev[0] != obj["text"]:
                    raise ParseError(
                        f"{path}:{lineno}: text for instance {iid!r} conflicts with line {prev[1]}"
                    )
                texts.setdefault(iid, (obj["text"], lineno))
            elif not has_time:
                raise ParseError(f"{path}:{lineno}: instance line for {iid!r} missing 'text'")
            if "difficulty_level" in obj and obj["difficulty_level"] is not None:
                set_field(iid, "difficulty_level", obj["difficulty_level"], lineno)
            if "gold_label" in obj and obj["gold_label"] is not None:
                if not isinstance(obj["gold_label"], str):
                    raise ParseError(f"{path}:{lineno}: 'gold_label' must be a string")
                set_field(iid, "gold_label", obj["gold_label"], lineno)
            if "choice_sets" in obj and obj["choice_sets"] is not None:
                raw = obj["choice_sets"]
                if not isinstance(raw, dict):
                    raise ParseError(f"{path}:{lineno}: 'choice_sets' must be an object")
                try:
                    sets = {int(level): tuple(choices) for level, choices in raw.items()}
                except (TypeError, ValueError):
                    raise ParseError(
                        f"{path}:{lineno}: choice_sets keys must be integer difficulty levels"
                    ) from None
                set_field(iid, "choice_sets", sets, lineno)
            if has_time:
                t = obj["time_seconds"]
                if isinstance(t, bool) or not isinstance(t, (int, float)):
                    raise ParseError(f"{path}:{lineno}: 'time_seconds' must be a number")
                annotator = obj.get("annotator", "unknown")
                if not isinstance(annotator, str) or not annotator:
                    raise ParseError(f"{path}:{lineno}: 'annotator' must be a non-empty string")
                label = obj.get("label", "")
                if not isinstance(label, str):
                    raise ParseError(f"{path}:{lineno}: 'label' must be a string")
                records.append((lineno, iid, annotator, label, t))
            elif "label" in obj and obj["label"] is not None:
                # without a time this line describes the instance itself,
                # so the label is its gold label
                if not isinstance(obj["label"], str):
                    raise ParseError(f"{path}:{lineno}: 'label' must be a string")
                set_field(iid, "gold_label", obj["label"], lineno)

    instances = []
    for iid in order:
        if iid not in texts:
            raise DanglingReference(
                f"{path}: records reference instance {iid!r} but no line supplies its text"
            )
        fields = meta.get(iid, {})
        try:
            instances.append(
                Instance(
                    id=iid,
                    text=texts[iid][0],
                    difficulty_level=fields.get("difficulty_level"),
                    gold_label=fields.get("gold_label"),
                    choice_sets=fields.get("choice_sets"),
                )
            )
        except InvalidInstance as exc:
            raise ParseError(f"{path}:{first_line[iid]}: {exc}") from None

    timed = []
    for lineno, iid, annotator, label, t in records:
        try:
            timed.append(TimedRecord(iid, annotator, label, t))
        except NonPositiveTime as exc:
            raise NonPositiveTime(f"{path}:{lineno}: {exc}") from None
    return instances, timed


_TSV_HEADER = ["id", "annotator", "time_seconds", "label", "text"]


def _parse_tsv(path: str):
    instances: list[Instance] = []
    texts: dict[str, tuple[str, int]] = {}
    records: list[TimedRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if [c.strip() for c in header.rstrip("\n").split("\t")] != _TSV_HEADER:
            expected = "\t".join(_TSV_HEADER)
            raise ParseError(f"{path}:1: expected header {expected!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t", 4)
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 tab-separated columns")
            iid, annotator, time_text, label, text = parts
            if not iid:
                raise ParseError(f"{path}:{lineno}: empty id")
            try:
                t = float(time_text)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: time_seconds {time_text!r} is not a number") from None
            prev = texts.get(iid)
            if prev is None:
                texts[iid] = (text, lineno)
                instances.append(Instance(id=iid, text=text))
            elif prev[0] != text:
                raise ParseError(
                    f"{path}:{lineno}: text for instance {iid!r} conflicts with line {prev[1]}"
                )
            try:
                records.append(TimedRecord(iid, annotator, label, t))
            except NonPositiveTime as exc:
                raise NonPositiveTime(f"{path}:{lineno}: {exc}") from None
    return instances, records


def load_timed_dataset(
    path: str, format: str = "jsonl", annotator_filter: str | None = None
) -> Dataset:
    """Load a dataset file; optionally keep only one annotator's records."""
    if format == "jsonl":
        instances, records = _parse_jsonl(path)
    elif format == "tsv":
        instances, records = _parse_tsv(path)
    else:
        raise DataError(f"unknown dataset format {format!r} (expected 'jsonl' or 'tsv')")
    if annotator_filter is not None:
        records = [r for r in records if r.annotator_id == annotator_filter]
    name = os.path.splitext(os.path.basename(path))[0]
    return Dataset(instances=tuple(instances), records=tuple(records), name=name)


def save_timed_dataset(dataset: Dataset, path: str) -> None:
    """Serialize a dataset to jsonl so that loading it back is an identity."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            row: dict = {"id": inst.id, "text": inst.text}
            if inst.gold_label is not None:
                row["label"] = inst.gold_label
            if inst.difficulty_level is not None:
                row["difficulty_level"] = inst.difficulty_level
            if inst.choice_sets is not None:
                row["choice_sets"] = {
                    str(level): list(choices) for level, choices in sorted(inst.choice_sets.items())
                }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        for rec in dataset.records:
            row = {
                "id": rec.instance_id,
                "annotator": rec.annotator_id,
                "label": rec.label,
                "time_seconds": rec.time_seconds,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def instance_to_json(inst: Instance) -> dict:
    row: dict = {"id": inst.id, "text": inst.text}
    if inst.difficulty_level is not None:
        row["difficulty_level"] = inst.difficulty_level
    if inst.gold_label is not None:
        row["gold_label"] = inst.gold_label
    if inst.choice_sets is not None:
        row["choice_sets"] = {
            str(level): list(choices) for level, choices in sorted(inst.choice_sets.items())
        }
    return row


def instance_from_json(obj: dict) -> Instance:
    if not isinstance(obj, dict):
        raise InvalidInstance("instance must be a json object")
    choice_sets = None
    if obj.get("choice_sets") is not None:
        raw = obj["choice_sets"]
        if not isinstance(raw, dict):
            raise InvalidInstance("choice_sets must be an object")
        try:
            choice_sets = {int(level): tuple(choices) for level, choices in raw.items()}
        except (TypeError, ValueError):
            raise InvalidInstance("choice_sets keys must be integer difficulty levels") from None
    return Instance(
        id=obj.get("id"),
        text=obj.get("text"),
        difficulty_level=obj.get("difficulty_level"),
        gold_label=obj.get("gold_label"),
        choice_sets=choice_sets,
    )


def make_splits(dataset: Dataset, fractions, seed: int) -> SplitAssignment:
    """Partition instance ids into train/test or train/dev/test by seeded shuffle."""
    fractions = list(fractions)
    if len(fractions) not in (2, 3):
        raise BadFractions(f"need 2 or 3 fractions, got {len(fractions)}")
    for f in fractions:
        if isinstance(f, bool) or not isinstance(f, (int, float)) or not (f > 0):
            raise BadFractions(f"fractions must be positive numbers, got {f!r}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must sum to 1, got {sum(fractions)!r}")
    ids = dataset.ids()
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    sizes = [int(math.floor(n * f)) for f in fractions]
    sizes[-1] += n - sum(sizes)
    parts: list[list[str]] = []
    start = 0
    for size in sizes:
        parts.append(ids[start : start + size])
        start += size
    if len(parts) == 2:
        train, test = parts
        dev: list[str] = []
    else:
        train, dev, test = parts
    return SplitAssignment(train=frozenset(train), dev=frozenset(dev), test=frozenset(test), seed=seed)


def save_splits(split: SplitAssignment, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in ("train", "dev", "test"):
            for iid in sorted(split.part(name)):
                fh.write(json.dumps({"split": name, "id": iid}) + "\n")


def load_splits(path: str) -> SplitAssignment:
    """Read a split file: jsonl lines {"split": "train"|"dev"|"test", "id"}."""
    parts: dict[str, list[str]] = {"train": [], "dev": [], "test": []}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid json ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a json object")
            name = obj.get("split")
            iid = obj.get("id")
            if name not in parts:
                raise ParseError(f"{path}:{lineno}: unknown split name {name!r}")
            if not isinstance(iid, str) or not iid:
                raise ParseError(f"{path}:{lineno}: missing or empty 'id'")
            if iid in seen:
                raise ParseError(f"{path}:{lineno}: id {iid!r} assigned to more than one split")
            seen.add(iid)
            parts[name].append(iid)
    return SplitAssignment(
        train=frozenset(parts["train"]),
        dev=frozenset(parts["dev"]),
        test=frozenset(parts["test"]),
    )
