"""Dataset loading, validation, persistence and split assignment."""

import json

import pytest

from anncur import corpus
from anncur.errors import ParseError

from conftest import choice_instance


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


# -- domain types ---------------------------------------------------------------


def test_instance_choice_sets_need_gold_containment():
    with pytest.raises(corpus.InvalidInstance):
        corpus.Instance(
            id="a",
            text="t",
            difficulty_level=1,
            gold_label="gold",
            choice_sets={1: ["w1", "w2", "w3", "w4", "w5", "w6"]},
        )


def test_instance_choice_sets_need_six_distinct():
    with pytest.raises(corpus.InvalidInstance):
        corpus.Instance(
            id="a",
            text="t",
            difficulty_level=1,
            gold_label="g",
            choice_sets={1: ["g", "g", "a", "b", "c", "d"]},
        )


def test_instance_difficulty_range():
    with pytest.raises(corpus.InvalidInstance):
        corpus.Instance(id="a", text="t", difficulty_level=6)


def test_valid_choice_instance():
    inst = choice_instance("a", 3, "x")
    assert inst.gold_label in inst.choice_sets[3]
    assert len(inst.choice_sets[3]) == corpus.CHOICES_PER_SET


def test_timed_record_positive_time():
    with pytest.raises(corpus.NonPositiveTime):
        corpus.TimedRecord(instance_id="a", annotator_id="u", label="l", time_seconds=0.0)
    with pytest.raises(corpus.NonPositiveTime):
        corpus.TimedRecord(instance_id="a", annotator_id="u", label="l", time_seconds=float("nan"))


def test_dataset_rejects_duplicate_instance_ids():
    inst = corpus.Instance(id="a", text="t")
    with pytest.raises(corpus.InvalidInstance):
        corpus.Dataset(instances=(inst, inst), records=())


def test_dataset_rejects_dangling_record():
    inst = corpus.Instance(id="a", text="t")
    rec = corpus.TimedRecord(instance_id="zzz", annotator_id="u", label="l", time_seconds=1.0)
    with pytest.raises(corpus.DanglingReference):
        corpus.Dataset(instances=(inst,), records=(rec,))


def test_dataset_rejects_duplicate_annotation():
    inst = corpus.Instance(id="a", text="t")
    rec = corpus.TimedRecord(instance_id="a", annotator_id="u", label="l", time_seconds=1.0)
    with pytest.raises(corpus.DuplicateRecord):
        corpus.Dataset(instances=(inst,), records=(rec, rec))


def test_dataset_lookup_helpers():
    insts = (corpus.Instance(id="a", text="t"), corpus.Instance(id="b", text="u"))
    recs = (
        corpus.TimedRecord(instance_id="a", annotator_id="u2", label="l", time_seconds=1.0),
        corpus.TimedRecord(instance_id="b", annotator_id="u1", label="l", time_seconds=2.0),
    )
    ds = corpus.Dataset(instances=insts, records=recs)
    assert "a" in ds and "zzz" not in ds
    assert ds.instance("b").text == "u"
    assert ds.ids() == ["a", "b"]
    assert ds.annotators() == ["u1", "u2"]


# -- jsonl loading -----------------------------------------------------------------


def test_load_jsonl_merges_instance_and_record_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(
        path,
        [
            {"id": "a", "text": "first text"},
            {"id": "a", "annotator": "u1", "time_seconds": 2.5, "label": "x"},
            {"id": "b", "text": "second", "annotator": "u1", "time_seconds": 1.0, "label": "y"},
        ],
    )
    ds = corpus.load_timed_dataset(str(path))
    assert len(ds.instances) == 2
    assert len(ds.records) == 2
    assert ds.instance("a").text == "first text"
    times = {r.instance_id: r.time_seconds for r in ds.records}
    assert times == {"a": 2.5, "b": 1.0}


def test_load_jsonl_conflicting_text(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"id": "a", "text": "one"}, {"id": "a", "text": "two"}])
    with pytest.raises(ParseError, match=r"d\.jsonl:2"):
        corpus.load_timed_dataset(str(path))


def test_load_jsonl_record_without_text_anywhere(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"id": "a", "annotator": "u", "time_seconds": 1.0, "label": "x"}])
    with pytest.raises(corpus.DanglingReference):
        corpus.load_timed_dataset(str(path))


def test_load_jsonl_bad_time_keeps_type_and_location(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"id": "a", "text": "t", "annotator": "u", "time_seconds": -3, "label": "x"}])
    with pytest.raises(corpus.NonPositiveTime, match=r"d\.jsonl:1"):
        corpus.load_timed_dataset(str(path))


def test_load_jsonl_default_annotator(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"id": "a", "text": "t", "time_seconds": 1.0, "label": "x"}])
    ds = corpus.load_timed_dataset(str(path))
    assert ds.records[0].annotator_id == "unknown"


def test_load_jsonl_annotator_filter(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(
        path,
        [
            {"id": "a", "text": "t"},
            {"id": "a", "annotator": "u1", "time_seconds": 1.0, "label": "x"},
            {"id": "a", "annotator": "u2", "time_seconds": 2.0, "label": "x"},
        ],
    )
    ds = corpus.load_timed_dataset(str(path), annotator_filter="u2")
    assert [r.annotator_id for r in ds.records] == ["u2"]


def test_load_jsonl_difficulty_and_choices(tmp_path):
    path = tmp_path / "d.jsonl"
    inst = choice_instance("a", 2, "q")
    write_jsonl(path, [corpus.instance_to_json(inst)])
    ds = corpus.load_timed_dataset(str(path))
    assert ds.instance("a").difficulty_level == 2
    assert ds.instance("a").choice_sets == inst.choice_sets


# -- tsv loading ------------------------------------------------------------------


def test_load_tsv(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text(
        "id\tannotator\ttime_seconds\tlabel\ttext\n"
        "a\tu1\t2.5\tx\tfirst text\n"
        "a\tu2\t3.5\ty\tfirst text\n"
    )
    ds = corpus.load_timed_dataset(str(path), format="tsv")
    assert len(ds.instances) == 1
    assert len(ds.records) == 2


def test_load_tsv_missing_header(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("a\tu1\t2.5\tx\tno header line\n")
    with pytest.raises(ParseError, match="header"):
        corpus.load_timed_dataset(str(path), format="tsv")


def test_load_unknown_format(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("")
    with pytest.raises(Exception, match="format"):
        corpus.load_timed_dataset(str(path), format="csv")


# -- save / load identity ------------------------------------------------------------


def test_save_load_identity(tmp_path):
    insts = (
        choice_instance("a", 1, "q"),
        corpus.Instance(id="b", text="plain one"),
    )
    recs = (
        corpus.TimedRecord(instance_id="a", annotator_id="u1", label="x", time_seconds=2.0),
        corpus.TimedRecord(instance_id="b", annotator_id="u2", label="y", time_seconds=3.5),
    )
    ds = corpus.Dataset(instances=insts, records=recs, name="d")
    path = tmp_path / "d.jsonl"
    corpus.save_timed_dataset(ds, str(path))
    loaded = corpus.load_timed_dataset(str(path))
    assert loaded.instances == ds.instances
    assert loaded.records == ds.records


def test_instance_json_roundtrip():
    inst = choice_instance("z", 4, "m")
    again = corpus.instance_from_json(json.loads(json.dumps(corpus.instance_to_json(inst))))
    assert again == inst


# -- splits ----------------------------------------------------------------------


def small_dataset(n):
    insts = tuple(corpus.Instance(id=f"i{k}", text=f"text {k}") for k in range(n))
    return corpus.Dataset(instances=insts, records=())


def test_make_splits_sizes_anchor():
    split = corpus.make_splits(small_dataset(10), (0.7, 0.15, 0.15), seed=0)
    assert (len(split.train), len(split.dev), len(split.test)) == (7, 1, 2)


def test_make_splits_two_way():
    split = corpus.make_splits(small_dataset(10), (0.8, 0.2), seed=0)
    assert (len(split.train), len(split.dev), len(split.test)) == (8, 0, 2)


def test_make_splits_partition_properties():
    ds = small_dataset(37)
    split = corpus.make_splits(ds, (0.7, 0.15, 0.15), seed=3)
    union = split.train | split.dev | split.test
    assert union == set(ds.ids())
    assert len(split.train) + len(split.dev) + len(split.test) == 37


def test_make_splits_deterministic_and_seed_sensitive():
    ds = small_dataset(30)
    a = corpus.make_splits(ds, (0.8, 0.2), seed=1)
    b = corpus.make_splits(ds, (0.8, 0.2), seed=1)
    c = corpus.make_splits(ds, (0.8, 0.2), seed=2)
    assert a == b
    assert a != c


def test_make_splits_bad_fractions():
    ds = small_dataset(5)
    with pytest.raises(corpus.BadFractions):
        corpus.make_splits(ds, (0.5, 0.4), seed=0)
    with pytest.raises(corpus.BadFractions):
        corpus.make_splits(ds, (1.0,), seed=0)
    with pytest.raises(corpus.BadFractions):
        corpus.make_splits(ds, (0.5, 0.3, 0.1, 0.1), seed=0)
    with pytest.raises(corpus.BadFractions):
        corpus.make_splits(ds, (-0.2, 1.2), seed=0)


def test_split_part_lookup():
    split = corpus.make_splits(small_dataset(10), (0.8, 0.2), seed=0)
    assert split.part("train") == split.train
    with pytest.raises(corpus.UnknownSplitName):
        split.part("validation")


def test_splits_file_roundtrip(tmp_path):
    split = corpus.make_splits(small_dataset(12), (0.7, 0.15, 0.15), seed=5)
    path = tmp_path / "s.jsonl"
    corpus.save_splits(split, str(path))
    loaded = corpus.load_splits(str(path))
    assert loaded == split


def test_splits_file_rejects_duplicates(tmp_path):
    path = tmp_path / "s.jsonl"
    write_jsonl(path, [{"split": "train", "id": "a"}, {"split": "test", "id": "a"}])
    with pytest.raises(ParseError):
        corpus.load_splits(str(path))


def test_splits_file_rejects_unknown_split(tmp_path):
    path = tmp_path / "s.jsonl"
    write_jsonl(path, [{"split": "holdout", "id": "a"}])
    with pytest.raises(ParseError):
        corpus.load_splits(str(path))
