"""Text features: tokenizing, readability, hashing, feature tables."""

import random

import numpy as np
import pytest

from anncur import textfeat
from anncur.corpus import Instance
from anncur.errors import DataError, DimMismatch, ParseError


# -- tokenize / sentences / syllables -----------------------------------------


def test_tokenize_strips_punctuation():
    assert textfeat.tokenize("The cat sat.") == ["The", "cat", "sat"]
    assert textfeat.tokenize("don't stop-me now!") == ["don", "t", "stop", "me", "now"]


def test_tokenize_empty():
    assert textfeat.tokenize("") == []
    assert textfeat.tokenize("...") == []


def test_split_sentences_counts():
    assert textfeat.split_sentences("One. Two! Three?") == 3
    assert textfeat.split_sentences("No terminator here") == 1
    assert textfeat.split_sentences("Trailing dot.") == 1


def test_count_syllables_anchors():
    assert textfeat.count_syllables("cake") == 1
    assert textfeat.count_syllables("syllable") == 3
    assert textfeat.count_syllables("table") == 2
    assert textfeat.count_syllables("the") == 1
    assert textfeat.count_syllables("annotation") == 4


def test_count_syllables_floor_is_one():
    assert textfeat.count_syllables("hmm") == 1


def test_count_syllables_rejects_empty():
    with pytest.raises(textfeat.EmptyToken):
        textfeat.count_syllables("")


# -- heuristics ---------------------------------------------------------------


def test_fk_hand_anchor():
    inst = Instance(id="x", text="The cat sat.")
    assert textfeat.heuristic_score("fk", inst) == pytest.approx(-2.62, abs=0.01)


def test_sen_is_token_count():
    inst = Instance(id="x", text="a b c, d.")
    assert textfeat.heuristic_score("sen", inst) == 4.0


def test_fk_degenerate_text():
    with pytest.raises(textfeat.DegenerateText):
        textfeat.heuristic_score("fk", Instance(id="x", text="!!!"))


def test_external_requires_scores():
    inst = Instance(id="x", text="hello")
    table = textfeat.ScoreTable({"x": 1.5})
    assert textfeat.heuristic_score("external", inst, table) == 1.5
    with pytest.raises(textfeat.MissingScore):
        textfeat.heuristic_score("external", inst, textfeat.ScoreTable({"y": 1.0}))


def test_heuristic_wrapper_scores():
    h = textfeat.Heuristic("sen")
    assert h.score(Instance(id="i", text="one two three")) == 3.0


# -- hashed bag of words --------------------------------------------------------


def test_hashed_bow_mass_equals_token_count():
    text = "the cat sat on the mat"
    vec = textfeat.hashed_bow(text, dim=32)
    assert vec.shape == (32,)
    assert vec.sum() == 6


def test_hashed_bow_is_deterministic_and_seed_sensitive():
    a = textfeat.hashed_bow("alpha beta gamma", dim=64, seed=0)
    b = textfeat.hashed_bow("alpha beta gamma", dim=64, seed=0)
    c = textfeat.hashed_bow("alpha beta gamma", dim=64, seed=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_hashed_bow_case_insensitive():
    assert np.array_equal(
        textfeat.hashed_bow("Word", dim=16), textfeat.hashed_bow("word", dim=16)
    )


def test_hashed_bow_collisions_spread():
    """Distinct tokens should spread across buckets, not pile into one."""
    rng = random.Random(5)
    words = " ".join(f"tok{rng.randint(0, 10 ** 9)}" for _ in range(200))
    vec = textfeat.hashed_bow(words, dim=128)
    assert (vec > 0).sum() > 64


def test_hashed_bow_rejects_bad_dim():
    with pytest.raises(DataError):
        textfeat.hashed_bow("x", dim=0)


# -- score and feature tables ------------------------------------------------


def test_score_table_roundtrip_and_missing():
    table = textfeat.ScoreTable({"a": 1.0, "b": 2.0})
    assert table.score("a") == 1.0
    assert "b" in table
    assert len(table) == 2
    with pytest.raises(textfeat.MissingScore):
        table.score("zzz")


def test_score_table_rejects_non_finite():
    with pytest.raises(Exception):
        textfeat.ScoreTable({"a": float("nan")})


def test_feature_table_dim_consistency():
    table = textfeat.FeatureTable()
    table.add("a", [1.0, 2.0])
    with pytest.raises(DimMismatch):
        table.add("b", [1.0])
    assert table.dim == 2


def test_feature_table_vectors_are_read_only():
    table = textfeat.FeatureTable({"a": [1.0, 2.0]})
    vec = table.vector("a")
    with pytest.raises(ValueError):
        vec[0] = 9.0


def test_feature_table_matrix_orders_rows():
    table = textfeat.FeatureTable({"a": [1.0], "b": [2.0]})
    mat = table.matrix(["b", "a"])
    assert mat.tolist() == [[2.0], [1.0]]


def test_feature_table_missing_lookup():
    table = textfeat.FeatureTable({"a": [1.0]})
    with pytest.raises(textfeat.MissingFeatures):
        table.vector("b")
    with pytest.raises(textfeat.MissingFeatures):
        textfeat.FeatureTable().dim


def test_token_count_table():
    insts = [Instance(id="a", text="one two"), Instance(id="b", text="three")]
    table = textfeat.token_count_table(insts)
    assert table.vector("a").tolist() == [2.0]
    assert table.vector("b").tolist() == [1.0]


# -- file round trips ------------------------------------------------------------


def test_feature_file_roundtrip(tmp_path):
    table = textfeat.FeatureTable({"a": [1.0, 2.5], "b": [3.0, -4.0]})
    path = tmp_path / "f.jsonl"
    textfeat.save_feature_file(table, str(path))
    loaded = textfeat.load_feature_file(str(path))
    assert loaded.ids() == table.ids()
    assert np.array_equal(loaded.vector("b"), table.vector("b"))


def test_feature_file_reports_line_numbers(tmp_path):
    path = tmp_path / "f.jsonl"
    path.write_text('{"id": "a", "vector": [1.0]}\n{"id": "b", "vector": [1.0, 2.0]}\n')
    with pytest.raises(DimMismatch, match=r"f\.jsonl:2"):
        textfeat.load_feature_file(str(path))


def test_feature_file_bad_json(tmp_path):
    path = tmp_path / "f.jsonl"
    path.write_text('{"id": "a", "vector": [1.0]}\nnot json\n')
    with pytest.raises(ParseError, match=r"f\.jsonl:2"):
        textfeat.load_feature_file(str(path))


def test_score_file_load(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text('{"id": "a", "score": 1.25}\n\n{"id": "b", "score": 2}\n')
    table = textfeat.load_score_file(str(path))
    assert table.score("a") == 1.25
    assert table.score("b") == 2.0


def test_score_file_rejects_non_numeric(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text('{"id": "a", "score": "high"}\n')
    with pytest.raises(ParseError, match=r"s\.jsonl:1"):
        textfeat.load_score_file(str(path))
