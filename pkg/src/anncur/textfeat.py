"""Deterministic text statistics and feature plumbing.

Covers the cheap, training-free difficulty signals (token count and a
readability grade) plus two carriers for precomputed model outputs:
dense feature vectors (e.g. sentence embeddings) and scalar scores
(e.g. masked language model pseudo-loss).  Embeddings and neural scores
are never computed here; they arrive as jsonl files produced offline.

Feature vectors are plain 1-D float numpy arrays; a FeatureTable groups
them by instance id and enforces a single dimensionality.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .corpus import Instance
from .errors import DataError, DimMismatch, ParseError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_VOWELS = frozenset("aeiouy")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EmptyToken(DataError):
    pass


class MissingScore(DataError):
    pass


class MissingFeatures(DataError):
    pass


class DegenerateText(DataError):
    pass


def tokenize(text: str) -> list[str]:
    """Maximal runs of Unicode letters/digits, in order of appearance."""
    return _TOKEN_RE.findall(text)


def split_sentences(text: str) -> int:
    """Count sentences: segments ending in '.', '!' or '?' at a whitespace
    boundary or end of text; a trailing unterminated segment counts when it
    contains any non-whitespace character."""
    count = 0
    last_end = 0
    for i, ch in enumerate(text):
        if ch in ".!?" and (i + 1 == len(text) or text[i + 1].isspace()):
            count += 1
            last_end = i + 1
    if text[last_end:].strip():
        count += 1
    return count


def count_syllables(word: str) -> int:
    """Rule-based syllable estimate for a single token, never below 1.

    Counts maximal vowel groups (a, e, i, o, u, y), then drops one for a
    terminal silent 'e' unless the word ends in 'le' after a consonant.
    """
    if not word:
        raise EmptyToken("count_syllables needs a non-empty token")
    lower = word.lower()
    groups = 0
    in_group = False
    for ch in lower:
        if ch in _VOWELS:
            if not in_group:
                groups += 1
            in_group = True
        else:
            in_group = False
    if groups > 1 and lower.endswith("e"):
        le_after_consonant = (
            len(lower) >= 3
            and lower.endswith("le")
            and lower[-3] not in _VOWELS
        )
        if not le_after_consonant:
            groups -= 1
    return max(groups, 1)


class ScoreTable:
    """Instance id -> externally computed scalar score."""

    def __init__(self, scores: dict[str, float] | None = None):
        self._scores: dict[str, float] = {}
        for key, value in (scores or {}).items():
            value = float(value)
            if not math.isfinite(value):
                raise DataError(f"score for {key!r} is not finite")
            self._scores[key] = value

    def __len__(self) -> int:
        return len(self._scores)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._scores

    def score(self, instance_id: str) -> float:
        try:
            return self._scores[instance_id]
        except KeyError:
            raise MissingScore(f"no score for instance {instance_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._scores)


class FeatureTable:
    """Instance id -> dense feature vector, all rows sharing one dim."""

    def __init__(self, rows: dict[str, np.ndarray] | None = None):
        self._rows: dict[str, np.ndarray] = {}
        self._dim: int | None = None
        for key, vec in (rows or {}).items():
            self.add(key, vec)

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise MissingFeatures("feature table is empty; dim undefined")
        return self._dim

    def add(self, instance_id: str, vector) -> None:
        arr = np.asarray(vector, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise DataError(f"feature vector for {instance_id!r} must be 1-D, non-empty")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"feature vector for {instance_id!r} has non-finite values")
        if self._dim is None:
            self._dim = int(arr.size)
        elif arr.size != self._dim:
            raise DimMismatch(
                f"feature vector for {instance_id!r} has dim {arr.size}, expected {self._dim}"
            )
        arr.flags.writeable = False
        self._rows[instance_id] = arr

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._rows

    def vector(self, instance_id: str) -> np.ndarray:
        try:
            return self._rows[instance_id]
        except KeyError:
            raise MissingFeatures(f"no features for instance {instance_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._rows)

    def matrix(self, instance_ids: list[str]) -> np.ndarray:
        """Stack feature rows for the given ids into an (n, dim) array."""
        return np.stack([self.vector(i) for i in instance_ids]) if instance_ids else np.zeros((0, self.dim))


def heuristic_score(kind: str, instance: Instance, scores: ScoreTable | None = None) -> float:
    """Training-free difficulty score of one instance.

    kind 'sen' is the token count, 'fk' the Flesch-Kincaid grade level,
    'external' a lookup in a supplied score table.
    """
    if kind == "sen":
        return float(len(tokenize(instance.text)))
    if kind == "fk":
        tokens = tokenize(instance.text)
        sentences = split_sentences(instance.text)
        if not tokens or sentences < 1:
            raise DegenerateText(
                f"instance {instance.id!r} has no tokens or sentences; grade level undefined"
            )
        syllables = sum(count_syllables(t) for t in tokens)
        return 0.39 * (len(tokens) / sentences) + 11.8 * (syllables / len(tokens)) - 15.59
    if kind == "external":
        if scores is None:
            raise MissingScore("kind 'external' needs a score table")
        return scores.score(instance.id)
    raise DataError(f"unknown heuristic kind {kind!r}")


@dataclass(frozen=True)
class Heuristic:
    """A named heuristic bound to its score table, usable as a scorer."""

    kind: str
    scores: ScoreTable | None = None

    def score(self, instance: Instance) -> float:
        return heuristic_score(self.kind, instance, self.scores)


def _fnv1a64(data: bytes, seed: int) -> int:
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hashed_bow(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Hashed bag-of-words counts: token -> bucket by seeded 64-bit FNV-1a."""
    if dim < 1:
        raise DataError(f"hashed_bow needs dim >= 1, got {dim}")
    vec = np.zeros(dim, dtype=float)
    for token in tokenize(text):
        bucket = _fnv1a64(token.lower().encode("utf-8"), seed) % dim
        vec[bucket] += 1.0
    return vec


def token_count_table(instances) -> FeatureTable:
    """One-dimensional feature table: the token count of each instance."""
    table = FeatureTable()
    for inst in instances:
        table.add(inst.id, [float(len(tokenize(inst.text)))])
    return table


def load_feature_file(path: str) -> FeatureTable:
    """Read a jsonl feature file ({"id", "vector"}) into a FeatureTable."""
    table = FeatureTable()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid json ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
                raise ParseError(f"{path}:{lineno}: expected object with 'id' and 'vector'")
            if not isinstance(obj["vector"], list):
                raise ParseError(f"{path}:{lineno}: 'vector' must be a list of numbers")
            try:
                table.add(str(obj["id"]), obj["vector"])
            except DimMismatch as exc:
                raise DimMismatch(f"{path}:{lineno}: {exc}") from None
            except DataError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return table


def save_feature_file(table: FeatureTable, path: str) -> None:
    """Write a FeatureTable as jsonl rows {"id", "vector"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for iid in table.ids():
            fh.write(json.dumps({"id": iid, "vector": table.vector(iid).tolist()}) + "\n")


def load_score_file(path: str) -> ScoreTable:
    """Read a jsonl score file ({"id", "score"}) into a ScoreTable."""
    raw: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid json ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "score" not in obj:
                raise ParseError(f"{path}:{lineno}: expected object with 'id' and 'score'")
            value = obj["score"]
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ParseError(f"{path}:{lineno}: 'score' must be a finite number")
            raw[str(obj["id"])] = float(value)
    return ScoreTable(raw)
