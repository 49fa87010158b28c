"""Offline evaluation with simulated annotators.

A simulated annotator replays recorded gold annotation times: ask it for
an instance and it answers with the time the human took.  On top of that
sit three procedures:

* run_static: train once on the train split, score the held-out split
  (the upper bound an interactive run approaches);
* run_interactive: the select/observe/retrain loop, producing a learning
  curve of held-out rank correlation and error per iteration;
* run_loo_users: leave-one-annotator-out transfer, fit on everyone else
  and evaluate on the held-out person.

gen_synthetic builds datasets whose time is a known linear function of
token count (plus optional Gaussian noise), so recovery is testable.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

from . import estimators
from .corpus import Dataset, Instance, SplitAssignment, TimedRecord
from .curriculum import Strategy, adaptive_next, adaptive_observe, new_adaptive_state
from .errors import DataError
from .estimators import Metrics, RegressorSpec, regression_metrics
from .stats import BadParams, EmptyInput
from .textfeat import FeatureTable, Heuristic


class TooFewUsers(DataError):
    pass


class MissingGoldTime(DataError):
    pass


class AmbiguousGoldTime(DataError):
    pass


class SimulatedAnnotator:
    """Lookup of gold annotation times, one per instance."""

    def __init__(self, times: dict[str, float]):
        self._times = dict(times)

    @classmethod
    def from_dataset(cls, dataset: Dataset, annotator: str | None = None) -> "SimulatedAnnotator":
        times: dict[str, float] = {}
        for rec in dataset.records:
            if annotator is not None and rec.annotator_id != annotator:
                continue
            if rec.instance_id in times:
                raise AmbiguousGoldTime(
                    f"instance {rec.instance_id!r} has several records; "
                    "filter to one annotator first"
                )
            times[rec.instance_id] = rec.time_seconds
        return cls(times)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._times

    def time(self, instance_id: str) -> float:
        try:
            return self._times[instance_id]
        except KeyError:
            raise MissingGoldTime(f"no gold time for instance {instance_id!r}") from None


@dataclass(frozen=True)
class CurvePoint:
    step: int
    instance_id: str
    time_seconds: float
    rho: float | None
    mae: float | None


@dataclass(frozen=True)
class LearningCurve:
    points: tuple[CurvePoint, ...]
    seed: int
    spec: RegressorSpec

    def final_rho(self) -> float | None:
        for point in reversed(self.points):
            if point.rho is not None:
                return point.rho
        return None

    def selected_ids(self) -> list[str]:
        return [p.instance_id for p in self.points]


def _split_records(dataset: Dataset, split: SplitAssignment, part: str):
    ids = split.part(part)
    return [r for r in dataset.records if r.instance_id in ids]


def run_static(dataset: Dataset, split: SplitAssignment, estimator, features: FeatureTable | None = None, eval_on: str = "test") -> Metrics:
    """Fit once on the train split (regressors) or score directly
    (heuristics); return metrics on the held-out split."""
    test_records = _split_records(dataset, split, eval_on)
    if not test_records:
        raise EmptyInput(f"no timed records in the {eval_on!r} split")
    y_true = [r.time_seconds for r in test_records]
    if isinstance(estimator, RegressorSpec):
        if features is None:
            raise DataError("a regressor needs a feature table")
        train_records = _split_records(dataset, split, "train")
        if not train_records:
            raise estimators.EmptyTrainingSet("no timed records in the 'train' split")
        X_train = features.matrix([r.instance_id for r in train_records])
        y_train = [r.time_seconds for r in train_records]
        model = estimators.fit(estimator, X_train, y_train)
        preds = estimators.predict_many(model, features.matrix([r.instance_id for r in test_records]))
        return regression_metrics(y_true, preds)
    if isinstance(estimator, Heuristic):
        preds = [estimator.score(dataset.instance(r.instance_id)) for r in test_records]
        return regression_metrics(y_true, preds)
    raise DataError(f"estimator must be a Heuristic or RegressorSpec, got {type(estimator).__name__}")


def run_interactive(
    dataset: Dataset,
    split: SplitAssignment,
    spec: RegressorSpec,
    features: FeatureTable,
    seed: int = 0,
    retrain_every: int = 1,
    eval_every: int = 1,
    eval_on: str = "test",
    max_steps: int | None = None,
) -> LearningCurve:
    """Select/observe/retrain over the train pool, scoring the held-out
    split as the run progresses.

    With the default retrain_every=1 every iteration carries metrics; a
    larger stride (or eval_every > 1) leaves rho/mae as None on skipped
    iterations.  max_steps truncates the loop, otherwise it runs to pool
    exhaustion.
    """
    if eval_every < 1:
        raise BadParams(f"eval_every must be >= 1, got {eval_every}")
    if max_steps is not None and max_steps < 1:
        raise BadParams(f"max_steps must be >= 1, got {max_steps}")
    annotator = SimulatedAnnotator.from_dataset(dataset)
    pool = [iid for iid in dataset.ids() if iid in split.train]
    for iid in pool:
        if iid not in annotator:
            raise MissingGoldTime(f"train instance {iid!r} has no gold time")
    test_records = _split_records(dataset, split, eval_on)
    if not test_records:
        raise EmptyInput(f"no timed records in the {eval_on!r} split")
    X_test = features.matrix([r.instance_id for r in test_records])
    y_true = [r.time_seconds for r in test_records]

    strategy = Strategy(
        kind="adaptive", seed=seed, regressor=spec, features=features, retrain_every=retrain_every
    )
    state = new_adaptive_state(strategy, pool)
    steps = len(pool) if max_steps is None else min(max_steps, len(pool))
    points = []
    for step in range(steps):
        iid = adaptive_next(state)
        observed = annotator.time(iid)
        adaptive_observe(state, iid, observed)
        rho = mae = None
        due = (step + 1) % eval_every == 0 or step == steps - 1
        if due and state.model is not None:
            preds = estimators.predict_many(state.model, X_test)
            metrics = regression_metrics(y_true, preds)
            rho, mae = metrics.rho, metrics.mae
        points.append(CurvePoint(step=step, instance_id=iid, time_seconds=observed, rho=rho, mae=mae))
    return LearningCurve(points=tuple(points), seed=seed, spec=spec)


@dataclass(frozen=True)
class LooResult:
    per_user: dict[str, Metrics]
    mean: Metrics


def _mean_or_none(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def run_loo_users(dataset: Dataset, spec: RegressorSpec, features: FeatureTable) -> LooResult:
    """Leave-one-annotator-out: fit on all other annotators, evaluate on
    the held-out one; per-user metrics plus their mean."""
    by_user: dict[str, list[TimedRecord]] = {}
    for rec in dataset.records:
        by_user.setdefault(rec.annotator_id, []).append(rec)
    if len(by_user) < 2:
        raise TooFewUsers(f"need at least 2 annotators, got {len(by_user)}")
    per_user: dict[str, Metrics] = {}
    for user in by_user:
        train = [r for u, recs in by_user.items() if u != user for r in recs]
        test = by_user[user]
        X_train = features.matrix([r.instance_id for r in train])
        model = estimators.fit(spec, X_train, [r.time_seconds for r in train])
        preds = estimators.predict_many(model, features.matrix([r.instance_id for r in test]))
        per_user[user] = regression_metrics([r.time_seconds for r in test], preds)
    mean = Metrics(
        mae=_mean_or_none([m.mae for m in per_user.values()]),
        rmse=_mean_or_none([m.rmse for m in per_user.values()]),
        r2=_mean_or_none([m.r2 for m in per_user.values()]),
        rho=_mean_or_none([m.rho for m in per_user.values()]),
    )
    return LooResult(per_user=per_user, mean=mean)


_CONSONANTS = "bcdfghklmnprstvz"
_VOWEL_LETTERS = "aeiou"


def _make_vocab(rng: random.Random, size: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        syllables = rng.randint(1, 4)
        word = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWEL_LETTERS) for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def gen_synthetic(
    n: int,
    seed: int = 0,
    beta0: float = 2.0,
    beta1: float = 0.1,
    noise_sigma: float = 0.0,
    max_sentences: int = 6,
    max_sentence_tokens: int = 100,
    vocab_size: int = 120,
) -> Dataset:
    """Generate a timed dataset whose time is linear in token count.

    time = beta0 + beta1 * tokens + N(0, noise_sigma), floored at 0.01 s.
    Texts vary in sentence count and sentence length so both token count
    and readability differ across instances; everything is deterministic
    per seed.
    """
    if not isinstance(n, int) or n < 1:
        raise BadParams(f"n must be an integer >= 1, got {n!r}")
    for name, value in (("beta0", beta0), ("beta1", beta1)):
        if not math.isfinite(value):
            raise BadParams(f"{name} must be finite, got {value!r}")
    if not (noise_sigma >= 0 and math.isfinite(noise_sigma)):
        raise BadParams(f"noise_sigma must be finite and >= 0, got {noise_sigma!r}")
    if max_sentences < 1 or max_sentence_tokens < 1 or vocab_size < 1:
        raise BadParams("max_sentences, max_sentence_tokens and vocab_size must be >= 1")
    rng = random.Random(seed)
    vocab = _make_vocab(rng, vocab_size)
    width = max(4, len(str(n - 1)))
    instances = []
    records = []
    for i in range(n):
        sentence_count = rng.randint(1, max_sentences)
        sentences = []
        tokens_total = 0
        for _ in range(sentence_count):
            length = rng.randint(1, max_sentence_tokens)
            tokens_total += length
            sentences.append(" ".join(rng.choice(vocab) for _ in range(length)) + ".")
        text = " ".join(sentences)
        noise = rng.gauss(0.0, noise_sigma) if noise_sigma > 0 else 0.0
        time = max(beta0 + beta1 * tokens_total + noise, 0.01)
        iid = f"s{i:0{width}d}"
        instances.append(Instance(id=iid, text=text))
        records.append(TimedRecord(instance_id=iid, annotator_id="sim", label="", time_seconds=time))
    return Dataset(instances=tuple(instances), records=tuple(records), name=f"synthetic-{seed}")


def save_curve(curve: LearningCurve, path: str) -> None:
    """Write a learning curve as jsonl rows {"step","id","time","rho","mae"}."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in curve.points:
            fh.write(
                json.dumps(
                    {"step": p.step, "id": p.instance_id, "time": p.time_seconds, "rho": p.rho, "mae": p.mae}
                )
                + "\n"
            )
