"""Ordering strategies: how to sequence a pool of instances.

Non-adaptive strategies (random permutation, heuristic easy-first, gold
difficulty ascending) produce the whole ordering up front.  The adaptive
strategy interleaves selection and observation: pick the instance with
the lowest predicted annotation time, observe the actual time, retrain,
repeat.  Until the first model is fit the pick is seeded-random, so runs
are reproducible end to end.

Ties are always broken by instance id ascending; nothing here depends on
hash ordering or dict iteration order.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from . import estimators
from .corpus import Instance, NonPositiveTime
from .errors import DataError
from .estimators import RegressorSpec, TrainedModel
from .textfeat import FeatureTable, Heuristic

STRATEGY_KINDS = ("random", "heuristic", "adaptive", "gold")
MIN_OBSERVED_SECONDS = 0.001


class MissingDifficulty(DataError):
    pass


class PoolExhausted(DataError):
    pass


class UnknownId(DataError):
    pass


@dataclass(frozen=True)
class Strategy:
    """An ordering policy plus everything it needs to run."""

    kind: str
    seed: int = 0
    heuristic: Heuristic | None = None
    regressor: RegressorSpec | None = None
    features: FeatureTable | None = None
    retrain_every: int = 1

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DataError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "heuristic" and self.heuristic is None:
            raise DataError("heuristic strategy needs a heuristic scorer")
        if self.kind == "adaptive":
            if self.regressor is None:
                raise DataError("adaptive strategy needs a regressor spec")
            if self.features is None:
                raise DataError("adaptive strategy needs a feature table")
        if not isinstance(self.retrain_every, int) or self.retrain_every < 1:
            raise DataError(f"retrain_every must be an integer >= 1, got {self.retrain_every!r}")


def _score_of(scorer, instance: Instance) -> float:
    if hasattr(scorer, "score"):
        return float(scorer.score(instance))
    return float(scorer(instance))


def precompute_order(instances: list[Instance], scorer) -> list[str]:
    """Ids sorted by score ascending, ties by id ascending."""
    scored = [(_score_of(scorer, inst), inst.id) for inst in instances]
    scored.sort()
    return [iid for _, iid in scored]


def random_order(instances: list[Instance], seed: int) -> list[str]:
    """Seeded uniform permutation of the instance ids."""
    ids = [inst.id for inst in instances]
    random.Random(seed).shuffle(ids)
    return ids


def gold_order(instances: list[Instance]) -> list[str]:
    """Ids sorted by configured difficulty level ascending, ties by id."""
    keyed = []
    for inst in instances:
        if inst.difficulty_level is None:
            raise MissingDifficulty(f"instance {inst.id!r} has no difficulty level")
        keyed.append((inst.difficulty_level, inst.id))
    keyed.sort()
    return [iid for _, iid in keyed]


class CurriculumState:
    """Mutable progress of one adaptive run: pool, observations, model.

    One state per annotator; mutate it from a single thread only.
    """

    def __init__(self, strategy: Strategy, pool_ids: list[str]):
        if strategy.kind != "adaptive":
            raise DataError(f"curriculum state requires an adaptive strategy, got {strategy.kind!r}")
        seen: set[str] = set()
        for iid in pool_ids:
            if iid in seen:
                raise DataError(f"duplicate id {iid!r} in pool")
            seen.add(iid)
            strategy.features.vector(iid)  # raises MissingFeatures early
        self.strategy = strategy
        self.seed = strategy.seed
        self.remaining: list[str] = sorted(pool_ids)
        self.observed: list[tuple[str, float]] = []
        self.model: TrainedModel | None = None
        self.step = 0
        self._remaining_set = set(pool_ids)


def new_adaptive_state(strategy: Strategy, pool_ids: list[str]) -> CurriculumState:
    return CurriculumState(strategy, pool_ids)


def adaptive_next(state: CurriculumState) -> str:
    """The next instance to annotate: seeded-random before the first model
    fit, afterwards the argmin of predicted time (ties by id ascending)."""
    if not state.remaining:
        raise PoolExhausted("no instances left in the pool")
    if state.model is None:
        rng = random.Random(f"{state.seed}:{state.step}")
        return state.remaining[rng.randrange(len(state.remaining))]
    features = state.strategy.features
    matrix = features.matrix(state.remaining)
    preds = estimators.predict_many(state.model, matrix)
    best = min(zip(preds.tolist(), state.remaining))
    return best[1]


def adaptive_observe(state: CurriculumState, instance_id: str, time_seconds: float) -> CurriculumState:
    """Record an observed annotation time and retrain on schedule."""
    if instance_id not in state._remaining_set:
        raise UnknownId(f"instance {instance_id!r} is not in the remaining pool")
    if not (time_seconds >= MIN_OBSERVED_SECONDS):
        raise NonPositiveTime(
            f"observed time {time_seconds!r} for {instance_id!r} is below the "
            f"{MIN_OBSERVED_SECONDS} s floor"
        )
    state.remaining.remove(instance_id)
    state._remaining_set.discard(instance_id)
    state.observed.append((instance_id, float(time_seconds)))
    state.step += 1
    if state.step % state.strategy.retrain_every == 0:
        features = state.strategy.features
        X = features.matrix([iid for iid, _ in state.observed])
        y = [t for _, t in state.observed]
        state.model = estimators.fit(state.strategy.regressor, X, y)
    return state


def ordering_for(instances: list[Instance], strategy: Strategy) -> list[str]:
    """Materialize the full ordering of a non-adaptive strategy."""
    if strategy.kind == "random":
        return random_order(instances, strategy.seed)
    if strategy.kind == "heuristic":
        return precompute_order(instances, strategy.heuristic)
    if strategy.kind == "gold":
        return gold_order(instances)
    raise DataError("adaptive orderings unfold per observation; drive them via CurriculumState")


def export_order(path: str, ordered_ids: list[str], scores: dict[str, float] | None = None) -> None:
    """Write an ordering as jsonl rows {"rank", "id", "score"} (rank is 1-based;
    score falls back to the rank when no score table is given)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rank, iid in enumerate(ordered_ids, start=1):
            score = float(scores[iid]) if scores is not None else float(rank)
            fh.write(json.dumps({"rank": rank, "id": iid, "score": score}) + "\n")
