"""Live annotation studies: definition, sessions, capture, export, analysis.

A study presents every participant the same fixed control block first,
then evaluation instances in an order chosen by the participant's group
strategy.  Adaptive groups carry a personal regression model fed only by
the participant's own evaluation times.  Choices are shuffled server
side with a seed derived from (study seed, session, instance), so a
refresh re-presents the identical order and no client can reorder them.

Participants register with a self-chosen key and explicit consent; the
key never appears in exports, which use stored random participant ids.
Deletion erases a participant from live state, and the analysis report
reproduces the timing pipeline: outlier capping, per-group descriptive
statistics, Kruskal-Wallis across groups, Bonferroni-corrected pairwise
Welch tests, per-difficulty breakdowns, and rank correlation between the
realized order and the gold difficulty order.
"""

from __future__ import annotations

import itertools
import math
import random
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import stats
from .corpus import Instance, instance_from_json, instance_to_json
from .curriculum import (
    CurriculumState,
    Strategy,
    adaptive_next,
    adaptive_observe,
    new_adaptive_state,
    ordering_for,
)
from .errors import DataError
from .estimators import spec_from_json, spec_to_json
from .textfeat import FeatureTable, Heuristic, ScoreTable

DIFFICULTY_RATINGS = ("very_easy", "easy", "medium", "difficult", "very_difficult")
ORDERING_PREFERENCES = ("no_change", "easy_first", "difficult_first", "other")

_STUDY_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class InvalidConfig(DataError):
    pass


class UnknownStudy(DataError):
    pass


class UnknownSession(DataError):
    pass


class UnknownKey(DataError):
    pass


class DuplicateKey(DataError):
    pass


class ConsentRequired(DataError):
    pass


class NoConsent(DataError):
    pass


class SessionComplete(DataError):
    pass


class SessionIncomplete(DataError):
    pass


class OutOfOrderSubmission(DataError):
    pass


class BadElapsed(DataError):
    pass


class UnknownChoice(DataError):
    pass


class InvalidQuestionnaire(DataError):
    pass


class MalformedExport(DataError):
    pass


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class GroupSpec:
    name: str
    strategy: Strategy


@dataclass(frozen=True)
class StudyConfig:
    study_id: str
    instances: tuple[Instance, ...]
    control_ids: tuple[str, ...]
    evaluation_ids: tuple[str, ...]
    groups: tuple[GroupSpec, ...]
    consent_text: str = ""
    seed: int = 0
    check_choice_disjointness: bool = True
    features: FeatureTable | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "control_ids", tuple(self.control_ids))
        object.__setattr__(self, "evaluation_ids", tuple(self.evaluation_ids))
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def session_length(self) -> int:
        return len(self.control_ids) + len(self.evaluation_ids)


def _presented_choices(inst: Instance) -> tuple[str, ...]:
    return inst.choice_sets[inst.difficulty_level]


def validate_config(config: StudyConfig) -> dict[str, Instance]:
    """Check all study invariants; returns the instance bank by id."""
    if not isinstance(config.study_id, str) or not _STUDY_ID_RE.match(config.study_id):
        raise InvalidConfig(
            f"study_id must match [A-Za-z0-9._-]+, got {config.study_id!r}"
        )
    bank: dict[str, Instance] = {}
    for inst in config.instances:
        if inst.id in bank:
            raise InvalidConfig(f"duplicate instance id {inst.id!r}")
        bank[inst.id] = inst
    if not config.evaluation_ids:
        raise InvalidConfig("a study needs at least one evaluation instance")
    for name, ids in (("control", config.control_ids), ("evaluation", config.evaluation_ids)):
        seen: set[str] = set()
        for iid in ids:
            if iid not in bank:
                raise InvalidConfig(f"{name} id {iid!r} is not in the instance bank")
            if iid in seen:
                raise InvalidConfig(f"{name} id {iid!r} listed twice")
            seen.add(iid)
            inst = bank[iid]
            if inst.difficulty_level is None:
                raise InvalidConfig(f"{name} instance {iid!r} has no difficulty level")
            if inst.gold_label is None or inst.choice_sets is None:
                raise InvalidConfig(f"{name} instance {iid!r} has no gold label / choice sets")
            if inst.difficulty_level not in inst.choice_sets:
                raise InvalidConfig(
                    f"{name} instance {iid!r} lacks a choice set for its difficulty level"
                )
    overlap = set(config.control_ids) & set(config.evaluation_ids)
    if overlap:
        raise InvalidConfig(f"control and evaluation ids overlap: {sorted(overlap)}")
    level_counts: dict[int, int] = {}
    for iid in config.evaluation_ids:
        level = bank[iid].difficulty_level
        level_counts[level] = level_counts.get(level, 0) + 1
    if len(set(level_counts.values())) > 1:
        raise InvalidConfig(
            f"evaluation instances are unbalanced across difficulty levels: {level_counts}"
        )
    if config.check_choice_disjointness and config.control_ids:
        control_strings = {
            c for iid in config.control_ids for c in _presented_choices(bank[iid])
        }
        eval_strings = {
            c for iid in config.evaluation_ids for c in _presented_choices(bank[iid])
        }
        shared = control_strings & eval_strings
        if shared:
            raise InvalidConfig(
                f"control and evaluation choice sets share strings: {sorted(shared)[:3]}"
            )
    if not config.groups:
        raise InvalidConfig("a study needs at least one group")
    names = [g.name for g in config.groups]
    if len(set(names)) != len(names):
        raise InvalidConfig(f"group names are not unique: {names}")
    eval_instances = [bank[iid] for iid in config.evaluation_ids]
    for group in config.groups:
        if not group.name:
            raise InvalidConfig("group names must be non-empty")
        strategy = group.strategy
        if strategy.kind == "heuristic":
            for inst in eval_instances:
                try:
                    strategy.heuristic.score(inst)
                except DataError as exc:
                    raise InvalidConfig(
                        f"group {group.name!r}: heuristic cannot score {inst.id!r}: {exc}"
                    ) from None
        elif strategy.kind == "adaptive":
            for iid in config.evaluation_ids:
                if iid not in strategy.features:
                    raise InvalidConfig(
                        f"group {group.name!r}: no features for evaluation instance {iid!r}"
                    )
    return bank


@dataclass
class AnnotationEvent:
    instance_id: str
    choice_order: tuple[str, ...]
    choice: str
    correct: bool
    elapsed_ms: int
    position: int
    received_at: str


@dataclass
class Session:
    key: str
    sid: str
    group: str
    consent_at: str
    position: int = 0
    pending: str | None = None
    curriculum: CurriculumState | None = None
    events: list[AnnotationEvent] = field(default_factory=list)
    questionnaire: dict | None = None


class Study:
    """In-memory state of one running study."""

    def __init__(self, config: StudyConfig):
        self.bank = validate_config(config)
        self.config = config
        self.orders: dict[str, list[str]] = {}
        eval_instances = [self.bank[iid] for iid in config.evaluation_ids]
        for group in config.groups:
            if group.strategy.kind != "adaptive":
                self.orders[group.name] = ordering_for(eval_instances, group.strategy)
        self.sessions: dict[str, Session] = {}
        self.by_sid: dict[str, Session] = {}
        self.registration_count = 0
        self.audit: list[dict] = []

    # -- registration -------------------------------------------------------

    def _assign_group(self, registration_index: int) -> str:
        names = [g.name for g in self.config.groups]
        block, slot = divmod(registration_index, len(names))
        rng = random.Random(f"{self.config.seed}:block:{block}")
        rng.shuffle(names)
        return names[slot]

    def register(
        self,
        key: str,
        consent: bool,
        anon_id: str | None = None,
        group: str | None = None,
        at: str | None = None,
    ) -> Session:
        """Register a participant; group comes from balanced-block
        randomization (counts across groups never differ by more than 1).

        anon_id/group/at are for log replay, which must reproduce the
        original assignment rather than re-derive it.
        """
        if not isinstance(key, str) or not key:
            raise DataError("participant key must be a non-empty string")
        if not consent:
            raise ConsentRequired("consent is required before any data is captured")
        if key in self.sessions:
            raise DuplicateKey(f"participant key {key!r} is already registered")
        if group is None:
            group = self._assign_group(self.registration_count)
        elif group not in {g.name for g in self.config.groups}:
            raise InvalidConfig(f"unknown group {group!r}")
        if anon_id is None:
            anon_id = "p-" + uuid.uuid4().hex[:12]
            while anon_id in self.by_sid:
                anon_id = "p-" + uuid.uuid4().hex[:12]
        elif anon_id in self.by_sid:
            raise DataError(f"participant id {anon_id!r} already in use")
        session = Session(key=key, sid=anon_id, group=group, consent_at=at or _utc_now())
        strategy = self._strategy_of(group)
        if strategy.kind == "adaptive":
            session.curriculum = new_adaptive_state(strategy, list(self.config.evaluation_ids))
        self.sessions[key] = session
        self.by_sid[anon_id] = session
        self.registration_count += 1
        return session

    def _strategy_of(self, group_name: str) -> Strategy:
        for group in self.config.groups:
            if group.name == group_name:
                return group.strategy
        raise InvalidConfig(f"unknown group {group_name!r}")

    # -- annotation flow ----------------------------------------------------

    def _session_by_sid(self, sid: str) -> Session:
        try:
            return self.by_sid[sid]
        except KeyError:
            raise UnknownSession(f"unknown session {sid!r}") from None

    def _current_instance_id(self, session: Session) -> str:
        if session.pending is not None:
            return session.pending
        n_control = len(self.config.control_ids)
        if session.position < n_control:
            iid = self.config.control_ids[session.position]
        elif session.curriculum is not None:
            iid = adaptive_next(session.curriculum)
        else:
            iid = self.orders[session.group][session.position - n_control]
        session.pending = iid
        return iid

    def choice_order_for(self, session: Session, instance_id: str) -> tuple[str, ...]:
        """The shuffled choice order shown to this session for this
        instance; stable across repeated fetches."""
        inst = self.bank[instance_id]
        choices = list(_presented_choices(inst))
        rng = random.Random(f"{self.config.seed}:{session.sid}:{instance_id}")
        rng.shuffle(choices)
        return tuple(choices)

    def next_instance(self, sid: str) -> dict:
        """The current instance payload, or a done marker."""
        session = self._session_by_sid(sid)
        total = self.config.session_length
        if session.position >= total:
            return {
                "done": True,
                "position": session.position,
                "total": total,
                "questionnaire_submitted": session.questionnaire is not None,
            }
        iid = self._current_instance_id(session)
        inst = self.bank[iid]
        return {
            "done": False,
            "instance_id": iid,
            "text": inst.text,
            "choices": list(self.choice_order_for(session, iid)),
            "position": session.position + 1,
            "total": total,
        }

    def submit_annotation(
        self, sid: str, instance_id: str, choice: str, elapsed_ms: int, at: str | None = None
    ) -> dict:
        session = self._session_by_sid(sid)
        if session.position >= self.config.session_length:
            raise SessionComplete("all instances are already annotated")
        if not isinstance(elapsed_ms, int) or isinstance(elapsed_ms, bool) or elapsed_ms <= 0:
            raise BadElapsed(f"elapsed_ms must be a positive integer, got {elapsed_ms!r}")
        current = self._current_instance_id(session)
        if instance_id != current:
            raise OutOfOrderSubmission(
                f"submitted {instance_id!r} but the pending instance is {current!r}"
            )
        order = self.choice_order_for(session, current)
        if choice not in order:
            raise UnknownChoice(f"choice {choice!r} is not among the presented options")
        inst = self.bank[current]
        event = AnnotationEvent(
            instance_id=current,
            choice_order=order,
            choice=choice,
            correct=choice == inst.gold_label,
            elapsed_ms=elapsed_ms,
            position=session.position + 1,
            received_at=at or _utc_now(),
        )
        session.events.append(event)
        session.position += 1
        session.pending = None
        if session.curriculum is not None and current in self.config.evaluation_ids:
            adaptive_observe(session.curriculum, current, elapsed_ms / 1000.0)
        return {
            "ok": True,
            "position": session.position,
            "total": self.config.session_length,
            "done": session.position >= self.config.session_length,
        }

    # -- questionnaire ------------------------------------------------------

    def submit_questionnaire(self, sid: str, response: dict, at: str | None = None) -> dict:
        session = self._session_by_sid(sid)
        if session.position < self.config.session_length:
            raise SessionIncomplete(
                f"questionnaire opens after all {self.config.session_length} annotations; "
                f"only {session.position} submitted"
            )
        cleaned = validate_questionnaire(response)
        replaced = session.questionnaire is not None
        if replaced:
            self.audit.append(
                {
                    "kind": "questionnaire-replaced",
                    "participant": session.sid,
                    "at": at or _utc_now(),
                }
            )
        session.questionnaire = cleaned
        return {"ok": True, "replaced": replaced}

    # -- deletion -----------------------------------------------------------

    def delete_participant(self, key: str, at: str | None = None) -> None:
        session = self.sessions.get(key)
        if session is None:
            raise UnknownKey(f"unknown participant key {key!r}")
        del self.sessions[key]
        del self.by_sid[session.sid]
        self.audit.append(
            {"kind": "deletion", "participant": session.sid, "at": at or _utc_now()}
        )

    # -- export -------------------------------------------------------------

    def export_rows(self) -> list[dict]:
        """Anonymized event rows for every surviving session, in
        registration order; byte-identical across repeated exports."""
        rows = []
        for session in self.sessions.values():
            for event in list(session.events):
                inst = self.bank[event.instance_id]
                rows.append(
                    {
                        "participant": session.sid,
                        "group": session.group,
                        "rank": event.position,
                        "instance_id": event.instance_id,
                        "difficulty": inst.difficulty_level,
                        "choice_order": list(event.choice_order),
                        "choice": event.choice,
                        "correct": event.correct,
                        "elapsed_ms": event.elapsed_ms,
                    }
                )
        return rows


def validate_questionnaire(response: dict) -> dict:
    """Check a questionnaire payload; returns a normalized copy."""
    if not isinstance(response, dict):
        raise InvalidQuestionnaire("questionnaire must be a json object")
    allowed = {
        "difficulty_rating",
        "noticed_differences",
        "noticed_differences_text",
        "ordering_preference",
        "ordering_preference_text",
        "cefr_level",
        "years_english",
        "studies_participated",
        "studies_conducted",
    }
    unknown = set(response) - allowed
    if unknown:
        raise InvalidQuestionnaire(f"unknown questionnaire fields: {sorted(unknown)}")
    rating = response.get("difficulty_rating")
    if rating not in DIFFICULTY_RATINGS:
        raise InvalidQuestionnaire(
            f"difficulty_rating must be one of {DIFFICULTY_RATINGS}, got {rating!r}"
        )
    noticed = response.get("noticed_differences")
    if not isinstance(noticed, bool):
        raise InvalidQuestionnaire("noticed_differences must be a boolean")
    preference = response.get("ordering_preference")
    if preference not in ORDERING_PREFERENCES:
        raise InvalidQuestionnaire(
            f"ordering_preference must be one of {ORDERING_PREFERENCES}, got {preference!r}"
        )
    cleaned = {
        "difficulty_rating": rating,
        "noticed_differences": noticed,
        "ordering_preference": preference,
    }
    for key in ("noticed_differences_text", "ordering_preference_text", "cefr_level"):
        if response.get(key) is not None:
            if not isinstance(response[key], str):
                raise InvalidQuestionnaire(f"{key} must be a string")
            cleaned[key] = response[key]
    for key in ("years_english", "studies_participated", "studies_conducted"):
        if response.get(key) is not None:
            value = response[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise InvalidQuestionnaire(f"{key} must be a nonnegative number")
            cleaned[key] = value
    return cleaned


# --- config (de)serialization ------------------------------------------------


def strategy_to_json(strategy: Strategy) -> dict:
    obj: dict = {"kind": strategy.kind, "seed": strategy.seed}
    if strategy.kind == "heuristic":
        h = strategy.heuristic
        obj["heuristic"] = {"kind": h.kind}
        if h.scores is not None:
            obj["heuristic"]["scores"] = {iid: h.scores.score(iid) for iid in h.scores.ids()}
    if strategy.kind == "adaptive":
        obj["regressor"] = spec_to_json(strategy.regressor)
        obj["retrain_every"] = strategy.retrain_every
    return obj


def strategy_from_json(obj: dict, features: FeatureTable | None) -> Strategy:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidConfig("strategy must be an object with a 'kind'")
    kind = obj["kind"]
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InvalidConfig(f"strategy seed must be an integer, got {seed!r}")
    try:
        if kind == "heuristic":
            h = obj.get("heuristic")
            if not isinstance(h, dict) or "kind" not in h:
                raise InvalidConfig("heuristic strategy needs {'heuristic': {'kind': ...}}")
            scores = None
            if h.get("scores") is not None:
                scores = ScoreTable(h["scores"])
            return Strategy(kind="heuristic", seed=seed, heuristic=Heuristic(h["kind"], scores))
        if kind == "adaptive":
            if features is None:
                raise InvalidConfig("adaptive strategy needs study-level 'features'")
            spec = spec_from_json(obj.get("regressor") or {})
            retrain_every = obj.get("retrain_every", 1)
            return Strategy(
                kind="adaptive",
                seed=seed,
                regressor=spec,
                features=features,
                retrain_every=retrain_every,
            )
        return Strategy(kind=kind, seed=seed)
    except DataError as exc:
        raise InvalidConfig(str(exc)) from None


def config_to_json(config: StudyConfig) -> dict:
    obj = {
        "study_id": config.study_id,
        "seed": config.seed,
        "consent_text": config.consent_text,
        "check_choice_disjointness": config.check_choice_disjointness,
        "control_ids": list(config.control_ids),
        "evaluation_ids": list(config.evaluation_ids),
        "instances": [instance_to_json(inst) for inst in config.instances],
        "groups": [
            {"name": g.name, "strategy": strategy_to_json(g.strategy)} for g in config.groups
        ],
    }
    if config.features is not None:
        obj["features"] = {iid: config.features.vector(iid).tolist() for iid in config.features.ids()}
    return obj


def config_from_json(obj: dict) -> StudyConfig:
    if not isinstance(obj, dict):
        raise InvalidConfig("study config must be a json object")
    study_id = obj.get("study_id") or ("study-" + uuid.uuid4().hex[:8])
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InvalidConfig(f"seed must be an integer, got {seed!r}")
    try:
        instances = tuple(instance_from_json(i) for i in obj.get("instances", []))
    except DataError as exc:
        raise InvalidConfig(str(exc)) from None
    features = None
    if obj.get("features") is not None:
        try:
            features = FeatureTable(
                {iid: np.asarray(vec, dtype=float) for iid, vec in obj["features"].items()}
            )
        except (DataError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad feature map: {exc}") from None
    raw_groups = obj.get("groups", [])
    if not isinstance(raw_groups, list):
        raise InvalidConfig("'groups' must be a list")
    groups = []
    for g in raw_groups:
        if not isinstance(g, dict) or "name" not in g or "strategy" not in g:
            raise InvalidConfig("each group needs 'name' and 'strategy'")
        groups.append(GroupSpec(name=g["name"], strategy=strategy_from_json(g["strategy"], features)))
    config = StudyConfig(
        study_id=study_id,
        instances=instances,
        control_ids=tuple(obj.get("control_ids", [])),
        evaluation_ids=tuple(obj.get("evaluation_ids", [])),
        groups=tuple(groups),
        consent_text=obj.get("consent_text", ""),
        seed=seed,
        check_choice_disjointness=obj.get("check_choice_disjointness", True),
        features=features,
    )
    validate_config(config)
    return config


# --- analysis ----------------------------------------------------------------


_EXPORT_FIELDS = {
    "participant": str,
    "group": str,
    "rank": int,
    "instance_id": str,
    "difficulty": int,
    "choice": str,
    "correct": bool,
    "elapsed_ms": int,
}


def _check_row(row, index: int) -> None:
    if not isinstance(row, dict):
        raise MalformedExport(f"row {index}: not an object")
    for name, typ in _EXPORT_FIELDS.items():
        if name not in row:
            raise MalformedExport(f"row {index}: missing field {name!r}")
        value = row[name]
        if typ in (int,) and isinstance(value, bool):
            raise MalformedExport(f"row {index}: field {name!r} must be {typ.__name__}")
        if not isinstance(value, typ):
            raise MalformedExport(f"row {index}: field {name!r} must be {typ.__name__}")
    if row["elapsed_ms"] <= 0:
        raise MalformedExport(f"row {index}: elapsed_ms must be positive")
    if row["rank"] < 1:
        raise MalformedExport(f"row {index}: rank must be >= 1")
    order = row.get("choice_order")
    if not isinstance(order, list) or any(not isinstance(c, str) for c in order):
        raise MalformedExport(f"row {index}: choice_order must be a list of strings")


def _sample_std(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    mu = sum(values) / len(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / (len(values) - 1))


def _percentile(values: list[float], q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), q))


def _test_to_json(result: stats.TestResult | None) -> dict | None:
    if result is None:
        return None
    return {
        "statistic": result.statistic,
        "df": result.df,
        "p_two_sided": result.p_two_sided,
    }


def _pairwise_welch(samples: dict, threshold: float) -> dict:
    pairs = {}
    for a, b in itertools.combinations(sorted(samples), 2):
        try:
            result = stats.welch_t(samples[a], samples[b])
        except stats.StatsError:
            pairs[f"{a}|{b}"] = None
            continue
        entry = _test_to_json(result)
        entry["significant"] = result.p_two_sided < threshold
        pairs[f"{a}|{b}"] = entry
    return pairs


def analyze_export(
    rows: list[dict],
    control_count: int = 10,
    cap_k: float = 5.0,
    hard_limit: float = 600.0,
    alpha: float = 0.05,
) -> dict:
    """Statistical report over export rows.

    Rows with rank <= control_count form the control block.  Times are
    capped jointly (cap = mean + cap_k * std over values <= hard_limit)
    before any statistic is computed.
    """
    if not isinstance(control_count, int) or control_count < 0:
        raise MalformedExport(f"control_count must be an integer >= 0, got {control_count!r}")
    for index, row in enumerate(rows):
        _check_row(row, index)
    report: dict = {
        "n_rows": len(rows),
        "alpha": alpha,
        "control_count": control_count,
        "groups": {},
        "control": {"kruskal_time": None},
        "evaluation": {"kruskal_time": None},
        "pairwise_time": None,
        "difficulty": None,
        "capping": None,
    }
    if not rows:
        return report

    times = [row["elapsed_ms"] / 1000.0 for row in rows]
    cap = stats.cap_outliers(times, k=cap_k, hard_limit=hard_limit)
    report["capping"] = {
        "t_max_s": cap.t_max,
        "n_capped": cap.n_capped,
        "k": cap_k,
        "hard_limit_s": hard_limit,
    }
    capped = cap.capped
    control_rows: dict[str, list[tuple[dict, float]]] = {}
    eval_rows: dict[str, list[tuple[dict, float]]] = {}
    for row, t in zip(rows, capped):
        target = control_rows if row["rank"] <= control_count else eval_rows
        target.setdefault(row["group"], []).append((row, t))

    group_names = sorted({row["group"] for row in rows})
    for group in group_names:
        pairs = eval_rows.get(group, [])
        by_participant: dict[str, list[tuple[dict, float]]] = {}
        for row, t in pairs:
            by_participant.setdefault(row["participant"], []).append((row, t))
        participants = sorted(
            {row["participant"] for row, _ in pairs}
            | {row["participant"] for row, _ in control_rows.get(group, [])}
        )
        gtimes = [t for _, t in pairs]
        totals = [sum(t for _, t in items) for items in by_participant.values()]
        accuracies = [
            sum(1 for row, _ in items if row["correct"]) / len(items)
            for items in by_participant.values()
        ]
        rhos = []
        for items in by_participant.values():
            ordered = sorted(items, key=lambda pair: pair[0]["rank"])
            if len(ordered) >= 2:
                rho = stats.spearman(
                    [float(row["rank"]) for row, _ in ordered],
                    [float(row["difficulty"]) for row, _ in ordered],
                )
                if rho is not None:
                    rhos.append(rho)
        report["groups"][group] = {
            "n_participants": len(participants),
            "n_evaluation_annotations": len(gtimes),
            "sum_time_s": sum(totals) / len(totals) if totals else None,
            "mean_time_s": sum(gtimes) / len(gtimes) if gtimes else None,
            "std_time_s": _sample_std(gtimes) if gtimes else None,
            "p25_s": _percentile(gtimes, 25) if gtimes else None,
            "p50_s": _percentile(gtimes, 50) if gtimes else None,
            "p75_s": _percentile(gtimes, 75) if gtimes else None,
            "accuracy": sum(accuracies) / len(accuracies) if accuracies else None,
            "rho_vs_gold": sum(rhos) / len(rhos) if rhos else None,
        }

    def kw_or_none(samples: dict[str, list[float]]):
        usable = {g: v for g, v in samples.items() if v}
        if len(usable) < 2:
            return None
        return stats.kruskal_wallis([usable[g] for g in sorted(usable)])

    report["control"]["kruskal_time"] = _test_to_json(
        kw_or_none({g: [t for _, t in v] for g, v in control_rows.items()})
    )
    report["evaluation"]["kruskal_time"] = _test_to_json(
        kw_or_none({g: [t for _, t in v] for g, v in eval_rows.items()})
    )

    eval_times_by_group = {g: [t for _, t in v] for g, v in eval_rows.items()}
    if len(group_names) >= 2:
        n_pairs = len(group_names) * (len(group_names) - 1) // 2
        threshold = stats.bonferroni(alpha, n_pairs)
        report["pairwise_time"] = {
            "threshold": threshold,
            "pairs": _pairwise_welch(eval_times_by_group, threshold),
        }

    all_eval = [pair for v in eval_rows.values() for pair in v]
    levels = sorted({row["difficulty"] for row, _ in all_eval})
    if levels:
        times_by_level: dict[int, list[float]] = {lv: [] for lv in levels}
        acc_by_level: dict[int, dict[str, list[bool]]] = {lv: {} for lv in levels}
        for row, t in all_eval:
            lv = row["difficulty"]
            times_by_level[lv].append(t)
            acc_by_level[lv].setdefault(row["participant"], []).append(row["correct"])
        level_stats = {}
        participant_acc_by_level: dict[int, list[float]] = {}
        for lv in levels:
            accs = [
                sum(flags) / len(flags) for flags in acc_by_level[lv].values()
            ]
            participant_acc_by_level[lv] = accs
            level_stats[str(lv)] = {
                "n": len(times_by_level[lv]),
                "mean_time_s": sum(times_by_level[lv]) / len(times_by_level[lv]),
                "accuracy": sum(accs) / len(accs) if accs else None,
            }
        difficulty: dict = {"levels": level_stats}
        if len(levels) >= 2:
            n_pairs = len(levels) * (len(levels) - 1) // 2
            threshold = stats.bonferroni(alpha, n_pairs)
            difficulty["threshold"] = threshold
            difficulty["pairwise_time"] = _pairwise_welch(
                {str(lv): times_by_level[lv] for lv in levels}, threshold
            )
            difficulty["pairwise_accuracy"] = _pairwise_welch(
                {str(lv): participant_acc_by_level[lv] for lv in levels}, threshold
            )
        report["difficulty"] = difficulty
    return report


def render_report(report: dict) -> str:
    """Plain-text rendering of an analyze_export report."""
    lines = []
    lines.append(f"rows analyzed: {report['n_rows']}")
    cap = report.get("capping")
    if cap:
        lines.append(
            f"capping: t_max = {cap['t_max_s']:.2f} s, {cap['n_capped']} values capped "
            f"(k = {cap['k']}, hard limit = {cap['hard_limit_s']} s)"
        )
    if report["groups"]:
        header = f"{'group':<14} {'n':>3} {'sum t':>9} {'mean t':>8} {'std t':>8} {'p50':>8} {'acc':>6} {'rho':>6}"
        lines.append(header)
        for name in sorted(report["groups"]):
            g = report["groups"][name]

            def num(value, width, digits=2):
                return f"{value:>{width}.{digits}f}" if value is not None else " " * (width - 1) + "-"

            lines.append(
                f"{name:<14} {g['n_participants']:>3} {num(g['sum_time_s'], 9)} "
                f"{num(g['mean_time_s'], 8)} {num(g['std_time_s'], 8)} {num(g['p50_s'], 8)} "
                f"{num(g['accuracy'], 6)} {num(g['rho_vs_gold'], 6)}"
            )
    for label, key in (("control", "control"), ("evaluation", "evaluation")):
        test = report[key]["kruskal_time"]
        if test:
            lines.append(
                f"kruskal-wallis on {label} times: H = {test['statistic']:.3f}, "
                f"p = {test['p_two_sided']:.4f}"
            )
    pw = report.get("pairwise_time")
    if pw:
        lines.append(f"pairwise welch threshold (bonferroni): {pw['threshold']:.6f}")
        for pair in sorted(pw["pairs"]):
            entry = pw["pairs"][pair]
            if entry is None:
                lines.append(f"  {pair}: not testable")
            else:
                marker = "*" if entry["significant"] else " "
                lines.append(
                    f"  {pair}: t = {entry['statistic']:.3f}, p = {entry['p_two_sided']:.4f} {marker}"
                )
    diff = report.get("difficulty")
    if diff:
        lines.append("difficulty levels:")
        for lv in sorted(diff["levels"], key=int):
            entry = diff["levels"][lv]
            acc = f"{entry['accuracy']:.3f}" if entry["accuracy"] is not None else "-"
            lines.append(
                f"  level {lv}: n = {entry['n']}, mean t = {entry['mean_time_s']:.2f} s, acc = {acc}"
            )
    return "\n".join(lines)
