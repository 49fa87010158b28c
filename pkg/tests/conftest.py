"""Shared builders for study-shaped test data."""

import pytest

from anncur import corpus, curriculum, estimators, study, textfeat


def choice_instance(iid: str, level: int, tag: str, text: str | None = None) -> corpus.Instance:
    """An instance with a gold label and five distractors at one level."""
    gold = f"{tag}-gold-{iid}"
    choices = [gold] + [f"{tag}-d{k}-{iid}" for k in range(5)]
    return corpus.Instance(
        id=iid,
        text=text or f"Example text for {iid}.",
        difficulty_level=level,
        gold_label=gold,
        choice_sets={level: choices},
    )


def small_study_config(
    n_control: int = 2,
    per_level: int = 2,
    levels: tuple[int, ...] = (1, 2),
    group_kinds: tuple[str, ...] = ("random", "gold"),
    seed: int = 7,
) -> study.StudyConfig:
    """A compact but fully valid study: disjoint choice strings, balanced
    evaluation levels, one group per requested strategy kind."""
    control = [choice_instance(f"c{i}", 1, "ctl") for i in range(n_control)]
    evaluation = []
    for level in levels:
        for j in range(per_level):
            evaluation.append(choice_instance(f"e{level}x{j}", level, "ev"))
    instances = control + evaluation
    features = textfeat.token_count_table(instances)
    groups = []
    for kind in group_kinds:
        if kind == "heuristic":
            strategy = curriculum.Strategy(kind="heuristic", heuristic=textfeat.Heuristic("sen"))
        elif kind == "adaptive":
            strategy = curriculum.Strategy(
                kind="adaptive",
                regressor=estimators.RegressorSpec(kind="ridge"),
                features=features,
            )
        else:
            strategy = curriculum.Strategy(kind=kind, seed=seed)
        groups.append(study.GroupSpec(name=kind, strategy=strategy))
    return study.StudyConfig(
        study_id="test-study",
        instances=tuple(instances),
        control_ids=tuple(inst.id for inst in control),
        evaluation_ids=tuple(inst.id for inst in evaluation),
        groups=tuple(groups),
        consent_text="This session records your choices and timing.",
        seed=seed,
        features=features,
    )


@pytest.fixture
def four_arm_config() -> study.StudyConfig:
    """The four-strategy layout used by the larger flow tests."""
    return small_study_config(
        n_control=2,
        per_level=2,
        levels=(1, 2, 3),
        group_kinds=("random", "heuristic", "adaptive", "gold"),
    )
