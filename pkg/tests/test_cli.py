"""Command line behavior: exit codes, file outputs, and determinism.

Everything runs main() in process with temporary files; no subprocesses.
"""

import json

import pytest

from anncur import corpus
from anncur.cli import main
from anncur.corpus import Dataset, Instance, TimedRecord


@pytest.fixture
def pipeline(tmp_path):
    """A generated dataset with features and a train/dev/test split."""
    paths = {
        "data": str(tmp_path / "data.jsonl"),
        "features": str(tmp_path / "features.jsonl"),
        "split": str(tmp_path / "split.jsonl"),
    }
    code = main(
        [
            "gen-synthetic",
            "--n", "40",
            "--seed", "3",
            "--out", paths["data"],
            "--features-out", paths["features"],
            "--split-out", paths["split"],
            "--fractions", "0.7,0.15,0.15",
        ]
    )
    assert code == 0
    return paths


def test_gen_synthetic_writes_all_requested_files(tmp_path, capsys):
    data = str(tmp_path / "data.jsonl")
    code = main(
        [
            "gen-synthetic", "--n", "40", "--seed", "3",
            "--out", data,
            "--features-out", str(tmp_path / "features.jsonl"),
            "--split-out", str(tmp_path / "split.jsonl"),
            "--fractions", "0.7,0.15,0.15",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "wrote 40 instances" in out
    assert "token-count features" in out
    assert "train=28, dev=6, test=6" in out
    dataset = corpus.load_timed_dataset(data)
    assert len(dataset.instances) == 40


def test_gen_synthetic_rejects_bad_parameters(tmp_path):
    assert main(["gen-synthetic", "--n", "0", "--out", str(tmp_path / "x.jsonl")]) == 2
    assert main(["gen-synthetic", "--out", str(tmp_path / "x.jsonl")]) == 1  # --n missing


def test_eval_static_heuristic(pipeline, capsys):
    code = main(["eval-static", "--data", pipeline["data"], "--split", pipeline["split"]])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("sen")
    assert "rho=" in out and "mae=" in out


def test_eval_static_regressor_with_features(pipeline, capsys):
    code = main(
        [
            "eval-static",
            "--data", pipeline["data"],
            "--split", pipeline["split"],
            "--estimator", "ridge",
            "--alpha", "0.000001",
            "--features", pipeline["features"],
        ]
    )
    assert code == 0
    assert "rho=1.0000" in capsys.readouterr().out


@pytest.mark.parametrize(
    "extra",
    [
        [],  # missing --split
        ["--split", "SPLIT", "--estimator", "ridge"],  # missing --features
        ["--split", "SPLIT", "--estimator", "external"],  # missing --scores
    ],
)
def test_eval_static_usage_errors(pipeline, extra):
    argv = ["eval-static", "--data", pipeline["data"]]
    argv += [pipeline["split"] if part == "SPLIT" else part for part in extra]
    assert main(argv) == 1


def test_missing_input_file_is_a_data_error(tmp_path, capsys):
    code = main(["eval-static", "--data", str(tmp_path / "absent.jsonl"), "--split", "x"])
    assert code == 2
    assert "cannot read" in capsys.readouterr().err


def test_simulate_writes_deterministic_curves(pipeline, tmp_path, capsys):
    base = [
        "simulate",
        "--data", pipeline["data"],
        "--split", pipeline["split"],
        "--features", pipeline["features"],
        "--estimator", "ridge",
        "--seed", "5",
        "--max-steps", "10",
    ]
    first = str(tmp_path / "c1.jsonl")
    second = str(tmp_path / "c2.jsonl")
    assert main(base + ["--out", first]) == 0
    assert main(base + ["--out", second]) == 0
    assert open(first, "rb").read() == open(second, "rb").read()
    out = capsys.readouterr().out
    assert "seed=5 steps=10 final_rho=" in out


def test_simulate_multiple_seeds_fan_out_files(pipeline, tmp_path):
    out = str(tmp_path / "curve-{seed}.jsonl")
    code = main(
        [
            "simulate",
            "--data", pipeline["data"],
            "--split", pipeline["split"],
            "--features", pipeline["features"],
            "--estimator", "ridge",
            "--seed", "2",
            "--n-seeds", "2",
            "--max-steps", "5",
            "--out", out,
        ]
    )
    assert code == 0
    assert (tmp_path / "curve-2.jsonl").exists()
    assert (tmp_path / "curve-3.jsonl").exists()


def test_simulate_suffixes_seed_without_placeholder(pipeline, tmp_path):
    code = main(
        [
            "simulate",
            "--data", pipeline["data"],
            "--split", pipeline["split"],
            "--features", pipeline["features"],
            "--estimator", "gbm",
            "--seed", "1",
            "--n-seeds", "2",
            "--max-steps", "4",
            "--out", str(tmp_path / "curve.jsonl"),
        ]
    )
    assert code == 0
    assert (tmp_path / "curve-s1.jsonl").exists()
    assert (tmp_path / "curve-s2.jsonl").exists()


def test_simulate_rejects_heuristic_estimators(pipeline):
    code = main(
        [
            "simulate",
            "--data", pipeline["data"],
            "--split", pipeline["split"],
            "--features", pipeline["features"],
            "--estimator", "sen",
        ]
    )
    assert code == 1


def test_loo_users_requires_multiple_annotators(pipeline):
    code = main(
        [
            "loo-users",
            "--data", pipeline["data"],
            "--features", pipeline["features"],
            "--estimator", "ridge",
        ]
    )
    assert code == 2  # the synthetic dataset has a single simulated annotator


def test_loo_users_reports_per_user_and_mean(tmp_path, capsys):
    instances = tuple(Instance(id=f"i{k}", text=" ".join(["w"] * (k + 1))) for k in range(8))
    records = tuple(
        TimedRecord(instance_id=inst.id, annotator_id=user, label="x", time_seconds=1.0 + 0.2 * (k + 1))
        for k, inst in enumerate(instances)
        for user in ("ann1", "ann2")
    )
    dataset = Dataset(instances=instances, records=records, name="pair")
    data = tmp_path / "pair.jsonl"
    corpus.save_timed_dataset(dataset, str(data))
    from anncur import textfeat

    feats = tmp_path / "pair-features.jsonl"
    textfeat.save_feature_file(textfeat.token_count_table(instances), str(feats))
    code = main(["loo-users", "--data", str(data), "--features", str(feats), "--estimator", "ridge"])
    assert code == 0
    out = capsys.readouterr().out
    assert "ann1" in out and "ann2" in out and "mean" in out


def test_order_writes_a_rank_file(pipeline, tmp_path, capsys):
    out = str(tmp_path / "order.jsonl")
    code = main(["order", "--data", pipeline["data"], "--estimator", "sen", "--out", out])
    assert code == 0
    rows = [json.loads(line) for line in open(out)]
    assert len(rows) == 40
    assert [r["rank"] for r in rows] == list(range(1, 41))
    scores = [r["score"] for r in rows]
    assert scores == sorted(scores)


def test_order_prints_to_stdout_without_out(pipeline, capsys):
    code = main(["order", "--data", pipeline["data"], "--strategy", "random", "--seed", "4"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 40
    assert lines[0].split("\t")[0] == "1"


def test_order_random_is_deterministic(pipeline, capsys):
    main(["order", "--data", pipeline["data"], "--strategy", "random", "--seed", "4"])
    first = capsys.readouterr().out
    main(["order", "--data", pipeline["data"], "--strategy", "random", "--seed", "4"])
    assert capsys.readouterr().out == first


def test_order_gold_needs_difficulty_levels(pipeline):
    code = main(["order", "--data", pipeline["data"], "--strategy", "gold"])
    assert code == 2  # synthetic instances carry no difficulty


def test_order_restricts_estimators_to_heuristics(pipeline):
    assert main(["order", "--data", pipeline["data"], "--estimator", "ridge"]) == 1


def export_file(tmp_path, n_ranks=12):
    rows = []
    for participant, group in (("p1", "g1"), ("p2", "g2")):
        for rank in range(1, n_ranks + 1):
            rows.append(
                {
                    "participant": participant,
                    "group": group,
                    "rank": rank,
                    "instance_id": f"i{rank}",
                    "difficulty": 1 + (rank % 2),
                    "choice_order": ["a", "b"],
                    "choice": "a",
                    "correct": rank % 3 != 0,
                    "elapsed_ms": 1000 * rank,
                }
            )
    path = tmp_path / "export.ndjson"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


def test_analyze_prints_report_and_writes_json(tmp_path, capsys):
    out = str(tmp_path / "report.json")
    code = main(
        ["analyze", "--data", export_file(tmp_path), "--control-count", "2", "--out", out]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "rows analyzed: 24" in printed
    report = json.load(open(out))
    assert report["n_rows"] == 24
    assert set(report["groups"]) == {"g1", "g2"}


def test_analyze_rejects_malformed_rows(tmp_path, capsys):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"participant": "p"}\n')
    assert main(["analyze", "--data", str(path)]) == 2
    assert "missing field" in capsys.readouterr().err


def test_analyze_rejects_invalid_json_lines(tmp_path, capsys):
    path = tmp_path / "bad.ndjson"
    path.write_text("{broken\n")
    assert main(["analyze", "--data", str(path)]) == 2
    assert "invalid json" in capsys.readouterr().err


def test_tune_compares_the_grid(pipeline, tmp_path, capsys):
    out = str(tmp_path / "tune.json")
    code = main(
        [
            "tune",
            "--data", pipeline["data"],
            "--split", pipeline["split"],
            "--features", pipeline["features"],
            "--out", out,
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "ridge a=0.5" in printed and "gp dot+white" in printed and "gbm" in printed
    assert "best by mae:" in printed
    assert "note:" not in printed  # the pipeline split has a dev part
    rows = json.load(open(out))
    assert len(rows) == 4 and all("mae" in r for r in rows)


def test_tune_notes_missing_dev_split(pipeline, tmp_path, capsys):
    two_way = str(tmp_path / "split2.jsonl")
    assert main(
        [
            "gen-synthetic", "--n", "30", "--seed", "8",
            "--out", str(tmp_path / "d2.jsonl"),
            "--features-out", str(tmp_path / "f2.jsonl"),
            "--split-out", two_way,
        ]
    ) == 0
    code = main(
        [
            "tune",
            "--data", str(tmp_path / "d2.jsonl"),
            "--split", two_way,
            "--features", str(tmp_path / "f2.jsonl"),
        ]
    )
    assert code == 0
    assert "note: split has no dev part" in capsys.readouterr().out


def test_serve_validates_the_address():
    assert main(["serve", "--addr", "nocolon"]) == 1
    assert main(["serve", "--addr", "host:notaport"]) == 1


@pytest.mark.parametrize(
    "command",
    ["eval-static", "simulate", "loo-users", "gen-synthetic", "order", "analyze", "serve", "tune"],
)
def test_help_exits_cleanly(command, capsys):
    assert main([command, "--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_unknown_subcommand_is_a_usage_error():
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
