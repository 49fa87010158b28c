"""Command-line entry point for the full pipeline.

One subcommand per procedure: offline evaluation (eval-static, tune,
loo-users), interactive simulation (simulate), data generation
(gen-synthetic), curriculum files (order), study analysis (analyze) and
the live study server (serve).

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import corpus, curriculum, estimators, simulate, textfeat
from .errors import AnncurError, DataError, ParseError
from .study import analyze_export, render_report

HEURISTIC_KINDS = ("sen", "fk", "external")
REGRESSOR_KINDS = ("ridge", "gp", "gbm")
ESTIMATOR_KINDS = HEURISTIC_KINDS + REGRESSOR_KINDS


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _reading(path: str, loader, *args, **kwargs):
    try:
        return loader(*args, **kwargs)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def _writing(path: str, writer, *args, **kwargs):
    try:
        return writer(*args, **kwargs)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _dataset_format(args) -> str:
    if args.format != "auto":
        return args.format
    return "tsv" if args.data.endswith(".tsv") else "jsonl"


def _load_dataset(args) -> corpus.Dataset:
    return _reading(args.data, corpus.load_timed_dataset, args.data, format=_dataset_format(args))


def _load_split(args) -> corpus.SplitAssignment:
    if not args.split:
        raise _UsageError("this command requires --split")
    return _reading(args.split, corpus.load_splits, args.split)


def _load_features(args) -> textfeat.FeatureTable:
    if not args.features:
        raise _UsageError(f"estimator {args.estimator!r} requires --features")
    return _reading(args.features, textfeat.load_feature_file, args.features)


def _build_estimator(args):
    """A Heuristic for sen/fk/external, a RegressorSpec otherwise."""
    name = args.estimator
    if name in HEURISTIC_KINDS:
        scores = None
        if name == "external":
            if not args.scores:
                raise _UsageError("estimator 'external' requires --scores")
            scores = _reading(args.scores, textfeat.load_score_file, args.scores)
        return textfeat.Heuristic(name, scores)
    return estimators.RegressorSpec(kind=name, ridge_alpha=args.alpha)


def _fmt(value, digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _metrics_row(label: str, m) -> str:
    return (
        f"{label:<16} mae={_fmt(m.mae)}  rmse={_fmt(m.rmse)}  "
        f"r2={_fmt(m.r2)}  rho={_fmt(m.rho)}"
    )


# -- subcommands ---------------------------------------------------------------


def cmd_eval_static(args) -> int:
    dataset = _load_dataset(args)
    split = _load_split(args)
    estimator = _build_estimator(args)
    features = None
    if args.estimator in REGRESSOR_KINDS:
        features = _load_features(args)
    metrics = simulate.run_static(dataset, split, estimator, features, eval_on=args.eval_on)
    print(_metrics_row(args.estimator, metrics))
    return 0


def _simulate_payload(args, seed: int) -> tuple:
    spec = estimators.RegressorSpec(kind=args.estimator, ridge_alpha=args.alpha)
    return (
        args.data,
        _dataset_format(args),
        args.split,
        args.features,
        estimators.spec_to_json(spec),
        seed,
        args.retrain_every,
        args.eval_every,
        args.eval_on,
        args.max_steps,
    )


def _simulate_one(payload: tuple) -> simulate.LearningCurve:
    (data, fmt, split, features, spec_obj, seed, retrain_every, eval_every, eval_on, max_steps) = payload
    dataset = corpus.load_timed_dataset(data, format=fmt)
    assignment = corpus.load_splits(split)
    table = textfeat.load_feature_file(features)
    spec = estimators.spec_from_json(spec_obj)
    return simulate.run_interactive(
        dataset,
        assignment,
        spec,
        table,
        seed=seed,
        retrain_every=retrain_every,
        eval_every=eval_every,
        eval_on=eval_on,
        max_steps=max_steps,
    )


def _seed_out_path(out: str, seed: int, multi: bool) -> str:
    if "{seed}" in out:
        return out.replace("{seed}", str(seed))
    if not multi:
        return out
    p = Path(out)
    return str(p.with_name(f"{p.stem}-s{seed}{p.suffix}"))


def cmd_simulate(args) -> int:
    if args.estimator not in REGRESSOR_KINDS:
        raise _UsageError(f"simulate needs a trainable estimator {REGRESSOR_KINDS}, got {args.estimator!r}")
    if not args.split:
        raise _UsageError("this command requires --split")
    if not args.features:
        raise _UsageError(f"estimator {args.estimator!r} requires --features")
    seeds = [args.seed + i for i in range(args.n_seeds)]
    payloads = [_simulate_payload(args, seed) for seed in seeds]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            curves = list(pool.map(_simulate_one, payloads))
    else:
        curves = [_simulate_one(p) for p in payloads]
    for seed, curve in zip(seeds, curves):
        if args.out:
            path = _seed_out_path(args.out, seed, multi=len(seeds) > 1)
            _writing(path, simulate.save_curve, curve, path)
        print(f"seed={seed} steps={len(curve.points)} final_rho={_fmt(curve.final_rho())}")
    return 0


def cmd_loo_users(args) -> int:
    if args.estimator not in REGRESSOR_KINDS:
        raise _UsageError(f"loo-users needs a trainable estimator {REGRESSOR_KINDS}, got {args.estimator!r}")
    dataset = _load_dataset(args)
    features = _load_features(args)
    spec = estimators.RegressorSpec(kind=args.estimator, ridge_alpha=args.alpha)
    result = simulate.run_loo_users(dataset, spec, features)
    for user in sorted(result.per_user):
        print(_metrics_row(user, result.per_user[user]))
    print(_metrics_row("mean", result.mean))
    return 0


def _parse_fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise _UsageError(f"--fractions must be comma-separated numbers, got {text!r}") from None


def cmd_gen_synthetic(args) -> int:
    dataset = simulate.gen_synthetic(
        args.n,
        seed=args.seed,
        beta0=args.beta0,
        beta1=args.beta1,
        noise_sigma=args.noise_sigma,
    )
    _writing(args.out, corpus.save_timed_dataset, dataset, args.out)
    print(f"wrote {len(dataset.instances)} instances to {args.out}")
    if args.features_out:
        table = textfeat.token_count_table(dataset.instances)
        _writing(args.features_out, textfeat.save_feature_file, table, args.features_out)
        print(f"wrote token-count features to {args.features_out}")
    if args.split_out:
        split = corpus.make_splits(dataset, _parse_fractions(args.fractions), seed=args.seed)
        _writing(args.split_out, corpus.save_splits, split, args.split_out)
        sizes = ", ".join(f"{name}={len(split.part(name))}" for name in ("train", "dev", "test"))
        print(f"wrote splits ({sizes}) to {args.split_out}")
    return 0


def cmd_order(args) -> int:
    dataset = _load_dataset(args)
    instances = list(dataset.instances)
    scores = None
    if args.strategy == "heuristic":
        if args.estimator not in HEURISTIC_KINDS:
            raise _UsageError(
                f"order --strategy heuristic needs --estimator from {HEURISTIC_KINDS}"
            )
        heuristic = _build_estimator(args)
        strategy = curriculum.Strategy(kind="heuristic", seed=args.seed, heuristic=heuristic)
        scores = {inst.id: heuristic.score(inst) for inst in instances}
    elif args.strategy == "gold":
        strategy = curriculum.Strategy(kind="gold", seed=args.seed)
        scores = {
            inst.id: float(inst.difficulty_level)
            for inst in instances
            if inst.difficulty_level is not None
        }
    else:
        strategy = curriculum.Strategy(kind="random", seed=args.seed)
    ordered = curriculum.ordering_for(instances, strategy)
    if args.out:
        _writing(args.out, curriculum.export_order, args.out, ordered, scores)
        print(f"wrote {len(ordered)} ranks to {args.out}")
    else:
        for rank, iid in enumerate(ordered, start=1):
            score = scores[iid] if scores else float(rank)
            print(f"{rank}\t{iid}\t{score}")
    return 0


def _read_export(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid json ({exc.msg})") from None
    return rows


def cmd_analyze(args) -> int:
    rows = _reading(args.data, _read_export, args.data)
    report = analyze_export(
        rows,
        control_count=args.control_count,
        cap_k=args.cap_k,
        hard_limit=args.hard_limit,
        alpha=args.alpha,
    )
    print(render_report(report))
    if args.out:
        def dump():
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2)
                fh.write("\n")
        _writing(args.out, dump)
        print(f"wrote report to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise _UsageError(f"--addr must look like host:port, got {args.addr!r}")
    log_dir = args.log_dir or os.environ.get("AC_LOG_DIR")
    app = create_app(log_dir=log_dir)
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return 0


def cmd_tune(args) -> int:
    dataset = _load_dataset(args)
    split = _load_split(args)
    features = _reading(args.features, textfeat.load_feature_file, args.features) if args.features else None
    if features is None:
        raise _UsageError("tune requires --features")
    eval_on = "dev" if split.part("dev") else "test"
    if eval_on == "test":
        print("note: split has no dev part; evaluating on test")
    grid = [
        ("ridge a=0.5", estimators.RegressorSpec(kind="ridge", ridge_alpha=0.5)),
        ("ridge a=1.0", estimators.RegressorSpec(kind="ridge", ridge_alpha=1.0)),
        ("gp dot+white", estimators.RegressorSpec(kind="gp")),
        ("gbm", estimators.RegressorSpec(kind="gbm")),
    ]
    results = []
    for label, spec in grid:
        started = time.perf_counter()
        metrics = simulate.run_static(dataset, split, spec, features, eval_on=eval_on)
        elapsed = time.perf_counter() - started
        results.append((label, metrics, elapsed))
        print(f"{_metrics_row(label, metrics)}  fit+eval={elapsed:.2f}s")
    best = min(results, key=lambda row: row[1].mae)
    print(f"best by mae: {best[0]}")
    if args.out:
        payload = [
            {
                "name": label,
                "mae": m.mae,
                "rmse": m.rmse,
                "r2": m.r2,
                "rho": m.rho,
                "seconds": elapsed,
            }
            for label, m, elapsed in results
        ]
        def dump():
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        _writing(args.out, dump)
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    if "data" in names:
        p.add_argument("--data", required=True, help="dataset file (jsonl or tsv)")
        p.add_argument("--format", choices=("auto", "jsonl", "tsv"), default="auto",
                       help="dataset format; auto picks by file extension")
    if "split" in names:
        p.add_argument("--split", help="split assignment file (jsonl)")
    if "features" in names:
        p.add_argument("--features", help="feature file (jsonl id/vector rows)")
    if "scores" in names:
        p.add_argument("--scores", help="external score file (jsonl id/score rows)")
    if "estimator" in names:
        p.add_argument("--estimator", choices=ESTIMATOR_KINDS, default="sen",
                       help="difficulty estimator")
        p.add_argument("--alpha", type=float, default=1.0,
                       help="ridge regularization strength")
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0, help="random seed")
    if "out" in names:
        p.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anncur", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval-static", help="train once on the train split, report test metrics")
    _add_common(p, "data", "split", "features", "scores", "estimator", "seed", "out")
    p.add_argument("--eval-on", choices=("dev", "test"), default="test")
    p.set_defaults(func=cmd_eval_static)

    p = sub.add_parser("simulate", help="interactive select/observe/retrain learning curves")
    _add_common(p, "data", "split", "features", "estimator", "seed", "out")
    p.add_argument("--retrain-every", type=int, default=1)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--eval-on", choices=("dev", "test"), default="test")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--n-seeds", type=int, default=1, help="run seeds seed..seed+n-1")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for multiple seeds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("loo-users", help="leave-one-annotator-out evaluation")
    _add_common(p, "data", "features", "estimator", "seed")
    p.set_defaults(func=cmd_loo_users)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic timed dataset")
    p.add_argument("--n", type=int, required=True, help="number of instances")
    _add_common(p, "seed")
    p.add_argument("--beta0", type=float, default=2.0, help="base time in seconds")
    p.add_argument("--beta1", type=float, default=0.1, help="seconds per token")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="gaussian time noise (s)")
    p.add_argument("--out", required=True, help="dataset output path (jsonl)")
    p.add_argument("--features-out", help="also write token-count features here")
    p.add_argument("--split-out", help="also write split assignments here")
    p.add_argument("--fractions", default="0.8,0.2",
                   help="split fractions for --split-out, e.g. 0.7,0.15,0.15")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("order", help="emit a precomputed curriculum (rank file)")
    _add_common(p, "data", "scores", "seed", "out")
    p.add_argument("--strategy", choices=("random", "heuristic", "gold"), default="heuristic")
    p.add_argument("--estimator", choices=HEURISTIC_KINDS, default="sen",
                   help="heuristic used when --strategy heuristic")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("analyze", help="statistical report over a study export")
    p.add_argument("--data", required=True, help="export file (ndjson rows)")
    p.add_argument("--control-count", type=int, default=10,
                   help="ranks <= this form the control block")
    p.add_argument("--cap-k", type=float, default=5.0, help="cap at mean + k * std")
    p.add_argument("--hard-limit", type=float, default=600.0,
                   help="ignore times above this (s) when fitting the cap")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level")
    p.add_argument("--out", help="also write the report as json here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the study service")
    p.add_argument("--addr", default="127.0.0.1:8000", help="host:port to bind")
    p.add_argument("--log-dir", default=None,
                   help="event log directory (falls back to $AC_LOG_DIR)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("tune", help="compare estimators on a dev split")
    _add_common(p, "data", "split", "features", "out")
    p.set_defaults(func=cmd_tune)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AnncurError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
