"""``fundcat`` command line.

Subcommands: generate, train, gridsearch, evaluate, predict, report. Every
command writes a run manifest (argv, resolved options, seeds, input hashes,
outputs) next to its outputs.

Exit codes: 0 ok, 2 usage, 3 data or schema error, 4 numeric failure,
5 missing or unreadable file, 6 rejected model artifact.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import __version__
from ._io import atomic_open, file_sha256
from ._kernels import BACKEND
from .artifact import ArtifactError, load_model, save_model
from .neural import DivergenceError
from .pipeline import (
    DEFAULT_GRID,
    PipelineConfig,
    evaluate_artifact,
    group_importances,
    model_importances,
    read_universe,
    run_grid_search,
    top_k_predictions,
    train_pipeline,
)
from .report import emit_report, write_history_csv, write_importance_csv, write_json, write_metrics_json
from .schema import FundUniverse, IngestError
from .synthgen import PRESETS, generate_universe, parse_confusable, preset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5
EXIT_ARTIFACT = 6

log = logging.getLogger("fundcat")


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1), got {text}")
    return v


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="fund-universe CSV")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--test-frac", type=_fraction, default=0.25)
    p.add_argument("--min-count", type=int, default=3, help="drop categories with fewer members")
    p.add_argument("--include-fund-type", action="store_true", help="one-hot fund_type as a feature")
    p.add_argument("--scale-on-all", action="store_true",
                   help="fit min-max statistics on all rows instead of the training split")
    p.add_argument("--no-class-weights", dest="class_weighted", action="store_false",
                   help="train trees without balanced class weights")


def _tree_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--criterion", choices=("gini", "entropy"), default="gini")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--n-estimators", type=int, default=100)
    p.add_argument("--no-bootstrap", dest="bootstrap", action="store_false")
    p.add_argument("--features-per-split", type=int, default=None,
                   help="features inspected per node (forest default: ceil(sqrt(d)))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundcat", description="Fund categorization from holdings data.")
    parser.add_argument("--version", action="version", version=f"fundcat {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic fund universe")
    g.add_argument("--preset", choices=sorted(PRESETS), default="paper-shape")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None, help="defaults to the preset seed")
    g.add_argument("--n-funds", type=int)
    g.add_argument("--n-categories", type=int)
    g.add_argument("--separability", type=float)
    g.add_argument("--confusable", action="append", default=[], metavar="A:B",
                   help="category pair (index or name) sharing archetypes except benchmarks")
    g.add_argument("--mask-confusable-benchmarks", action="store_true",
                   help="leave benchmark cells of confusable categories empty")

    t = sub.add_parser("train", help="fit a model and save it as an artifact")
    _data_flags(t)
    t.add_argument("--model", choices=("dt", "rf", "mlp"), default="rf")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--dump-matrix", action="store_true", help="also write the train/test design matrices")
    _tree_flags(t)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--holdout", type=_fraction, default=0.10)
    t.add_argument("--class-weighted-loss", action="store_true")

    s = sub.add_parser("gridsearch", help="cross-validated search over forest size and criterion")
    _data_flags(s)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--estimators", type=_int_list, default=DEFAULT_GRID[0])
    s.add_argument("--criteria", type=_str_list, default=DEFAULT_GRID[1])
    s.add_argument("--score", default="f1_weighted")
    s.add_argument("--no-bootstrap", dest="bootstrap", action="store_false")
    s.add_argument("--features-per-split", type=int, default=None)

    for name, helptext in (("evaluate", "score a saved model, writing metrics.json"),
                           ("report", "score a saved model, writing every report file")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--model", required=True, help="artifact written by train")
        e.add_argument("--data", required=True)
        e.add_argument("--out-dir", default=None, help="defaults to the artifact's directory")
        e.add_argument("--all-rows", action="store_true", help="score every row, not only the held-out test rows")
        e.add_argument("--k", type=_int_list, default=(1, 3), help="top-k accuracies to report")
        if name == "report":
            e.add_argument("--svg", action="store_true", help="also render ROC and confusion SVGs")

    p = sub.add_parser("predict", help="rank categories for each fund")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV in the ingest layout; global_category optional")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    return parser


def _write_manifest(path, args, argv, *, inputs, outputs, seeds, config=None, extra=None) -> str:
    manifest = {
        "command": ["fundcat", *argv],
        "subcommand": args.command,
        "options": {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())},
        "config": config,
        "seeds": seeds,
        "inputs": {os.fspath(p): file_sha256(p) for p in inputs},
        "outputs": [os.fspath(p) for p in outputs],
        "version": __version__,
        "split_backend": BACKEND,
        **(extra or {}),
    }
    return write_json(manifest, path)


def _pipeline_config(args, model: str = "rf") -> PipelineConfig:
    kw = dict(
        model=model, seed=args.seed, test_frac=args.test_frac, min_count=args.min_count,
        include_fund_type=args.include_fund_type, scale_on_all=args.scale_on_all,
        class_weighted=args.class_weighted, bootstrap=args.bootstrap,
        features_per_split=args.features_per_split,
    )
    if args.command == "train":
        kw.update(criterion=args.criterion, max_depth=args.max_depth, n_estimators=args.n_estimators,
                  epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, patience=args.patience,
                  holdout=args.holdout, class_weighted_loss=args.class_weighted_loss)
    return PipelineConfig(**kw)


def cmd_generate(args, argv) -> int:
    overrides = {k: getattr(args, k) for k in ("n_funds", "n_categories", "separability")
                 if getattr(args, k) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    n_cat = overrides.get("n_categories", PRESETS[args.preset].n_categories)
    try:
        pairs = parse_confusable(args.confusable, n_cat)
        config = preset(args.preset, confusable=pairs,
                        mask_confusable_benchmarks=args.mask_confusable_benchmarks, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    universe = generate_universe(config)
    universe.to_csv(args.out)
    log.info("wrote %d funds in %d categories to %s", len(universe), len(universe.category_vocab), args.out)
    _write_manifest(f"{args.out}.manifest.json", args, argv, inputs=[], outputs=[args.out],
                    seeds={"generator": config.seed},
                    config={k: v for k, v in vars(config).items() if k != "schema"})
    return EXIT_OK


def cmd_train(args, argv) -> int:
    config = _pipeline_config(args, args.model)
    universe = read_universe(args.data, config.min_count)
    artifact, data = train_pipeline(universe, config, log=log.info)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "model.json")
    outputs = [path]
    checksum = save_model(artifact, path)
    log.info("%s model saved to %s (checksum %s)", config.model, path, checksum[:12])

    imp = model_importances(artifact.model)
    if imp is not None:
        names = [c.name for c in artifact.preprocessor.layout]
        outputs.append(write_importance_csv(names, imp, os.path.join(args.out_dir, "importance.csv"),
                                            group_importances(artifact.model)))
    if config.model == "mlp":
        outputs.append(write_history_csv(artifact.model.history, os.path.join(args.out_dir, "history.csv")))
    if args.dump_matrix:
        for name, dm in (("train_matrix.csv", data.train), ("test_matrix.csv", data.test)):
            dm.dump_csv(os.path.join(args.out_dir, name))
            outputs.append(os.path.join(args.out_dir, name))
    _write_manifest(os.path.join(args.out_dir, "manifest_train.json"), args, argv,
                    inputs=[args.data], outputs=outputs, config=config.to_dict(),
                    seeds={"split": config.seed, "model": config.seed},
                    extra={"artifact_checksum": checksum})
    return EXIT_OK


def cmd_gridsearch(args, argv) -> int:
    config = _pipeline_config(args)
    if args.folds < 2:
        raise UsageError("--folds must be >= 2")
    universe = read_universe(args.data, config.min_count)
    try:
        report = run_grid_search(universe, config, (args.estimators, args.criteria), args.folds, args.score)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out_dir, exist_ok=True)
    path = write_json(report.to_dict(), os.path.join(args.out_dir, "gridsearch.json"))
    for row in report.rows:
        log.info("n_estimators=%d criterion=%s mean %s=%.4f", row.n_estimators, row.criterion,
                 args.score, row.mean_score)
    log.info("best: n_estimators=%d criterion=%s", report.best.n_estimators, report.best.criterion)
    _write_manifest(os.path.join(args.out_dir, "manifest_gridsearch.json"), args, argv,
                    inputs=[args.data], outputs=[path], config=config.to_dict(), seeds={"split": config.seed})
    return EXIT_OK


def _load_for_scoring(args):
    artifact = load_model(args.model)
    min_count = artifact.metadata.get("config", {}).get("min_count", 3)
    universe = read_universe(args.data, min_count)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.model))
    os.makedirs(out_dir, exist_ok=True)
    return artifact, universe, out_dir


def cmd_evaluate(args, argv) -> int:
    artifact, universe, out_dir = _load_for_scoring(args)
    report = evaluate_artifact(artifact, universe, "all" if args.all_rows else "test", ks=args.k)
    path = write_metrics_json(report, artifact.categories, os.path.join(out_dir, "metrics.json"))
    log.info("accuracy %.4f  f1_weighted %.4f  auc_micro %.4f  auc_macro %.4f",
             report.accuracy, report.f1_weighted, report.auc_micro, report.auc_macro)
    _write_manifest(os.path.join(out_dir, "manifest_evaluate.json"), args, argv,
                    inputs=[args.model, args.data], outputs=[path], seeds={})
    return EXIT_OK


def cmd_report(args, argv) -> int:
    artifact, universe, out_dir = _load_for_scoring(args)
    report = evaluate_artifact(artifact, universe, "all" if args.all_rows else "test", ks=args.k)
    outputs = emit_report(report, artifact.categories, out_dir, svg=args.svg)
    imp = model_importances(artifact.model)
    if imp is not None:
        names = [c.name for c in artifact.preprocessor.layout]
        outputs.append(write_importance_csv(names, imp, os.path.join(out_dir, "importance.csv"),
                                            group_importances(artifact.model)))
    if artifact.model_kind == "mlp":
        outputs.append(write_history_csv(artifact.model.history, os.path.join(out_dir, "history.csv")))
    log.info("wrote %d report files to %s", len(outputs), out_dir)
    _write_manifest(os.path.join(out_dir, "manifest_report.json"), args, argv,
                    inputs=[args.model, args.data], outputs=outputs, seeds={})
    return EXIT_OK


def cmd_predict(args, argv) -> int:
    artifact = load_model(args.model)
    universe = read_universe(args.data, min_count=1, require_label=False)
    if universe.labeled:
        # Ranking ignores labels, so categories unseen at training time are fine here.
        universe = FundUniverse(universe.schema, universe.columns, universe.fund_ids, universe.fund_types,
                                None, universe.numeric, universe.categorical)
    ranked = top_k_predictions(artifact, universe, args.k)
    with atomic_open(args.out, "w") as fh:
        w = csv.writer(fh)
        header = ["fund_id"]
        for r in range(1, args.k + 1):
            header += [f"category_{r}", f"probability_{r}"]
        w.writerow(header)
        for fid, top in ranked:
            row = [fid]
            for name, prob in top:
                row += [name, repr(prob)]
            w.writerow(row)
    log.info("ranked %d funds into %s", len(ranked), args.out)
    _write_manifest(f"{args.out}.manifest.json", args, argv, inputs=[args.model, args.data],
                    outputs=[args.out], seeds={})
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"fundcat {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArtifactError as exc:
        print(f"fundcat {args.command}: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except IngestError as exc:
        print(f"fundcat {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"fundcat {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FloatingPointError) as exc:
        print(f"fundcat {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"fundcat {args.command}: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
