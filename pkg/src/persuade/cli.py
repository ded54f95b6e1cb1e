"""Single command-line entry point for the whole pipeline.

    persuade <subcommand> [options]

Subcommands: import, augment, assemble, train, predict, tune, ensemble,
evaluate, bleu, analyze, humaneval, export.

Every run writes a manifest next to its outputs (tool version, config hash,
seeds, input/output digests) so a rerun with identical inputs can be checked
byte-for-byte.  Exit codes: 0 success, 1 usage error, 2 data/validation
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

import persuade
from persuade import analysis, augment, baseline, ensemble, metrics, recipes, taxonomy
from persuade.corpus import (
    Corpus,
    dump_jsonl,
    dump_predictions,
    dump_task_labels,
    import_corpus,
    load_jsonl,
    load_predictions,
)
from persuade.errors import ConfigError, PersuadeError

ENV_PREFIX = "PERSUADE"


class CliParser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(f"{self.prog}: error: {message}")


class SystemExit2(Exception):
    """Usage error carrying the message to print (exit code 1)."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out: Path,
    subcommand: str,
    params: dict,
    inputs: list[Path],
    outputs: list[Path],
) -> Path:
    """Deterministic run manifest; no timestamps, so reruns are byte-identical."""
    params_json = json.dumps(params, sort_keys=True, ensure_ascii=False, default=str)
    manifest = {
        "tool": "persuade",
        "version": persuade.__version__,
        "subcommand": subcommand,
        "params": json.loads(params_json),
        "config_hash": hashlib.sha256(params_json.encode("utf-8")).hexdigest(),
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs))},
        "outputs": {str(p.name): _sha256(p) for p in sorted(set(outputs))},
    }
    manifest_path = out / "manifest.json" if out.is_dir() else Path(f"{out}.manifest.json")
    with manifest_path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return manifest_path


# --- run configuration ---------------------------------------------------------


def load_run_config(path: str | Path) -> dict[str, dict[str, str]]:
    """Flat sectioned config with environment overrides.

    Any key may be overridden through PERSUADE_<SECTION>_<KEY>.  The [run]
    section must carry a seed; every *path/*file/*dir value must exist.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read run config {path}")
    config: dict[str, dict[str, str]] = {
        section: dict(parser[section]) for section in parser.sections()
    }
    for section in config:
        for key in list(config[section]):
            env_key = f"{ENV_PREFIX}_{section}_{key}".upper().replace("-", "_")
            if env_key in os.environ:
                config[section][key] = os.environ[env_key]
    if "run" not in config or "seed" not in config["run"]:
        raise ConfigError(f"{path}: run config needs [run] seed")
    int(config["run"]["seed"])
    for section, entries in config.items():
        for key, value in entries.items():
            if key.endswith(("path", "file", "dir")) and not Path(value).exists():
                raise ConfigError(f"{path}: [{section}] {key} = {value}: no such path")
    return config


def _load_gold_dir(path: Path) -> dict[str, Corpus]:
    gold = {}
    for child in sorted(path.glob("*.jsonl")):
        lang = child.stem
        taxonomy.parse_language(lang)
        gold[lang] = load_jsonl(child)
    if not gold:
        raise PersuadeError(f"no <language>.jsonl corpora found in {path}")
    return gold


def _make_backend(spec: str, seed: int) -> augment.TranslatorBackend:
    if spec.startswith("bridge:"):
        argv = spec.split(":", 1)[1].split()
        return augment.BridgeBackend(argv)
    return augment.MockTranslator.from_spec(spec, seed=seed)


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommand handlers ---------------------------------------------------------


def cmd_import(args) -> int:
    out = Path(args.out)
    if args.format == "task-labels" and (not args.language or not args.texts):
        raise ConfigError("task-labels import needs --language and --texts")
    corpus = import_corpus(args.input, args.format, args.language, args.texts, args.spans)
    dump_jsonl(corpus, out)
    inputs = [Path(args.input)]
    inputs += [Path(p) for p in (args.texts, args.spans) if p]
    write_manifest(out, "import", _params(args), inputs, [out])
    print(f"imported {len(corpus)} paragraphs -> {out}")
    return 0


def cmd_export(args) -> int:
    if args.what == "taxonomy":
        out = _out_dir(args.out)
        techniques_path = out / "techniques.tsv"
        coverage_path = out / "coverage.tsv"
        techniques_path.write_text(taxonomy.export_techniques_tsv(), encoding="utf-8")
        coverage_path.write_text(taxonomy.export_coverage_tsv(), encoding="utf-8")
        write_manifest(out, "export", _params(args), [], [techniques_path, coverage_path])
        print(f"wrote {techniques_path} and {coverage_path}")
        return 0
    corpus = load_jsonl(args.input)
    out = Path(args.out)
    if args.format == "task-labels":
        dump_task_labels(corpus, out)
    else:
        dump_jsonl(corpus, out)
    write_manifest(out, "export", _params(args), [Path(args.input)], [out])
    print(f"exported {len(corpus)} paragraphs -> {out}")
    return 0


def cmd_augment(args) -> int:
    corpus = load_jsonl(args.input)
    backend = _make_backend(args.backend, args.seed)
    out = _out_dir(args.out)
    produced = Corpus()
    ledger = augment.AugmentationLedger()

    try:
        if args.pipeline == "spans":
            additions = recipes.span_only_additions(corpus)
            produced = Corpus(additions)
        elif args.pipeline == "translation":
            targets = args.targets or list(taxonomy.LANGUAGES)
            for target in targets:
                part, part_ledger = augment.translate_corpus(
                    corpus, target, backend, jobs=args.jobs
                )
                produced = produced.merge(part)
                ledger = ledger.merge(part_ledger)
        else:
            pivots = args.pivots or list(taxonomy.LANGUAGES)
            for pivot in pivots:
                part, part_ledger = augment.back_translate_corpus(
                    corpus, pivot, backend, jobs=args.jobs
                )
                produced = produced.merge(part)
                ledger = ledger.merge(part_ledger)
    finally:
        if isinstance(backend, augment.BridgeBackend):
            backend.close()

    corpus_path = out / "corpus.jsonl"
    ledger_path = out / "ledger.jsonl"
    dump_jsonl(produced, corpus_path)
    ledger.dump_jsonl(ledger_path)
    write_manifest(out, "augment", _params(args), [Path(args.input)], [corpus_path, ledger_path])
    print(
        f"augmented {len(produced)} paragraphs "
        f"(skipped {ledger.skipped_uncovered} uncovered, "
        f"{ledger.skipped_capability} beyond backend capability, "
        f"{len(ledger.failures)} failures) -> {corpus_path}"
    )
    return 0


def cmd_assemble(args) -> int:
    gold = _load_gold_dir(Path(args.gold))
    pool_parts = [load_jsonl(p) for p in args.pool]
    recipe = recipes.DatasetRecipe(
        name=args.recipe,
        low_frequency_only=args.low_frequency,
        family_group=frozenset(taxonomy.TRAINING_LANGUAGES) if args.group_families else None,
    )
    assembled = recipes.assemble_grouped(recipe, gold, pool_parts)
    out = _out_dir(args.out)
    outputs = []
    for key in sorted(assembled):
        path = out / f"{key}.jsonl"
        dump_jsonl(assembled[key], path)
        outputs.append(path)
        print(f"{args.recipe}[{key}]: {len(assembled[key])} paragraphs -> {path}")
    inputs = sorted(Path(args.gold).glob("*.jsonl")) + [Path(p) for p in args.pool]
    write_manifest(out, "assemble", _params(args), inputs, outputs)
    return 0


def cmd_train(args) -> int:
    train_corpus = load_jsonl(args.train)
    dev_corpus = load_jsonl(args.dev)
    feature_config = baseline.FeatureConfig(
        ngram_min=args.ngram_min, ngram_max=args.ngram_max, hash_dim=args.hash_dim
    )
    train_config = baseline.TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        selection_metric=args.selection,
    )
    model = baseline.train(train_corpus, dev_corpus, feature_config, train_config)
    out = Path(args.out)
    baseline.save_model(model, out)
    write_manifest(out, "train", _params(args), [Path(args.train), Path(args.dev)], [out])
    print(
        f"trained {len(train_corpus)} paragraphs, best epoch "
        f"{model.metadata.best_epoch}/{model.metadata.epochs_run}, "
        f"dev {train_config.selection_metric}-F1 {model.metadata.best_dev_micro_f1:.4f} -> {out}"
    )
    return 0


def cmd_predict(args) -> int:
    model = baseline.load_model(args.model)
    corpus = load_jsonl(args.input)
    matrix = baseline.predict_scores(model, corpus)
    out = Path(args.out)
    baseline.write_scores(matrix, out)
    write_manifest(out, "predict", _params(args), [Path(args.model), Path(args.input)], [out])
    print(f"scored {len(matrix)} paragraphs -> {out}")
    return 0


def cmd_tune(args) -> int:
    dev = load_jsonl(args.dev)
    scores = baseline.read_scores(args.scores)
    theta = ensemble.tune_threshold(scores, dev)
    curve = dict(ensemble.threshold_curve(scores, dev))
    print(f"theta={theta:.1f} micro_f1={curve[theta]:.6f}")
    if args.out:
        out = Path(args.out)
        with out.open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(
                {
                    "threshold": theta,
                    "micro_f1": curve[theta],
                    "curve": [[t, f] for t, f in sorted(curve.items())],
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        write_manifest(out, "tune", _params(args), [Path(args.scores), Path(args.dev)], [out])
    return 0


def cmd_ensemble(args) -> int:
    config = ensemble.load_ensemble_config(args.config)
    corpus = load_jsonl(args.corpus)
    config_dir = Path(args.config).parent
    member_scores = {}
    score_paths = []
    for member in config.members:
        if not member.source:
            raise ConfigError(f"member {member.model_id!r} has no scores path")
        path = Path(member.source)
        if not path.is_absolute():
            path = config_dir / path
        score_paths.append(path)
        member_scores[member.model_id] = baseline.read_scores(path)

    if args.tune_voting:
        if not args.dev:
            raise ConfigError("--tune-voting needs --dev")
        dev = load_jsonl(args.dev)
        v = ensemble.tune_voting_threshold(config, member_scores, dev)
        print(f"voting_threshold={v}")
        config = ensemble.EnsembleConfig(
            members=config.members,
            thresholds=config.thresholds,
            heuristics=config.heuristics,
            voting_threshold=v,
        )

    pred = ensemble.ensemble_predict(config, member_scores, corpus)
    out = Path(args.out)
    dump_predictions(pred, out, order=corpus.ids())
    inputs = [Path(args.config), Path(args.corpus)] + score_paths
    if args.dev:
        inputs.append(Path(args.dev))
    write_manifest(out, "ensemble", _params(args), inputs, [out])
    print(f"ensemble predictions for {len(corpus)} paragraphs -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    gold = load_jsonl(args.gold)
    pred = load_predictions(args.pred)
    report = metrics.f1_multilabel(gold, pred)
    out = Path(args.out)
    report.save(out)
    per_label_path = Path(args.per_label) if args.per_label else Path(f"{out}.per_label.tsv")
    per_label_path.write_text(report.per_label_tsv(), encoding="utf-8")
    write_manifest(out, "evaluate", _params(args), [Path(args.gold), Path(args.pred)], [out, per_label_path])
    print(f"micro_f1={report.micro_f1:.6f} macro_f1={report.macro_f1:.6f} -> {out}")
    return 0


def cmd_bleu(args) -> int:
    originals = load_jsonl(args.originals)
    paraphrases = load_jsonl(args.paraphrases)
    ledger = augment.AugmentationLedger.load_jsonl(args.ledger)
    report = metrics.bleu_by_pair(ledger, originals, paraphrases)
    out = Path(args.out)
    out.write_text(report.pairs_tsv(), encoding="utf-8")
    outputs = [out]
    if args.avg_out:
        avg_path = Path(args.avg_out)
        avg_path.write_text(report.averages_tsv(), encoding="utf-8")
        outputs.append(avg_path)
    write_manifest(
        out,
        "bleu",
        _params(args),
        [Path(args.originals), Path(args.paraphrases), Path(args.ledger)],
        outputs,
    )
    for (source, pivot), result in sorted(report.pair_scores.items()):
        print(f"{source}2{pivot}2{source}\tBLEU-4 {result.score(4):.2f}")
    return 0


def cmd_analyze(args) -> int:
    runs_dir = Path(args.runs)
    eval_runs = {}
    run_files = sorted(runs_dir.glob("*.json"))
    if not run_files:
        raise PersuadeError(f"no evaluation reports (*.json) in {runs_dir}")
    for path in run_files:
        stem = path.stem
        if "__" not in stem:
            raise PersuadeError(
                f"{path}: report files must be named <training_set>__<language>.json"
            )
        training_set, language = stem.rsplit("__", 1)
        taxonomy.parse_language(language)
        eval_runs[(training_set, language)] = metrics.EvalReport.load(path)

    table = analysis.build_table(eval_runs)
    spec = analysis.ModelSpec(tuple(args.terms.split(","))) if args.terms else analysis.FULL_MODEL
    anova = analysis.anova_sequential(table, spec)
    fit = analysis.fit_ols(table, spec)

    out = _out_dir(args.out)
    anova_tsv = out / "anova.tsv"
    anova_json = out / "anova.json"
    anova_tsv.write_text(anova.to_tsv(), encoding="utf-8")
    analysis.save_anova_json(anova, anova_json)
    outputs = [anova_tsv, anova_json]
    if "trainingSet:label" in spec.terms:
        effects_path = out / "effects.csv"
        effects_path.write_text(
            analysis.effects_csv(analysis.effects(fit)), encoding="utf-8"
        )
        outputs.append(effects_path)
    write_manifest(out, "analyze", _params(args), run_files, outputs)
    print(
        f"n={len(table)} R2={anova.r_squared:.4f} adjR2={anova.adj_r_squared:.4f} "
        f"explained={anova.explained_variance():.2f}% -> {out}"
    )
    return 0


def cmd_humaneval(args) -> int:
    records = analysis.read_ratings_csv(args.ratings)
    report = analysis.aggregate_ratings(records)
    out = Path(args.out)
    out.write_text(analysis.ratings_report_csv(report), encoding="utf-8")
    write_manifest(out, "humaneval", _params(args), [Path(args.ratings)], [out])
    print(f"aggregated {len(records)} ratings -> {out}")
    return 0


# --- parser ----------------------------------------------------------------------


def _params(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="persuade", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=persuade.__version__)
    parser.add_argument("--run-config", help="run config (INI) supplying defaults like seed and backend")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=CliParser)

    def common(p):
        p.add_argument("--seed", type=int, help="random seed (default 42, or [run] seed from --config)")
        p.add_argument("--jobs", type=int, help="parallel workers where supported")

    p = sub.add_parser("import", help="validate external data into canonical JSON-lines")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("canonical", "task-labels"), default="canonical")
    p.add_argument("--language", help="language code (task-labels format)")
    p.add_argument("--texts", help="text template TSV (task-labels format)")
    p.add_argument("--spans", help="optional span TSV (task-labels format)")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("export", help="emit taxonomy tables or corpora as TSV")
    p.add_argument("what", choices=("taxonomy", "corpus"))
    p.add_argument("--input", help="canonical corpus (what=corpus)")
    p.add_argument("--format", choices=("tsv", "task-labels", "canonical"), default="tsv")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("augment", help="translate / back-translate / extract spans")
    p.add_argument("--input", required=True, help="gold corpus (canonical JSON-lines)")
    p.add_argument("--pipeline", choices=("translation", "back-translation", "spans"), required=True)
    p.add_argument("--targets", nargs="*", help="translation target languages (default: all covered)")
    p.add_argument("--pivots", nargs="*", help="back-translation pivots (default: all covered)")
    p.add_argument(
        "--backend",
        help="identity | tagging | lossy:K | bridge:<command line> (default identity)",
    )
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("assemble", help="build per-language training sets for a recipe")
    p.add_argument("--recipe", choices=recipes.RECIPE_NAMES, required=True)
    p.add_argument("--gold", required=True, help="directory of <language>.jsonl gold corpora")
    p.add_argument("--pool", nargs="*", default=[], help="augmentation pool JSON-lines files")
    p.add_argument("--low-frequency", type=int, help="only inject augmentations for techniques under this gold count")
    p.add_argument("--group-families", action="store_true", help="merge output into language families")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("train", help="train the built-in baseline classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--selection", choices=("micro", "macro"), default="micro")
    p.add_argument("--ngram-min", type=int, default=3)
    p.add_argument("--ngram-max", type=int, default=5)
    p.add_argument("--hash-dim", type=int, default=2**18)
    p.add_argument("--out", required=True, help="model file (.npz)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a corpus with a trained baseline model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="score TSV")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tune", help="pick the dev-optimal decision threshold")
    p.add_argument("--scores", required=True, help="score TSV")
    p.add_argument("--dev", required=True, help="dev gold corpus (canonical JSON-lines)")
    p.add_argument("--out", help="optional JSON report")
    common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("ensemble", help="combine member predictions by vote sum")
    p.add_argument("--config", required=True, help="ensemble config (INI)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dev", help="dev gold corpus for --tune-voting")
    p.add_argument("--tune-voting", action="store_true")
    p.add_argument("--out", required=True, help="predictions TSV")
    common(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True, help="predictions TSV")
    p.add_argument("--per-label", help="per-label TSV path (default: <out>.per_label.tsv)")
    p.add_argument("--out", required=True, help="report JSON")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bleu", help="score back-translations against their originals")
    p.add_argument("--originals", required=True)
    p.add_argument("--paraphrases", required=True)
    p.add_argument("--ledger", required=True)
    p.add_argument("--avg-out", help="per-language BLEU-4 averages TSV")
    p.add_argument("--out", required=True, help="per-pair TSV")
    common(p)
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("analyze", help="regression + ANOVA over evaluation runs")
    p.add_argument("--runs", required=True, help="directory of <training_set>__<language>.json reports")
    p.add_argument("--terms", help="comma-separated model terms (default: full model)")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("humaneval", help="aggregate human quality ratings")
    p.add_argument("--ratings", required=True, help="ratings CSV")
    p.add_argument("--out", required=True, help="aggregate CSV")
    common(p)
    p.set_defaults(func=cmd_humaneval)

    return parser


def _apply_run_config(args) -> None:
    """Fill unset per-command options from --config and fixed defaults."""
    run_section = {}
    if getattr(args, "run_config", None):
        run_section = load_run_config(args.run_config).get("run", {})
    if getattr(args, "seed", None) is None:
        args.seed = int(run_section.get("seed", 42))
    if getattr(args, "jobs", None) is None:
        args.jobs = int(run_section.get("jobs", 1))
    if getattr(args, "backend", object()) is None:
        args.backend = run_section.get("backend", "identity")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit2 as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        _apply_run_config(args)
        return args.func(args)
    except PersuadeError as exc:
        print(f"persuade {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except OSError as exc:
        print(f"persuade {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
