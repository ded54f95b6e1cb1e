"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints an `ACCEPTANCE PASS: <criterion>` line (visible with
`pytest -s`) and enforces its runtime budget.  The dataset-conditional
checks run only when PERSUADE_GOLD_DIR points at canonical per-language
gold corpora.
"""

import json
import math
import os
import random
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from persuade import analysis, baseline, ensemble, metrics, recipes, taxonomy
from persuade.augment import MockTranslator, back_translate_corpus, translate_corpus
from persuade.baseline import ScoreMatrix
from persuade.cli import main
from persuade.corpus import Corpus, ParagraphId, load_jsonl, dump_jsonl, stats
from persuade.ensemble import (
    EnsembleConfig,
    EnsembleMember,
    apply_threshold,
    ensemble_predict,
    threshold_curve,
    tune_threshold,
)
from persuade.metrics import bleu_corpus, f1_multilabel
from persuade.recipes import DatasetRecipe, assemble, inject_spans
from persuade.taxonomy import TECHNIQUES, AugmentationKind, parse_technique

from conftest import DATA_DIR, make_corpus, make_paragraph
from oracles import f1_contingency_oracle
from test_recipes import EXPECTED_SIZES, build_pool, make_gold


@contextmanager
def criterion(name, budget_seconds):
    started = time.monotonic()
    yield
    elapsed = time.monotonic() - started
    assert elapsed < budget_seconds, f"{name}: {elapsed:.1f}s over {budget_seconds}s budget"
    print(f"ACCEPTANCE PASS: {name} ({elapsed:.2f}s)", file=sys.stderr, flush=True)


def test_metric_oracle_equivalence():
    with criterion("metric oracle equivalence (micro/macro F1, 200 instances)", 5):
        rng = random.Random(1849)
        for _ in range(200):
            n = rng.randint(1, 50)
            gold_labels = [
                {t for t in TECHNIQUES if rng.random() < 0.1} for _ in range(n)
            ]
            pred_labels = [
                {t for t in TECHNIQUES if rng.random() < 0.1} for _ in range(n)
            ]
            paragraphs = [
                make_paragraph("p", i, labels=labels, text=f"t{i}")
                for i, labels in enumerate(gold_labels)
            ]
            corpus = Corpus(paragraphs)
            pred = {p.id: frozenset(l) for p, l in zip(paragraphs, pred_labels)}
            report = f1_multilabel(corpus, pred)
            micro, macro, per_label = f1_contingency_oracle(gold_labels, pred_labels)
            assert report.micro_f1 == micro
            assert report.macro_f1 == macro
            assert all(report.per_label[t].f1 == per_label[t] for t in TECHNIQUES)


def test_bleu_correctness():
    with criterion("BLEU identity/hand-worked/reordering", 5):
        identity = bleu_corpus(
            [("alpha beta gamma delta", "alpha beta gamma delta")] * 3
        )
        assert identity.scores == (100.0, 100.0, 100.0, 100.0)

        # hand-worked clipped-precision oracle: p1=5/7, p2=3/6, BP=1
        worked = bleu_corpus(
            [("the cat sat on the mat", "the cat the cat on the mat")], max_n=2
        )
        assert abs(worked.score(2) - 100.0 * math.sqrt(5.0 / 14.0)) < 1e-6

        rng = random.Random(77)
        vocab = "uno dos tres cuatro cinco seis".split()
        for _ in range(50):
            pairs = [
                (
                    " ".join(rng.choices(vocab, k=rng.randint(4, 10))),
                    " ".join(rng.choices(vocab, k=rng.randint(4, 10))),
                )
                for _ in range(rng.randint(2, 8))
            ]
            shuffled = pairs[:]
            rng.shuffle(shuffled)
            assert bleu_corpus(pairs).scores == bleu_corpus(shuffled).scores


def test_coverage_fixture_transcription():
    with criterion("coverage matrix matches checked-in transcription", 5):
        lines = (DATA_DIR / "coverage_transcription.tsv").read_text(encoding="utf-8").splitlines()
        cells = 0
        for line in lines[1:]:
            source, target, trans, back = line.split("\t")
            assert (
                taxonomy.is_covered(AugmentationKind.TRANSLATION, source, target)
                is (trans == "1")
            ), (source, target)
            assert (
                taxonomy.is_covered(AugmentationKind.BACK_TRANSLATION, source, target)
                is (back == "1")
            ), (source, target)
            cells += 2
        assert cells == 96  # 48 directions x 2 pipelines
        assert taxonomy.is_covered(AugmentationKind.TRANSLATION, "po", "en") is True
        assert taxonomy.is_covered(AugmentationKind.TRANSLATION, "en", "po") is False


def test_recipe_algebra_on_synthetic_corpus():
    with criterion("recipe algebra: monotonicity, span law, exact sizes", 10):
        gold = make_gold(5)
        pool = build_pool(gold)
        by_recipe = {
            name: assemble(DatasetRecipe(name), gold, pool) for name in EXPECTED_SIZES
        }
        for name, expected in EXPECTED_SIZES.items():
            actual = {lang: len(c) for lang, c in by_recipe[name].items()}
            assert actual == expected, name
        for lang in ("en", "fr", "it", "ru", "ge", "po"):
            ids = {
                name: set(by_recipe[name][lang].ids())
                for name in ("gold", "+BT", "+BT-sl")
            }
            assert ids["gold"] <= ids["+BT"] <= ids["+BT-sl"]
            spanned = sum(1 for p in gold[lang] if p.spans)
            assert len(inject_spans(gold[lang])) == len(gold[lang]) + spanned
            assert len(by_recipe["+span"][lang]) == len(gold[lang]) + spanned


def test_threshold_tuning_optimality():
    with criterion("threshold tuning: exhaustive optimality, 100 fixtures", 10):
        rng = random.Random(20333)
        for _ in range(100):
            n = rng.randint(1, 12)
            paragraphs = [
                make_paragraph(
                    "x",
                    i,
                    labels=[t.name for t in TECHNIQUES if rng.random() < 0.2],
                    text=f"x {i}",
                )
                for i in range(n)
            ]
            corpus = Corpus(paragraphs)
            matrix = ScoreMatrix(
                corpus.ids(),
                np.array([[rng.random() for _ in TECHNIQUES] for _ in range(n)]),
            )
            theta = tune_threshold(matrix, corpus)
            curve = dict(threshold_curve(matrix, corpus))
            best = max(curve.values())
            assert curve[theta] == best
            assert theta == min(t for t, f in curve.items() if f == best)


def test_ensemble_properties():
    with criterion("ensemble: union/intersection/monotone/identity, 100 fixtures", 10):
        rng = random.Random(555)
        for _ in range(100):
            n = rng.randint(1, 6)
            paragraphs = [make_paragraph("e", i, text=f"t {i}") for i in range(n)]
            corpus = Corpus(paragraphs)
            ids = corpus.ids()
            member_pairs = {}
            member_scores = {}
            for m in ("m1", "m2", "m3"):
                pairs = {
                    (pid, t) for pid in ids for t in TECHNIQUES if rng.random() < 0.15
                }
                rows = np.zeros((n, len(TECHNIQUES)))
                for pid, t in pairs:
                    rows[ids.index(pid), TECHNIQUES.index(t)] = 1.0
                member_pairs[m] = pairs
                member_scores[m] = ScoreMatrix(ids, rows)
            thresholds = {(m, "en"): 0.5 for m in member_pairs}
            config = EnsembleConfig(
                members=tuple(EnsembleMember(m) for m in ("m1", "m2", "m3")),
                thresholds=thresholds,
                voting_threshold=1,
            )

            union = ensemble_predict(config, member_scores, corpus)
            union_pairs = {(pid, t) for pid, chosen in union.items() for t in chosen}
            assert union_pairs == set.union(*member_pairs.values()) if any(
                member_pairs.values()
            ) else union_pairs == set()

            inter = ensemble_predict(
                replace(config, voting_threshold=3), member_scores, corpus
            )
            inter_pairs = {(pid, t) for pid, chosen in inter.items() for t in chosen}
            assert inter_pairs == set.intersection(*member_pairs.values())

            previous = union_pairs
            for v in (2, 3):
                step = ensemble_predict(
                    replace(config, voting_threshold=v), member_scores, corpus
                )
                step_pairs = {(pid, t) for pid, chosen in step.items() for t in chosen}
                assert step_pairs <= previous
                previous = step_pairs

            solo = EnsembleConfig(
                members=(EnsembleMember("m1"),),
                thresholds={("m1", "en"): 0.5},
                voting_threshold=1,
            )
            assert ensemble_predict(solo, member_scores, corpus) == apply_threshold(
                member_scores["m1"], 0.5
            )


def test_regression_recovery():
    with criterion("regression: planted recovery, R2, SS sums, 828 rows, dfs", 10):
        from test_analysis import additive_table, fake_report

        # planted coefficients within 3 standard errors (sigma = 0.01, seed 42)
        table = additive_table(
            noise=0.01,
            seed=42,
            effects_ts={"+T": 0.05, "gold": -0.03},
            effects_lang={"fr": 0.02},
            effects_tech={"Repetition": 0.08, "Slogans": -0.04, "Straw Man": 0.01},
        )
        fit = analysis.fit_ols(
            table, analysis.ModelSpec(("label", "trainingSet", "testLang"))
        )
        planted = {
            "(Intercept)": 0.4,
            "trainingSet[+T]": 0.05,
            "trainingSet[gold]": -0.03,
            "testLang[fr]": 0.02,
            "label[Repetition]": 0.08,
            "label[Slogans]": -0.04,
            "label[Straw Man]": 0.01,
        }
        for name, value in planted.items():
            j = fit.column_names.index(name)
            assert abs(fit.coefficients[j] - value) <= 3 * fit.standard_errors[j], name

        # zero-noise one-factor design: R2 = 1 +- 1e-12
        exact = additive_table(
            effects_tech={"Doubt": 0.0, "Repetition": 0.1, "Slogans": -0.1, "Straw Man": 0.05}
        )
        exact_fit = analysis.fit_ols(exact, analysis.ModelSpec(("label",)))
        assert abs(exact_fit.r_squared - 1.0) <= 1e-12

        # sequential SS sums to SS_total within 1e-9 relative
        rng = np.random.default_rng(17)
        noisy = [
            analysis.RegressionRow(ts, lang, tech, float(rng.random()))
            for ts in ("gold", "+T", "+BT")
            for lang in ("en", "fr", "it")
            for tech in ("Doubt", "Repetition", "Slogans")
        ]
        anova = analysis.anova_sequential(
            noisy,
            analysis.ModelSpec(
                ("label", "trainingSet", "testLang", "trainingSet:label", "testLang:trainingSet")
            ),
        )
        lhs = sum(t.ss for t in anova.terms) + anova.residual_ss
        assert abs(lhs - anova.total_ss) <= 1e-9 * anova.total_ss

        # full factorial: exactly 828 rows, published term dfs
        runs = {
            (ts, lang): fake_report(lambda t: float(rng.random()))
            for ts in ("gold", "+T", "+BT", "+BT-sl", "+T+BT", "+T+BT-sl")
            for lang in ("en", "fr", "it", "ru", "ge", "po")
        }
        full = analysis.build_table(runs)
        assert len(full) == 828
        full_anova = analysis.anova_sequential(full, analysis.FULL_MODEL)
        assert {t.name: t.df for t in full_anova.terms} == {
            "trainingSet:label": 110,
            "label": 22,
            "trainingSet": 5,
            "testLang:trainingSet": 25,
            "testLang": 5,
        }


def test_gradient_check():
    with criterion("baseline BCE gradient vs central differences", 5):
        rng = np.random.default_rng(90210)
        for _ in range(8):
            n = int(rng.integers(2, 9))
            dim = int(rng.integers(2, 33))
            labels = int(rng.integers(1, 6))
            x = rng.normal(size=(n, dim))
            y = (rng.random(size=(n, labels)) < 0.5).astype(float)
            w = rng.normal(scale=0.4, size=(dim, labels))
            b = rng.normal(scale=0.4, size=labels)
            grad_w, grad_b = baseline.bce_gradient(w, b, x, y)
            h = 1e-6
            for _ in range(10):
                i, j = int(rng.integers(dim)), int(rng.integers(labels))
                wp, wm = w.copy(), w.copy()
                wp[i, j] += h
                wm[i, j] -= h
                numeric = (baseline.bce_loss(wp, b, x, y) - baseline.bce_loss(wm, b, x, y)) / (2 * h)
                denom = max(abs(numeric), abs(grad_w[i, j]), 1e-8)
                assert abs(numeric - grad_w[i, j]) / denom < 1e-5
            for j in range(labels):
                bp, bm = b.copy(), b.copy()
                bp[j] += h
                bm[j] -= h
                numeric = (baseline.bce_loss(w, bp, x, y) - baseline.bce_loss(w, bm, x, y)) / (2 * h)
                denom = max(abs(numeric), abs(grad_b[j]), 1e-8)
                assert abs(numeric - grad_b[j]) / denom < 1e-5


def _smoke_gold(lang: str, n=12) -> Corpus:
    """Deterministic synthetic gold data with learnable token markers."""
    paragraphs = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            text = f"{lang} zorgl filler sentence {i} with marker?"
            labels = ["Doubt"]
        elif kind == 1:
            text = f"{lang} brimble filler sentence {i} with slogan energy"
            labels = ["Slogans"]
        else:
            text = f"{lang} plain filler sentence {i} nothing else"
            labels = []
        paragraphs.append(make_paragraph(f"{lang}a", i, lang, text, labels=labels))
    return Corpus(paragraphs)


def _run_smoke_pipeline(base: Path) -> list[Path]:
    """Drive the full pipeline through the CLI with relative paths."""
    os.makedirs(base / "gold", exist_ok=True)
    for lang in ("en", "fr", "it", "ru", "ge", "po"):
        dump_jsonl(_smoke_gold(lang), base / "gold" / f"{lang}.jsonl")

    cwd = os.getcwd()
    os.chdir(base)
    try:
        merged = Corpus([p for lang in ("en", "fr", "it", "ru", "ge", "po")
                         for p in load_jsonl(Path("gold") / f"{lang}.jsonl")])
        dump_jsonl(merged, Path("gold_all.jsonl"))

        assert main(["augment", "--input", "gold_all.jsonl", "--pipeline", "translation",
                     "--backend", "tagging", "--seed", "7", "--out", "aug_t"]) == 0
        assert main(["augment", "--input", "gold_all.jsonl", "--pipeline", "back-translation",
                     "--backend", "tagging", "--seed", "7", "--out", "aug_bt"]) == 0
        assert main(["assemble", "--recipe", "+T+BT-sl", "--gold", "gold",
                     "--pool", "aug_t/corpus.jsonl", "aug_bt/corpus.jsonl",
                     "--out", "assembled"]) == 0
        assert main(["train", "--train", "assembled/en.jsonl", "--dev", "gold/en.jsonl",
                     "--epochs", "20", "--batch-size", "8", "--learning-rate", "0.5",
                     "--seed", "7", "--out", "model.npz"]) == 0
        assert main(["predict", "--model", "model.npz", "--input", "gold/en.jsonl",
                     "--out", "scores.tsv"]) == 0
        assert main(["tune", "--scores", "scores.tsv", "--dev", "gold/en.jsonl",
                     "--out", "tune.json"]) == 0
        theta = json.loads(Path("tune.json").read_text(encoding="utf-8"))["threshold"]
        Path("ens.ini").write_text(
            "[ensemble]\nmembers = builtin\nvoting_threshold = 1\n"
            "[member:builtin]\nscores = scores.tsv\nheuristics = true\n"
            f"[thresholds]\nbuiltin = {theta}\n"
            "[heuristic:doubt-en]\ntechnique = Doubt\nlanguage = en\n"
            "question_mark = true\nquestion_words = builtin\naction = assert\n",
            encoding="utf-8",
        )
        assert main(["ensemble", "--config", "ens.ini", "--corpus", "gold/en.jsonl",
                     "--out", "preds.tsv"]) == 0
        assert main(["evaluate", "--gold", "gold/en.jsonl", "--pred", "preds.tsv",
                     "--out", "report.json"]) == 0
    finally:
        os.chdir(cwd)

    return sorted(
        p.relative_to(base) for p in base.rglob("*") if p.is_file()
    )


def test_end_to_end_smoke(tmp_path):
    with criterion("end-to-end smoke: deterministic two-run pipeline", 60):
        run1, run2 = tmp_path / "run1", tmp_path / "run2"
        files1 = _run_smoke_pipeline(run1)
        files2 = _run_smoke_pipeline(run2)
        assert files1 == files2
        for rel in files1:
            assert (run1 / rel).read_bytes() == (run2 / rel).read_bytes(), rel

        report = json.loads((run1 / "report.json").read_text(encoding="utf-8"))
        assert report["micro_f1"] > 0.5  # learnable by construction
        preds = (run1 / "preds.tsv").read_text(encoding="utf-8")
        assert all(len(line.split("\t")) == 3 for line in preds.splitlines())


GOLD_DIR = os.environ.get("PERSUADE_GOLD_DIR")

TABLE4_GOLD_SIZES = {"en": 3761, "fr": 1694, "it": 1746, "ru": 1246, "ge": 1253, "po": 1233}
TABLE4_SPAN_SIZES = {"en": 7521, "fr": 3387, "it": 3491, "ru": 2491, "ge": 2505, "po": 2465}


@pytest.mark.skipif(not GOLD_DIR, reason="PERSUADE_GOLD_DIR not set; shared-task data not supplied")
def test_dataset_conditional_gold_statistics():
    with criterion("dataset-conditional: gold sizes, label counts, span sizes", 120):
        gold = {
            lang: load_jsonl(Path(GOLD_DIR) / f"{lang}.jsonl")
            for lang in TABLE4_GOLD_SIZES
        }
        for lang, expected in TABLE4_GOLD_SIZES.items():
            assert len(gold[lang]) == expected, lang
        assert sum(len(c) for c in gold.values()) == 10933

        en_counts = stats(gold["en"])
        assert en_counts[parse_technique("Loaded Language")] == 1809
        ru_counts = stats(gold["ru"])
        assert ru_counts[parse_technique("Red Herring")] == 2

        for lang, expected in TABLE4_SPAN_SIZES.items():
            assert len(inject_spans(gold[lang])) == expected, lang
