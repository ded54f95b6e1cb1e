"""Multi-label F1 (the task's official metric) and corpus-level BLEU.

Micro F1 pools true/false positives and false negatives over every
(paragraph, technique) decision.  Macro F1 averages per-label F1 over the
23 techniques, skipping labels with zero gold and zero predicted
occurrences; a label with no true positives but some error scores 0.

BLEU is cumulative corpus-level n-gram BLEU with per-pair clipping:
modified precisions p_k are pooled over the corpus, and

    BLEU-n = BP * exp((1/n) * sum_{k<=n} log p_k) * 100
    BP     = min(1, exp(1 - r/c))

with r the total reference length and c the total hypothesis length.
Any p_k = 0 makes BLEU-n zero for that and larger n, flagged explicitly.
No smoothing is applied.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from persuade.augment import AugmentationLedger
from persuade.corpus import Corpus, PredictionSet
from persuade.errors import (
    OrphanParaphraseError,
    PersuadeError,
    UnknownParagraphError,
)
from persuade.taxonomy import TECHNIQUES, AugmentationKind, Technique, parse_technique


@dataclass(frozen=True)
class LabelScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_label: dict[Technique, LabelScores]

    def to_json_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_label": {
                t.name: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for t, s in self.per_label.items()
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EvalReport":
        per_label = {
            parse_technique(name): LabelScores(
                precision=float(s["precision"]),
                recall=float(s["recall"]),
                f1=float(s["f1"]),
                support=int(s["support"]),
            )
            for name, s in d["per_label"].items()
        }
        return cls(float(d["micro_f1"]), float(d["macro_f1"]), per_label)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def per_label_tsv(self) -> str:
        lines = ["technique\tprecision\trecall\tf1\tsupport"]
        for t in TECHNIQUES:
            s = self.per_label[t]
            lines.append(
                f"{t.name}\t{s.precision:.6f}\t{s.recall:.6f}\t{s.f1:.6f}\t{s.support}"
            )
        return "\n".join(lines) + "\n"


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_multilabel(gold: Corpus, pred: PredictionSet) -> EvalReport:
    """Score a prediction set against gold labels.

    Prediction keys must be a subset of the corpus ids; a missing key means
    an empty prediction.
    """
    gold_ids = set(gold.ids())
    for pid in pred:
        if pid not in gold_ids:
            raise UnknownParagraphError(f"prediction for unknown paragraph {pid}")

    tp = {t: 0 for t in TECHNIQUES}
    fp = {t: 0 for t in TECHNIQUES}
    fn = {t: 0 for t in TECHNIQUES}
    for p in gold:
        predicted = pred.get(p.id, frozenset())
        for t in predicted & p.labels:
            tp[t] += 1
        for t in predicted - p.labels:
            fp[t] += 1
        for t in p.labels - predicted:
            fn[t] += 1

    per_label = {}
    macro_terms = []
    for t in TECHNIQUES:
        support = tp[t] + fn[t]
        predicted_count = tp[t] + fp[t]
        precision = tp[t] / predicted_count if predicted_count else 0.0
        recall = tp[t] / support if support else 0.0
        label_f1 = _f1(tp[t], fp[t], fn[t])
        per_label[t] = LabelScores(precision, recall, label_f1, support)
        if support or predicted_count:
            macro_terms.append(label_f1)

    micro = _f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    macro = sum(macro_terms) / len(macro_terms) if macro_terms else 0.0
    return EvalReport(micro_f1=micro, macro_f1=macro, per_label=per_label)


# --- BLEU ---------------------------------------------------------------------


def bleu_tokenize(text: str) -> list[str]:
    """NFC-normalize, split on whitespace, peel boundary punctuation off as tokens."""
    tokens: list[str] = []
    for raw in unicodedata.normalize("NFC", text).split():
        lead: list[str] = []
        while raw and unicodedata.category(raw[0]).startswith("P"):
            lead.append(raw[0])
            raw = raw[1:]
        trail: list[str] = []
        while raw and unicodedata.category(raw[-1]).startswith("P"):
            trail.append(raw[-1])
            raw = raw[:-1]
        tokens.extend(lead)
        if raw:
            tokens.append(raw)
        tokens.extend(reversed(trail))
    return tokens


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuResult:
    """Cumulative BLEU-1..max_n on a 0-100 scale, with corpus-pooled counts."""

    scores: tuple[float, ...]
    matched: tuple[int, ...]
    totals: tuple[int, ...]
    zero_precision: tuple[bool, ...]
    brevity_penalty: float
    ref_len: int
    hyp_len: int
    pair_count: int

    def score(self, n: int) -> float:
        return self.scores[n - 1]


def bleu_corpus(pairs: Iterable[tuple[str, str]], max_n: int = 4) -> BleuResult:
    """Corpus-level cumulative BLEU over (reference, hypothesis) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise PersuadeError("BLEU needs at least one (reference, hypothesis) pair")

    matched = [0] * max_n
    totals = [0] * max_n
    ref_len = 0
    hyp_len = 0
    for reference, hypothesis in pairs:
        ref_tokens = bleu_tokenize(reference)
        hyp_tokens = bleu_tokenize(hypothesis)
        ref_len += len(ref_tokens)
        hyp_len += len(hyp_tokens)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp_tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref_tokens, n)
            matched[n - 1] += sum(
                min(count, ref_counts.get(gram, 0)) for gram, count in hyp_counts.items()
            )
            totals[n - 1] += sum(hyp_counts.values())

    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len)) if hyp_len else 0.0
    precisions = [
        matched[k] / totals[k] if totals[k] else 0.0 for k in range(max_n)
    ]
    scores = []
    zero_flags = []
    for n in range(1, max_n + 1):
        if any(precisions[k] == 0.0 for k in range(n)) or hyp_len == 0:
            scores.append(0.0)
            zero_flags.append(True)
        else:
            log_mean = sum(math.log(precisions[k]) for k in range(n)) / n
            scores.append(100.0 * bp * math.exp(log_mean))
            zero_flags.append(False)
    return BleuResult(
        scores=tuple(scores),
        matched=tuple(matched),
        totals=tuple(totals),
        zero_precision=tuple(zero_flags),
        brevity_penalty=bp,
        ref_len=ref_len,
        hyp_len=hyp_len,
        pair_count=len(pairs),
    )


@dataclass(frozen=True)
class BleuReport:
    """Per (source, pivot) BLEU plus the per-language average of BLEU-4."""

    pair_scores: dict[tuple[str, str], BleuResult]
    language_averages: dict[str, float]

    def pairs_tsv(self, max_n: int = 4) -> str:
        header = "lang_pair\t" + "\t".join(f"{n}-gram" for n in range(1, max_n + 1))
        lines = [header]
        for (source, pivot), result in sorted(self.pair_scores.items()):
            cells = "\t".join(f"{result.score(n):.2f}" for n in range(1, max_n + 1))
            lines.append(f"{source}2{pivot}2{source}\t{cells}")
        return "\n".join(lines) + "\n"

    def averages_tsv(self) -> str:
        lines = ["language\tavg_bleu4"]
        for lang, value in sorted(self.language_averages.items()):
            lines.append(f"{lang}\t{value:.2f}")
        return "\n".join(lines) + "\n"


def bleu_by_pair(
    ledger: AugmentationLedger,
    originals: Corpus,
    paraphrases: Corpus,
    max_n: int = 4,
) -> BleuReport:
    """Group back-translations by (source, pivot) and score each group.

    The per-language average is the unweighted mean of BLEU-4 over that
    language's pivot groups.
    """
    grouped: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for p in paraphrases:
        record = ledger.lookup(p.id)
        if record is None:
            raise OrphanParaphraseError(f"paraphrase {p.id} has no ledger record")
        if record.pipeline is not AugmentationKind.BACK_TRANSLATION:
            raise PersuadeError(f"paraphrase {p.id} is not a back-translation")
        original = originals.get(record.origin)
        source, pivot = record.path[0], record.path[1]
        grouped.setdefault((source, pivot), []).append((original.text, p.text))

    pair_scores = {
        key: bleu_corpus(pairs, max_n=max_n) for key, pairs in grouped.items()
    }
    by_language: dict[str, list[float]] = {}
    for (source, _pivot), result in pair_scores.items():
        by_language.setdefault(source, []).append(result.score(4))
    language_averages = {
        lang: sum(values) / len(values) for lang, values in by_language.items()
    }
    return BleuReport(pair_scores=pair_scores, language_averages=language_averages)
