"""Paragraph-level data model, corpus container, and file formats.

Canonical on-disk form is JSON-lines (one paragraph per line, UTF-8, LF).
A task-labels TSV (article_id, paragraph_index, comma-separated techniques)
is supported for interoperability with shared-task files; the same TSV shape
carries predictions.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from persuade.errors import (
    CorpusParseError,
    DuplicateIdError,
    PersuadeError,
    UnknownParagraphError,
)
from persuade.taxonomy import (
    TECHNIQUE_INDEX,
    TECHNIQUES,
    Technique,
    parse_language,
    parse_technique,
)


@dataclass(frozen=True, order=True)
class ParagraphId:
    article_id: str
    paragraph_index: int

    def __post_init__(self):
        if self.paragraph_index < 0:
            raise PersuadeError(f"negative paragraph index: {self.paragraph_index}")

    def __str__(self) -> str:
        return f"{self.article_id}:{self.paragraph_index}"


@dataclass(frozen=True)
class Span:
    """Character span (Unicode scalar offsets, end exclusive) tagged with a technique."""

    start: int
    end: int
    technique: Technique

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise PersuadeError(f"invalid span offsets [{self.start}, {self.end})")


class ProvenanceKind(enum.Enum):
    GOLD = "gold"
    TRANSLATED = "translated"
    BACK_TRANSLATED = "back_translated"
    SPAN_ONLY = "span_only"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    source_or_pivot: str | None = None
    origin: ParagraphId | None = None

    def __post_init__(self):
        if self.kind is ProvenanceKind.GOLD:
            if self.source_or_pivot is not None or self.origin is not None:
                raise PersuadeError("gold provenance carries no origin")
        elif self.kind is ProvenanceKind.SPAN_ONLY:
            if self.origin is None or self.source_or_pivot is not None:
                raise PersuadeError("span-only provenance needs an origin and no language")
        else:
            if self.origin is None or self.source_or_pivot is None:
                raise PersuadeError(f"{self.kind.value} provenance needs origin and language")
        if self.source_or_pivot is not None:
            parse_language(self.source_or_pivot)

    @classmethod
    def gold(cls) -> "Provenance":
        return cls(ProvenanceKind.GOLD)

    @classmethod
    def translated(cls, source: str, origin: ParagraphId) -> "Provenance":
        return cls(ProvenanceKind.TRANSLATED, source, origin)

    @classmethod
    def back_translated(cls, pivot: str, origin: ParagraphId) -> "Provenance":
        return cls(ProvenanceKind.BACK_TRANSLATED, pivot, origin)

    @classmethod
    def span_only(cls, origin: ParagraphId) -> "Provenance":
        return cls(ProvenanceKind.SPAN_ONLY, origin=origin)


@dataclass(frozen=True)
class Paragraph:
    id: ParagraphId
    language: str
    text: str
    labels: frozenset[Technique] = frozenset()
    spans: tuple[Span, ...] = ()
    provenance: Provenance = field(default_factory=Provenance.gold)

    def __post_init__(self):
        parse_language(self.language)
        if not self.text:
            raise PersuadeError(f"paragraph {self.id} has empty text")
        for span in self.spans:
            if span.end > len(self.text):
                raise PersuadeError(
                    f"paragraph {self.id}: span end {span.end} beyond text length {len(self.text)}"
                )
            if span.technique not in self.labels:
                raise PersuadeError(
                    f"paragraph {self.id}: span technique {span.technique.name!r} not in labels"
                )

    def sorted_labels(self) -> tuple[Technique, ...]:
        return tuple(sorted(self.labels, key=TECHNIQUE_INDEX.__getitem__))


class Corpus:
    """Immutable collection of paragraphs with unique ids."""

    def __init__(self, paragraphs: Iterable[Paragraph] = ()):
        items = tuple(paragraphs)
        index: dict[ParagraphId, Paragraph] = {}
        for p in items:
            if p.id in index:
                raise DuplicateIdError(f"duplicate paragraph id {p.id}")
            index[p.id] = p
        self._items = items
        self._index = index

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Paragraph]:
        return iter(self._items)

    def __contains__(self, pid: ParagraphId) -> bool:
        return pid in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self._items == other._items

    def get(self, pid: ParagraphId) -> Paragraph:
        try:
            return self._index[pid]
        except KeyError:
            raise UnknownParagraphError(f"no paragraph with id {pid}") from None

    def ids(self) -> tuple[ParagraphId, ...]:
        return tuple(p.id for p in self._items)

    def languages(self) -> frozenset[str]:
        return frozenset(p.language for p in self._items)

    def sorted(self) -> "Corpus":
        return Corpus(sorted(self._items, key=lambda p: p.id))

    def merge(self, *others: "Corpus") -> "Corpus":
        items = list(self._items)
        for other in others:
            items.extend(other)
        return Corpus(items)


def stats(corpus: Corpus) -> dict[Technique, int]:
    """Paragraph count per technique (a paragraph counts once per label)."""
    counts = {t: 0 for t in TECHNIQUES}
    for p in corpus:
        for t in p.labels:
            counts[t] += 1
    return counts


# --- canonical JSON-lines ---------------------------------------------------


def paragraph_to_dict(p: Paragraph) -> dict:
    d: dict = {
        "article_id": p.id.article_id,
        "paragraph_index": p.id.paragraph_index,
        "language": p.language,
        "text": p.text,
        "labels": [t.name for t in p.sorted_labels()],
        "spans": [
            {"start": s.start, "end": s.end, "technique": s.technique.name}
            for s in p.spans
        ],
        "provenance": _provenance_to_dict(p.provenance),
    }
    return d


def _provenance_to_dict(prov: Provenance) -> dict:
    d: dict = {"kind": prov.kind.value}
    if prov.source_or_pivot is not None:
        d["source_or_pivot"] = prov.source_or_pivot
    if prov.origin is not None:
        d["origin"] = {
            "article_id": prov.origin.article_id,
            "paragraph_index": prov.origin.paragraph_index,
        }
    return d


def paragraph_from_dict(d: dict) -> Paragraph:
    pid = ParagraphId(str(d["article_id"]), int(d["paragraph_index"]))
    labels = frozenset(parse_technique(name) for name in d.get("labels", []))
    spans = tuple(
        Span(int(s["start"]), int(s["end"]), parse_technique(s["technique"]))
        for s in d.get("spans", [])
    )
    prov_d = d.get("provenance", {"kind": "gold"})
    origin = None
    if "origin" in prov_d:
        origin = ParagraphId(
            str(prov_d["origin"]["article_id"]),
            int(prov_d["origin"]["paragraph_index"]),
        )
    provenance = Provenance(
        ProvenanceKind(prov_d["kind"]),
        prov_d.get("source_or_pivot"),
        origin,
    )
    return Paragraph(
        id=pid,
        language=parse_language(str(d["language"])),
        text=d["text"],
        labels=labels,
        spans=spans,
        provenance=provenance,
    )


def load_jsonl(path: str | Path) -> Corpus:
    path = Path(path)
    paragraphs = []
    seen: set[ParagraphId] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                p = paragraph_from_dict(d)
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise CorpusParseError(path, line_no, str(exc)) from exc
            except PersuadeError as exc:
                raise CorpusParseError(path, line_no, str(exc)) from exc
            if p.id in seen:
                raise CorpusParseError(path, line_no, f"duplicate paragraph id {p.id}")
            seen.add(p.id)
            paragraphs.append(p)
    return Corpus(paragraphs)


def dump_jsonl(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for p in corpus:
            fh.write(json.dumps(paragraph_to_dict(p), ensure_ascii=False))
            fh.write("\n")


# --- task-labels TSV ---------------------------------------------------------


def _parse_label_field(fieldtext: str):
    if not fieldtext:
        return frozenset()
    return frozenset(parse_technique(part) for part in fieldtext.split(",") if part.strip())


def load_task_labels(
    labels_path: str | Path,
    language: str,
    texts_path: str | Path,
    spans_path: str | Path | None = None,
) -> Corpus:
    """Build a gold corpus from a task-labels TSV plus a text template TSV.

    The labels file carries neither text nor language, so both must be
    supplied: `texts_path` is a TSV of article_id, paragraph_index, text.
    Span annotations can be attached from a 5-column TSV of article_id,
    paragraph_index, start, end, technique (offsets in Unicode scalar
    values, end exclusive, relative to the paragraph text).
    """
    labels_path = Path(labels_path)
    texts_path = Path(texts_path)
    parse_language(language)

    texts: dict[ParagraphId, str] = {}
    with texts_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusParseError(texts_path, line_no, f"expected 3 columns, got {len(parts)}")
            pid = _parse_pid(parts[0], parts[1], texts_path, line_no)
            if pid in texts:
                raise CorpusParseError(texts_path, line_no, f"duplicate paragraph id {pid}")
            texts[pid] = parts[2]

    spans: dict[ParagraphId, list[Span]] = {}
    if spans_path is not None:
        spans_path = Path(spans_path)
        with spans_path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    raise CorpusParseError(spans_path, line_no, f"expected 5 columns, got {len(parts)}")
                pid = _parse_pid(parts[0], parts[1], spans_path, line_no)
                try:
                    span = Span(int(parts[2]), int(parts[3]), parse_technique(parts[4]))
                except (ValueError, PersuadeError) as exc:
                    raise CorpusParseError(spans_path, line_no, str(exc)) from exc
                spans.setdefault(pid, []).append(span)

    paragraphs = []
    seen: set[ParagraphId] = set()
    with labels_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusParseError(labels_path, line_no, f"expected 3 columns, got {len(parts)}")
            pid = _parse_pid(parts[0], parts[1], labels_path, line_no)
            if pid in seen:
                raise CorpusParseError(labels_path, line_no, f"duplicate paragraph id {pid}")
            seen.add(pid)
            if pid not in texts:
                raise CorpusParseError(labels_path, line_no, f"no text for paragraph {pid}")
            try:
                labels = _parse_label_field(parts[2])
                paragraphs.append(
                    Paragraph(
                        id=pid,
                        language=language,
                        text=texts[pid],
                        labels=labels,
                        spans=tuple(sorted(spans.get(pid, []), key=lambda s: (s.start, s.end))),
                    )
                )
            except PersuadeError as exc:
                raise CorpusParseError(labels_path, line_no, str(exc)) from exc
    orphans = set(spans) - seen
    if orphans:
        raise CorpusParseError(
            spans_path, 0, f"spans for paragraphs absent from the labels file: {sorted(orphans)[:3]}"
        )
    return Corpus(paragraphs)


def _parse_pid(article: str, index: str, path, line_no: int) -> ParagraphId:
    try:
        return ParagraphId(article, int(index))
    except (ValueError, PersuadeError) as exc:
        raise CorpusParseError(path, line_no, str(exc)) from exc


def dump_task_labels(corpus: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in corpus:
            labels = ",".join(t.name for t in p.sorted_labels())
            fh.write(f"{p.id.article_id}\t{p.id.paragraph_index}\t{labels}\n")


def dump_texts(corpus: Corpus, path: str | Path) -> None:
    """Emit the text template TSV that pairs with a task-labels file."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in corpus:
            if "\t" in p.text or "\n" in p.text:
                raise PersuadeError(
                    f"paragraph {p.id}: text with tabs/newlines cannot go in a TSV template"
                )
            fh.write(f"{p.id.article_id}\t{p.id.paragraph_index}\t{p.text}\n")


def import_corpus(
    path: str | Path,
    format: str = "canonical",
    language: str | None = None,
    texts: str | Path | None = None,
    spans: str | Path | None = None,
) -> Corpus:
    """Load an external file as a gold corpus.

    canonical: JSON-lines as emitted by dump_jsonl.
    task-labels: 3-column labels TSV; needs `language` and the `texts`
    template, optionally a 5-column `spans` TSV.
    """
    if format == "canonical":
        return load_jsonl(path)
    if format == "task-labels":
        if language is None or texts is None:
            raise PersuadeError("task-labels import needs a language code and a texts template")
        return load_task_labels(path, language, texts, spans)
    raise PersuadeError(f"unknown corpus format {format!r}")


def dump_spans(corpus: Corpus, path: str | Path) -> None:
    """Emit span annotations as the 5-column TSV accepted by import."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in corpus:
            for s in p.spans:
                fh.write(
                    f"{p.id.article_id}\t{p.id.paragraph_index}\t{s.start}\t{s.end}\t{s.technique.name}\n"
                )


# --- predictions (same TSV shape, no text required) ---------------------------

PredictionSet = dict[ParagraphId, frozenset[Technique]]


def load_predictions(path: str | Path) -> PredictionSet:
    path = Path(path)
    pred: PredictionSet = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusParseError(path, line_no, f"expected 3 columns, got {len(parts)}")
            pid = _parse_pid(parts[0], parts[1], path, line_no)
            if pid in pred:
                raise CorpusParseError(path, line_no, f"duplicate paragraph id {pid}")
            try:
                pred[pid] = _parse_label_field(parts[2])
            except PersuadeError as exc:
                raise CorpusParseError(path, line_no, str(exc)) from exc
    return pred


def dump_predictions(pred: PredictionSet, path: str | Path, order: Iterable[ParagraphId] | None = None) -> None:
    ids = list(order) if order is not None else sorted(pred)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for pid in ids:
            labels = sorted(pred.get(pid, frozenset()), key=TECHNIQUE_INDEX.__getitem__)
            fh.write(f"{pid.article_id}\t{pid.paragraph_index}\t{','.join(t.name for t in labels)}\n")
