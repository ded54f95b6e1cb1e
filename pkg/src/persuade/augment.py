"""Translation / back-translation augmentation with label transfer.

Backends are pluggable: a deterministic mock for tests and offline runs, and
a subprocess bridge speaking a JSON-lines protocol for real MT stacks.
Uncovered language pairs are skipped silently (the MT model simply does not
exist) but counted in the ledger; backend failures on covered pairs are
recorded per paragraph and abort the run only if nothing succeeds.
"""

from __future__ import annotations

import abc
import json
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from persuade.corpus import Corpus, Paragraph, ParagraphId, Provenance
from persuade.errors import AugmentationError, BackendError, PersuadeError
from persuade.taxonomy import (
    LANGUAGES,
    AugmentationKind,
    is_covered,
    parse_language,
)


@dataclass(frozen=True)
class LedgerRecord:
    origin: ParagraphId
    pipeline: AugmentationKind
    path: tuple[str, ...]
    output: ParagraphId

    def __post_init__(self):
        expected = 2 if self.pipeline is AugmentationKind.TRANSLATION else 3
        if len(self.path) != expected:
            raise PersuadeError(
                f"{self.pipeline.value} path must have {expected} hops, got {list(self.path)}"
            )


@dataclass
class AugmentationLedger:
    """Record of what was produced from what, plus skip/failure counts."""

    records: list[LedgerRecord] = field(default_factory=list)
    skipped_uncovered: int = 0
    skipped_capability: int = 0
    failures: list[tuple[ParagraphId, str]] = field(default_factory=list)

    def __post_init__(self):
        self._by_output = {r.output: r for r in self.records}
        if len(self._by_output) != len(self.records):
            raise PersuadeError("ledger has multiple records for one output paragraph")

    def add(self, record: LedgerRecord) -> None:
        if record.output in self._by_output:
            raise PersuadeError(f"ledger already has a record for {record.output}")
        self.records.append(record)
        self._by_output[record.output] = record

    def lookup(self, output: ParagraphId) -> LedgerRecord | None:
        return self._by_output.get(output)

    def merge(self, other: "AugmentationLedger") -> "AugmentationLedger":
        merged = AugmentationLedger(
            records=list(self.records),
            skipped_uncovered=self.skipped_uncovered + other.skipped_uncovered,
            skipped_capability=self.skipped_capability + other.skipped_capability,
            failures=self.failures + other.failures,
        )
        for r in other.records:
            merged.add(r)
        return merged

    def dump_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            summary = {
                "summary": {
                    "records": len(self.records),
                    "skipped_uncovered": self.skipped_uncovered,
                    "skipped_capability": self.skipped_capability,
                    "failures": [[str(pid), msg] for pid, msg in self.failures],
                }
            }
            fh.write(json.dumps(summary, ensure_ascii=False) + "\n")
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "origin": [r.origin.article_id, r.origin.paragraph_index],
                            "pipeline": r.pipeline.value,
                            "path": list(r.path),
                            "output": [r.output.article_id, r.output.paragraph_index],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "AugmentationLedger":
        ledger = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                if "summary" in d:
                    s = d["summary"]
                    ledger.skipped_uncovered += int(s.get("skipped_uncovered", 0))
                    ledger.skipped_capability += int(s.get("skipped_capability", 0))
                    continue
                ledger.add(
                    LedgerRecord(
                        origin=ParagraphId(d["origin"][0], int(d["origin"][1])),
                        pipeline=AugmentationKind(d["pipeline"]),
                        path=tuple(d["path"]),
                        output=ParagraphId(d["output"][0], int(d["output"][1])),
                    )
                )
        return ledger


class TranslatorBackend(abc.ABC):
    """Contract: declared capability is honored; non-empty text stays non-empty."""

    thread_safe: bool = False

    @abc.abstractmethod
    def capability(self) -> frozenset[tuple[str, str]]:
        """Supported (source, target) directions."""

    @abc.abstractmethod
    def translate(self, text: str, source: str, target: str) -> str:
        ...


ALL_DIRECTIONS: frozenset[tuple[str, str]] = frozenset(
    (s, t) for s in LANGUAGES for t in LANGUAGES if s != t
)

MOCK_MODES = ("identity", "tagging", "lossy")


def mock_translate(
    text: str,
    source: str,
    target: str,
    mode: str = "identity",
    lossy_k: int | None = None,
    seed: int = 0,
) -> str:
    """Deterministic stand-in translation.

    identity: text unchanged; tagging: direction marker prefixed;
    lossy(k): every k-th whitespace token deleted (k >= 2).
    """
    del seed  # all modes are already deterministic; kept for interface parity
    if mode == "identity":
        return text
    if mode == "tagging":
        return f"⟦{source}→{target}⟧ {text}"
    if mode == "lossy":
        if lossy_k is None or lossy_k < 2:
            raise PersuadeError("lossy mode needs k >= 2")
        tokens = text.split()
        kept = [tok for i, tok in enumerate(tokens, start=1) if i % lossy_k != 0]
        return " ".join(kept)
    raise PersuadeError(f"unknown mock mode {mode!r}")


class MockTranslator(TranslatorBackend):
    thread_safe = True

    def __init__(
        self,
        mode: str = "identity",
        lossy_k: int | None = None,
        seed: int = 0,
        directions: frozenset[tuple[str, str]] = ALL_DIRECTIONS,
    ):
        if mode not in MOCK_MODES:
            raise PersuadeError(f"unknown mock mode {mode!r}")
        if mode == "lossy" and (lossy_k is None or lossy_k < 2):
            raise PersuadeError("lossy mode needs k >= 2")
        self.mode = mode
        self.lossy_k = lossy_k
        self.seed = seed
        self._directions = directions

    @classmethod
    def from_spec(cls, spec: str, seed: int = 0) -> "MockTranslator":
        """Parse CLI-style specs: "identity", "tagging", "lossy:3"."""
        if spec.startswith("lossy:"):
            return cls("lossy", lossy_k=int(spec.split(":", 1)[1]), seed=seed)
        return cls(spec, seed=seed)

    def capability(self) -> frozenset[tuple[str, str]]:
        return self._directions

    def translate(self, text: str, source: str, target: str) -> str:
        if (source, target) not in self._directions:
            raise BackendError(f"direction {source}->{target} not served by mock")
        return mock_translate(text, source, target, self.mode, self.lossy_k, self.seed)


class BridgeBackend(TranslatorBackend):
    """Client for the out-of-process translator bridge.

    Protocol (JSON-lines over stdin/stdout): the bridge first emits a
    handshake with its supported direction list, then answers each
    {"text", "source", "target"} request with {"text": ...} or {"error": ...}.
    """

    thread_safe = False  # single request in flight per bridge process

    def __init__(self, argv: Sequence[str]):
        self._proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        handshake_line = self._proc.stdout.readline()
        if not handshake_line:
            raise BackendError("translator bridge closed before handshake")
        try:
            handshake = json.loads(handshake_line)
            directions = frozenset(
                (parse_language(s), parse_language(t))
                for s, t in handshake["directions"]
            )
        except (json.JSONDecodeError, KeyError, TypeError, PersuadeError) as exc:
            raise BackendError(f"bad bridge handshake: {exc}") from exc
        self._capability = directions
        self.manifest = handshake

    def capability(self) -> frozenset[tuple[str, str]]:
        return self._capability

    def translate(self, text: str, source: str, target: str) -> str:
        request = json.dumps(
            {"text": text, "source": source, "target": target}, ensure_ascii=False
        )
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"bridge process died: {exc}") from exc
        if not line:
            raise BackendError("bridge process closed its output")
        response = json.loads(line)
        if "error" in response:
            raise BackendError(str(response["error"]))
        if not response.get("text"):
            raise BackendError("bridge returned empty translation")
        return response["text"]

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def translated_id(origin: ParagraphId, source: str, target: str) -> ParagraphId:
    return ParagraphId(f"{origin.article_id}#T:{source}2{target}", origin.paragraph_index)


def back_translated_id(origin: ParagraphId, source: str, pivot: str) -> ParagraphId:
    return ParagraphId(
        f"{origin.article_id}#BT:{source}2{pivot}2{source}", origin.paragraph_index
    )


def _run_jobs(
    tasks: list[Paragraph],
    worker: Callable[[Paragraph], str],
    thread_safe: bool,
    jobs: int,
) -> list[str | Exception]:
    """Apply `worker` to every task, preserving input order in the results."""

    def guarded(p: Paragraph):
        try:
            return worker(p)
        except Exception as exc:  # collected; per-paragraph failure is not fatal
            return exc

    if jobs > 1 and thread_safe and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(guarded, tasks))
    return [guarded(p) for p in tasks]


def _finish(
    corpus_in: Corpus,
    eligible: list[Paragraph],
    results: list[str | Exception],
    make_paragraph: Callable[[Paragraph, str], Paragraph],
    make_record: Callable[[Paragraph], LedgerRecord],
    ledger: AugmentationLedger,
) -> Corpus:
    outputs = []
    for p, result in zip(eligible, results):
        if isinstance(result, Exception):
            ledger.failures.append((p.id, str(result)))
            continue
        out = make_paragraph(p, result)
        outputs.append(out)
        ledger.add(make_record(p))
    if eligible and not outputs:
        raise AugmentationError(
            f"all {len(eligible)} eligible paragraphs failed; first error: {ledger.failures[0][1]}"
        )
    return Corpus(outputs)


def translate_corpus(
    corpus: Corpus,
    target: str,
    backend: TranslatorBackend,
    jobs: int = 1,
) -> tuple[Corpus, AugmentationLedger]:
    """Translate every coverable paragraph into `target`, copying its labels.

    Spans are dropped: character offsets do not survive translation.
    """
    parse_language(target)
    ledger = AugmentationLedger()
    capability = backend.capability()
    eligible = []
    for p in corpus:
        if p.language == target or not is_covered(
            AugmentationKind.TRANSLATION, p.language, target
        ):
            ledger.skipped_uncovered += 1
            continue
        if (p.language, target) not in capability:
            ledger.skipped_capability += 1
            continue
        eligible.append(p)

    results = _run_jobs(
        eligible,
        lambda p: backend.translate(p.text, p.language, target),
        backend.thread_safe,
        jobs,
    )

    def make_paragraph(p: Paragraph, text: str) -> Paragraph:
        return Paragraph(
            id=translated_id(p.id, p.language, target),
            language=target,
            text=text,
            labels=p.labels,
            provenance=Provenance.translated(p.language, p.id),
        )

    def make_record(p: Paragraph) -> LedgerRecord:
        return LedgerRecord(
            origin=p.id,
            pipeline=AugmentationKind.TRANSLATION,
            path=(p.language, target),
            output=translated_id(p.id, p.language, target),
        )

    return _finish(corpus, eligible, results, make_paragraph, make_record, ledger), ledger


def back_translate_corpus(
    corpus: Corpus,
    pivot: str,
    backend: TranslatorBackend,
    jobs: int = 1,
) -> tuple[Corpus, AugmentationLedger]:
    """Paraphrase every coverable paragraph through `pivot`, copying its labels."""
    parse_language(pivot)
    ledger = AugmentationLedger()
    capability = backend.capability()
    eligible = []
    for p in corpus:
        if p.language == pivot or not is_covered(
            AugmentationKind.BACK_TRANSLATION, p.language, pivot
        ):
            ledger.skipped_uncovered += 1
            continue
        if (p.language, pivot) not in capability or (pivot, p.language) not in capability:
            ledger.skipped_capability += 1
            continue
        eligible.append(p)

    def round_trip(p: Paragraph) -> str:
        # Both hops are recomputed per call; forward translations are not cached.
        forward = backend.translate(p.text, p.language, pivot)
        return backend.translate(forward, pivot, p.language)

    results = _run_jobs(eligible, round_trip, backend.thread_safe, jobs)

    def make_paragraph(p: Paragraph, text: str) -> Paragraph:
        return Paragraph(
            id=back_translated_id(p.id, p.language, pivot),
            language=p.language,
            text=text,
            labels=p.labels,
            provenance=Provenance.back_translated(pivot, p.id),
        )

    def make_record(p: Paragraph) -> LedgerRecord:
        return LedgerRecord(
            origin=p.id,
            pipeline=AugmentationKind.BACK_TRANSLATION,
            path=(p.language, pivot, p.language),
            output=back_translated_id(p.id, p.language, pivot),
        )

    return _finish(corpus, eligible, results, make_paragraph, make_record, ledger), ledger
