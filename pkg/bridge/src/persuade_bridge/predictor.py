"""Score external (or stub) predictors over a corpus into the score TSV."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Protocol, Sequence

from persuade_bridge import BridgeError
from persuade_bridge.corpus_io import ParagraphRow, read_corpus
from persuade_bridge.wire import SCORE_HEADER, TECHNIQUE_ORDER


class Predictor(Protocol):
    model_id: str

    def score(self, row: ParagraphRow) -> list[float]:
        """One probability per technique, in canonical order."""


class StubPredictor:
    """Deterministic pseudo-probabilities keyed by content; no ML stack.

    Useful for protocol/contract testing and dry runs: identical inputs and
    model id always produce identical files.
    """

    def __init__(self, model_id: str):
        self.model_id = model_id

    def score(self, row: ParagraphRow) -> list[float]:
        scores = []
        for technique in TECHNIQUE_ORDER:
            digest = hashlib.blake2b(
                f"{self.model_id}\x1f{row.article_id}\x1f{row.paragraph_index}"
                f"\x1f{row.text}\x1f{technique}".encode("utf-8"),
                digest_size=8,
            ).digest()
            value = int.from_bytes(digest, "big") / float(2**64)
            scores.append(value)
        return scores


class HfPredictor:
    """Multi-label transformer classifier via the transformers pipeline.

    The checkpoint's label names must map onto the canonical technique set;
    anything else is a configuration error, not a silent reorder.
    """

    def __init__(self, model_name: str):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise BridgeError(
                "transformers is not installed; use the stub predictor or install persuade-bridge[hf]"
            ) from exc
        self.model_id = f"hf:{model_name}"
        try:
            self._pipe = pipeline("text-classification", model=model_name, top_k=None)
        except Exception as exc:
            raise BridgeError(f"cannot load model {model_name!r}: {exc}") from exc
        self._canonical = {name.replace("_", " ").replace("-", " "): name for name in TECHNIQUE_ORDER}

    def score(self, row: ParagraphRow) -> list[float]:
        results = self._pipe(row.text, truncation=True)[0]
        by_name: dict[str, float] = {}
        for item in results:
            label = item["label"].replace("_", " ").replace("-", " ")
            if label not in self._canonical:
                raise BridgeError(f"model emits unknown label {item['label']!r}")
            by_name[self._canonical[label]] = float(item["score"])
        missing = [name for name in TECHNIQUE_ORDER if name not in by_name]
        if missing:
            raise BridgeError(f"model omitted labels: {missing[:3]}...")
        return [by_name[name] for name in TECHNIQUE_ORDER]


def load_predictor(model_id: str) -> Predictor:
    if model_id.startswith("stub"):
        return StubPredictor(model_id)
    if model_id.startswith("hf:"):
        return HfPredictor(model_id[len("hf:") :])
    raise BridgeError(f"unknown model id {model_id!r}; expected stub[:tag] or hf:<name>")


def _self_check(lines: Sequence[str]) -> None:
    """Validate the score TSV against its schema before anything is written."""
    header = lines[0].split("\t")
    if tuple(header) != SCORE_HEADER:
        raise BridgeError("self-check failed: bad header")
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(SCORE_HEADER):
            raise BridgeError(f"self-check failed: row has {len(parts)} columns")
        for cell in parts[2:]:
            value = float(cell)
            if not (0.0 <= value <= 1.0):
                raise BridgeError(f"self-check failed: score {value} out of [0, 1]")


def emit_scores(corpus_path: str | Path, model_id: str, out_path: str | Path) -> int:
    """Score every paragraph and write a schema-valid score TSV.

    Returns the number of scored paragraphs.
    """
    rows = read_corpus(corpus_path)  # validates before any model work
    predictor = load_predictor(model_id)
    lines = ["\t".join(SCORE_HEADER)]
    for row in rows:
        scores = predictor.score(row)
        if len(scores) != len(TECHNIQUE_ORDER):
            raise BridgeError(f"predictor returned {len(scores)} scores")
        cells = "\t".join("%.9g" % value for value in scores)
        lines.append(f"{row.article_id}\t{row.paragraph_index}\t{cells}")
    _self_check(lines)
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(rows)
