"""Minimal reader for the canonical JSON-lines corpus format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from persuade_bridge import BridgeError
from persuade_bridge.wire import LANGUAGES


@dataclass(frozen=True)
class ParagraphRow:
    article_id: str
    paragraph_index: int
    language: str
    text: str


def read_corpus(path: str | Path) -> list[ParagraphRow]:
    """Validate and load what the predictor needs: ids, language, text.

    Validation happens up front so a bad corpus fails before any model work.
    """
    rows = []
    seen = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                row = ParagraphRow(
                    article_id=str(d["article_id"]),
                    paragraph_index=int(d["paragraph_index"]),
                    language=str(d["language"]),
                    text=str(d["text"]),
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise BridgeError(f"{path}:{line_no}: {exc}") from exc
            if row.language not in LANGUAGES:
                raise BridgeError(f"{path}:{line_no}: unknown language code {row.language!r}")
            if not row.text:
                raise BridgeError(f"{path}:{line_no}: empty text")
            key = (row.article_id, row.paragraph_index)
            if key in seen:
                raise BridgeError(f"{path}:{line_no}: duplicate paragraph id {key}")
            seen.add(key)
            rows.append(row)
    if not rows:
        raise BridgeError(f"{path}: empty corpus")
    return rows
