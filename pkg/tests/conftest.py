import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from persuade.corpus import Corpus, Paragraph, ParagraphId, Provenance, Span
from persuade.taxonomy import TECHNIQUES, parse_technique

DATA_DIR = Path(__file__).parent / "data"


def make_paragraph(
    article="a1",
    index=0,
    language="en",
    text="Make America great again!",
    labels=(),
    spans=(),
    provenance=None,
):
    label_set = frozenset(
        parse_technique(name) if isinstance(name, str) else name for name in labels
    )
    span_tuple = tuple(
        Span(start, end, parse_technique(t) if isinstance(t, str) else t)
        for start, end, t in spans
    )
    return Paragraph(
        id=ParagraphId(article, index),
        language=language,
        text=text,
        labels=label_set,
        spans=span_tuple,
        provenance=provenance or Provenance.gold(),
    )


def make_corpus(*paragraphs):
    return Corpus(paragraphs)


@pytest.fixture
def tiny_corpus():
    return make_corpus(
        make_paragraph("a1", 0, "en", "How stupid things are?", labels=["Loaded Language"]),
        make_paragraph("a1", 1, "en", "Make America great again!", labels=["Slogans"]),
        make_paragraph("a2", 0, "en", "Nothing to see here."),
    )
