"""Multilingual persuasion-technique detection toolkit.

Covers the non-neural spine of a detection system: coverage-gated
(back-)translation augmentation with label transfer, dataset-recipe
assembly, a built-in baseline predictor plus a score-file contract for
external ones, threshold/vote ensembling, F1 and BLEU evaluation, and
regression analysis of augmentation strategies.
"""

__version__ = "0.1.0"

from persuade.taxonomy import (  # noqa: F401
    LANGUAGES,
    SURPRISE_LANGUAGES,
    TECHNIQUES,
    TRAINING_LANGUAGES,
    AugmentationKind,
    Category,
    Technique,
    category_of,
    is_covered,
    parse_language,
    parse_technique,
)
from persuade.corpus import (  # noqa: F401
    Corpus,
    Paragraph,
    ParagraphId,
    Provenance,
    ProvenanceKind,
    Span,
    stats,
)
from persuade.errors import PersuadeError  # noqa: F401
