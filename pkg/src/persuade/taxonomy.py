"""Canonical registry: techniques, categories, languages, MT coverage.

All data here is immutable after import; every lookup is a pure read and
safe for unrestricted concurrent use.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from persuade.errors import (
    SameLanguageError,
    UnknownLanguageError,
    UnknownTechniqueError,
)

# Language codes as used by the shared task ("ge" is German, "po" is Polish).
LANGUAGES: tuple[str, ...] = ("en", "fr", "it", "ru", "ge", "po", "es", "el", "ka")
TRAINING_LANGUAGES: frozenset[str] = frozenset(("en", "fr", "it", "ru", "ge", "po"))
SURPRISE_LANGUAGES: frozenset[str] = frozenset(("es", "el", "ka"))

LANGUAGE_FAMILIES: dict[str, tuple[str, str]] = {
    "en-ge": ("en", "ge"),
    "fr-it": ("fr", "it"),
    "ru-po": ("ru", "po"),
}


def parse_language(code: str) -> str:
    if code not in LANGUAGES:
        raise UnknownLanguageError(code)
    return code


class Category(enum.Enum):
    JUSTIFICATION = "Justification"
    SIMPLIFICATION = "Simplification"
    DISTRACTION = "Distraction"
    CALL = "Call"
    MANIPULATIVE_WORDING = "Manipulative Wording"
    ATTACK_TO_REPUTATION = "Attack to Reputation"


@dataclass(frozen=True)
class Technique:
    """One of the 23 fine-grained persuasion techniques."""

    name: str
    category: Category

    def __str__(self) -> str:
        return self.name


TECHNIQUES: tuple[Technique, ...] = (
    Technique("Appeal to Authority", Category.JUSTIFICATION),
    Technique("Appeal to Popularity", Category.JUSTIFICATION),
    Technique("Appeal to Values", Category.JUSTIFICATION),
    Technique("Appeal to Fear-Prejudice", Category.JUSTIFICATION),
    Technique("Flag Waving", Category.JUSTIFICATION),
    Technique("Causal Oversimplification", Category.SIMPLIFICATION),
    Technique("False Dilemma-No Choice", Category.SIMPLIFICATION),
    Technique("Consequential Oversimplification", Category.SIMPLIFICATION),
    Technique("Straw Man", Category.DISTRACTION),
    Technique("Whataboutism", Category.DISTRACTION),
    Technique("Red Herring", Category.DISTRACTION),
    Technique("Appeal to Time", Category.CALL),
    Technique("Slogans", Category.CALL),
    Technique("Conversation Killer", Category.CALL),
    Technique("Loaded Language", Category.MANIPULATIVE_WORDING),
    Technique("Repetition", Category.MANIPULATIVE_WORDING),
    Technique("Exaggeration-Minimisation", Category.MANIPULATIVE_WORDING),
    Technique("Obfuscation-Vagueness-Confusion", Category.MANIPULATIVE_WORDING),
    Technique("Appeal to Hypocrisy", Category.ATTACK_TO_REPUTATION),
    Technique("Doubt", Category.ATTACK_TO_REPUTATION),
    Technique("Name Calling-Labeling", Category.ATTACK_TO_REPUTATION),
    Technique("Guilt by Association", Category.ATTACK_TO_REPUTATION),
    Technique("Questioning the Reputation", Category.ATTACK_TO_REPUTATION),
)

TECHNIQUE_INDEX: dict[Technique, int] = {t: i for i, t in enumerate(TECHNIQUES)}

_SEPARATORS = re.compile(r"[\s_\-]+")


def _normalize_name(name: str) -> str:
    # Space, hyphen and underscore are interchangeable in the wild
    # ("Name Calling-Labeling" vs "Name_Calling-Labeling").
    return _SEPARATORS.sub(" ", name).strip()


_BY_NORMALIZED_NAME: dict[str, Technique] = {
    _normalize_name(t.name): t for t in TECHNIQUES
}


def parse_technique(name: str) -> Technique:
    """Resolve a technique by name, treating space/hyphen/underscore alike."""
    try:
        return _BY_NORMALIZED_NAME[_normalize_name(name)]
    except KeyError:
        raise UnknownTechniqueError(name) from None


def category_of(technique: Technique) -> Category:
    return technique.category


def techniques_in(category: Category) -> tuple[Technique, ...]:
    return tuple(t for t in TECHNIQUES if t.category is category)


class AugmentationKind(enum.Enum):
    TRANSLATION = "translation"
    BACK_TRANSLATION = "back_translation"


# MT model availability, transcribed from the published coverage table.
# Keyed target-major the way the table is printed: for each target language,
# the six-language sources it can be reached from, as a pair of flags
# (translation source->target, back-translation source->target->source).
# The matrix is asymmetric and must stay that way (e.g. po->en is a covered
# translation direction while en->po is not).
_COVERAGE_BY_TARGET: dict[str, dict[str, tuple[int, int]]] = {
    "en": {"fr": (1, 1), "it": (1, 1), "ru": (1, 1), "ge": (1, 1), "po": (1, 1)},
    "fr": {"en": (1, 1), "it": (1, 0), "ru": (1, 1), "ge": (1, 1), "po": (1, 1)},
    "it": {"en": (1, 1), "fr": (0, 0), "ru": (0, 0), "ge": (1, 1), "po": (0, 0)},
    "ru": {"en": (1, 1), "fr": (1, 1), "it": (0, 0), "ge": (0, 0), "po": (0, 0)},
    "ge": {"en": (1, 1), "fr": (1, 1), "it": (1, 1), "ru": (0, 0), "po": (1, 1)},
    "po": {"en": (0, 0), "fr": (1, 1), "it": (0, 0), "ru": (0, 0), "ge": (1, 1)},
    "es": {
        "en": (1, 1), "fr": (1, 1), "it": (1, 1),
        "ru": (1, 1), "ge": (1, 1), "po": (0, 0),
    },
    "el": {
        "en": (1, 0), "fr": (1, 1), "it": (0, 0),
        "ru": (0, 0), "ge": (1, 0), "po": (0, 0),
    },
    "ka": {
        "en": (0, 0), "fr": (0, 0), "it": (0, 0),
        "ru": (0, 0), "ge": (0, 0), "po": (0, 0),
    },
}


def _build_coverage() -> dict[tuple[AugmentationKind, str, str], bool]:
    entries: dict[tuple[AugmentationKind, str, str], bool] = {}
    for target, sources in _COVERAGE_BY_TARGET.items():
        for source, (trans, back) in sources.items():
            entries[(AugmentationKind.TRANSLATION, source, target)] = bool(trans)
            entries[(AugmentationKind.BACK_TRANSLATION, source, target)] = bool(back)
    return entries


COVERAGE: dict[tuple[AugmentationKind, str, str], bool] = _build_coverage()


def is_covered(kind: AugmentationKind, source: str, target: str) -> bool:
    """Whether an MT direction exists.

    For TRANSLATION this asks "can `source` text be rendered in `target`";
    for BACK_TRANSLATION it asks "can `source` text be paraphrased via the
    pivot `target`".  Directions not in the table (surprise-language
    sources) are reported as uncovered.
    """
    parse_language(source)
    parse_language(target)
    if source == target:
        raise SameLanguageError(source)
    return COVERAGE.get((kind, source, target), False)


def translation_sources(target: str) -> tuple[str, ...]:
    """Six-language sources with a covered translation direction into `target`."""
    return tuple(
        s
        for s in LANGUAGES
        if s in TRAINING_LANGUAGES
        and s != target
        and is_covered(AugmentationKind.TRANSLATION, s, target)
    )


def back_translation_pivots(source: str, include_surprise: bool = False) -> tuple[str, ...]:
    """Pivot languages through which `source` text can be paraphrased."""
    pivots = []
    for p in LANGUAGES:
        if p == source:
            continue
        if p in SURPRISE_LANGUAGES and not include_surprise:
            continue
        if is_covered(AugmentationKind.BACK_TRANSLATION, source, p):
            pivots.append(p)
    return tuple(pivots)


def export_techniques_tsv() -> str:
    lines = ["technique\tcategory"]
    lines += [f"{t.name}\t{t.category.value}" for t in TECHNIQUES]
    return "\n".join(lines) + "\n"


def export_coverage_tsv() -> str:
    lines = ["kind\tsource\ttarget\tcovered"]
    for kind in AugmentationKind:
        for target in LANGUAGES:
            for source in _COVERAGE_BY_TARGET[target]:
                covered = COVERAGE[(kind, source, target)]
                lines.append(f"{kind.value}\t{source}\t{target}\t{int(covered)}")
    return "\n".join(lines) + "\n"
