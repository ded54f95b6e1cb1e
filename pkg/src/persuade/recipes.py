"""Dataset-recipe assembly: gold plus (back-)translation and span additions.

Recipe algebra, per target language L:

    gold       gold[L]
    +T         gold[L] + translations into L from covered six-language sources
    +BT        gold[L] + back-translations of L text via covered six-language pivots
    +BT-sl     +BT plus back-translations via covered surprise pivots
    +T+BT      gold + T additions + BT additions (no surprise-target corpora)
    +T+BT-sl   gold + T additions + BT-sl additions (no surprise-target corpora)
    +span      gold[L] + one span-only instance per gold paragraph with spans

The +T recipe may create corpora for surprise target languages that have no
gold data of their own; the combined +T+BT(-sl) recipes exclude those.
"""

from __future__ import annotations

from dataclasses import dataclass

from persuade.corpus import (
    Corpus,
    Paragraph,
    ParagraphId,
    Provenance,
    ProvenanceKind,
    stats,
)
from persuade.errors import CoverageError, MissingLanguageError, PersuadeError
from persuade.taxonomy import (
    LANGUAGE_FAMILIES,
    SURPRISE_LANGUAGES,
    TECHNIQUES,
    TRAINING_LANGUAGES,
    AugmentationKind,
    Technique,
    is_covered,
)

RECIPE_NAMES: tuple[str, ...] = (
    "gold",
    "+T",
    "+BT",
    "+BT-sl",
    "+T+BT",
    "+T+BT-sl",
    "+span",
)


@dataclass(frozen=True)
class DatasetRecipe:
    name: str
    low_frequency_only: int | None = None
    family_group: frozenset[str] | None = None

    def __post_init__(self):
        if self.name not in RECIPE_NAMES:
            raise PersuadeError(
                f"unknown recipe {self.name!r}; expected one of {', '.join(RECIPE_NAMES)}"
            )
        if self.low_frequency_only is not None and self.low_frequency_only <= 0:
            raise PersuadeError("low-frequency threshold must be positive")


def span_only_additions(corpus: Corpus) -> list[Paragraph]:
    """One span-only instance per gold paragraph that has at least one span.

    The instance's text is the span texts joined by single spaces in textual
    order; its labels are the union of the spans' techniques.
    """
    additions = []
    for p in corpus:
        if p.provenance.kind is not ProvenanceKind.GOLD:
            raise PersuadeError(f"span injection expects gold paragraphs, got {p.provenance.kind.value}")
        if not p.spans:
            continue
        ordered = sorted(p.spans, key=lambda s: (s.start, s.end))
        text = " ".join(p.text[s.start : s.end] for s in ordered)
        labels = frozenset(s.technique for s in ordered)
        additions.append(
            Paragraph(
                id=ParagraphId(f"{p.id.article_id}#span", p.id.paragraph_index),
                language=p.language,
                text=text,
                labels=labels,
                provenance=Provenance.span_only(p.id),
            )
        )
    return additions


def inject_spans(corpus: Corpus) -> Corpus:
    """Gold corpus plus its span-only instances."""
    return corpus.merge(Corpus(span_only_additions(corpus))).sorted()


def select_low_frequency(corpus: Corpus, threshold: int) -> set[Technique]:
    """Techniques whose gold count in this corpus is strictly below `threshold`."""
    if threshold <= 0:
        raise PersuadeError("low-frequency threshold must be positive")
    counts = stats(corpus)
    return {t for t in TECHNIQUES if counts[t] < threshold}


def group_families(corpora: dict[str, Corpus]) -> dict[str, Corpus]:
    """Merge per-language corpora into the three language-family groups."""
    for lang in sorted(TRAINING_LANGUAGES):
        if lang not in corpora:
            raise MissingLanguageError(f"family grouping needs all six training languages; missing {lang!r}")
    return {
        group: corpora[a].merge(corpora[b]).sorted()
        for group, (a, b) in LANGUAGE_FAMILIES.items()
    }


def _validate_pool(paragraphs: list[Paragraph]) -> None:
    for p in paragraphs:
        kind = p.provenance.kind
        if kind is ProvenanceKind.GOLD:
            raise CoverageError(f"gold paragraph {p.id} does not belong in an augmentation pool")
        if kind is ProvenanceKind.TRANSLATED:
            source = p.provenance.source_or_pivot
            if not is_covered(AugmentationKind.TRANSLATION, source, p.language):
                raise CoverageError(
                    f"paragraph {p.id}: translation {source}->{p.language} is not a covered direction"
                )
        elif kind is ProvenanceKind.BACK_TRANSLATED:
            pivot = p.provenance.source_or_pivot
            if not is_covered(AugmentationKind.BACK_TRANSLATION, p.language, pivot):
                raise CoverageError(
                    f"paragraph {p.id}: back-translation of {p.language} via {pivot} is not covered"
                )


def _wanted(recipe_name: str, p: Paragraph) -> bool:
    kind = p.provenance.kind
    if recipe_name == "gold":
        return False
    if recipe_name == "+span":
        return kind is ProvenanceKind.SPAN_ONLY
    translated = kind is ProvenanceKind.TRANSLATED
    back = kind is ProvenanceKind.BACK_TRANSLATED
    six_pivot = back and p.provenance.source_or_pivot in TRAINING_LANGUAGES
    if recipe_name == "+T":
        return translated
    if recipe_name == "+BT":
        return six_pivot
    if recipe_name == "+BT-sl":
        return back
    if recipe_name == "+T+BT":
        return translated or six_pivot
    if recipe_name == "+T+BT-sl":
        return translated or back
    raise PersuadeError(f"unknown recipe {recipe_name!r}")


def assemble(
    recipe: DatasetRecipe,
    gold: dict[str, Corpus],
    pool: Corpus | list[Corpus],
) -> dict[str, Corpus]:
    """Assemble per-language training corpora for one recipe.

    `pool` holds augmented paragraphs of any language/provenance mix; each
    recipe selects its own slice.  Output corpora are sorted by paragraph id,
    so assembly is order-independent with respect to pool input ordering.
    """
    pool_paragraphs: list[Paragraph] = []
    for part in [pool] if isinstance(pool, Corpus) else list(pool):
        pool_paragraphs.extend(part)
    _validate_pool(pool_paragraphs)

    targets = set(gold)
    if recipe.name == "+T":
        targets |= {
            p.language
            for p in pool_paragraphs
            if p.provenance.kind is ProvenanceKind.TRANSLATED
        }

    out: dict[str, Corpus] = {}
    for lang in sorted(targets):
        base = list(gold.get(lang, Corpus()))
        additions = [
            p for p in pool_paragraphs if p.language == lang and _wanted(recipe.name, p)
        ]
        if recipe.low_frequency_only is not None:
            selected = select_low_frequency(
                gold.get(lang, Corpus()), recipe.low_frequency_only
            )
            additions = [p for p in additions if p.labels & selected]
        if lang in SURPRISE_LANGUAGES and recipe.name in ("+T+BT", "+T+BT-sl"):
            continue
        if not base and not additions:
            continue
        out[lang] = Corpus(base + additions).sorted()
    return out


def assemble_grouped(
    recipe: DatasetRecipe,
    gold: dict[str, Corpus],
    pool: Corpus | list[Corpus],
) -> dict[str, Corpus]:
    """Assemble, then merge into language families when the recipe asks for it."""
    per_language = assemble(recipe, gold, pool)
    if recipe.family_group is None:
        return per_language
    grouped = group_families(per_language)
    return {
        group: corpus
        for group, corpus in grouped.items()
        if set(LANGUAGE_FAMILIES[group]) & recipe.family_group
    }
