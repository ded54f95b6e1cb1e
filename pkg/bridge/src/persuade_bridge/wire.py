"""Wire-format constants this bridge must honor.

These mirror the main toolkit's published contracts: the canonical
23-technique column order of score TSVs, the nine language codes, and the
MT direction set implied by the published coverage table.  They are
re-declared here (not imported) because the bridge's only coupling to the
toolkit is files and pipes; the toolkit's validators are the contract tests.
"""

TECHNIQUE_ORDER: tuple[str, ...] = (
    "Appeal to Authority",
    "Appeal to Popularity",
    "Appeal to Values",
    "Appeal to Fear-Prejudice",
    "Flag Waving",
    "Causal Oversimplification",
    "False Dilemma-No Choice",
    "Consequential Oversimplification",
    "Straw Man",
    "Whataboutism",
    "Red Herring",
    "Appeal to Time",
    "Slogans",
    "Conversation Killer",
    "Loaded Language",
    "Repetition",
    "Exaggeration-Minimisation",
    "Obfuscation-Vagueness-Confusion",
    "Appeal to Hypocrisy",
    "Doubt",
    "Name Calling-Labeling",
    "Guilt by Association",
    "Questioning the Reputation",
)

LANGUAGES: tuple[str, ...] = ("en", "fr", "it", "ru", "ge", "po", "es", "el", "ka")

SCORE_HEADER: tuple[str, ...] = ("article_id", "paragraph_index") + TECHNIQUE_ORDER

# Directions served by the published MarianMT family: every covered
# translation direction, plus the reverse hops that the covered
# back-translations require.
MARIAN_DIRECTIONS: frozenset[tuple[str, str]] = frozenset(
    {
        # translation directions (source -> target)
        ("en", "fr"), ("en", "it"), ("en", "ru"), ("en", "ge"), ("en", "es"), ("en", "el"),
        ("fr", "en"), ("fr", "ru"), ("fr", "ge"), ("fr", "po"), ("fr", "es"), ("fr", "el"),
        ("it", "en"), ("it", "fr"), ("it", "ge"), ("it", "es"),
        ("ru", "en"), ("ru", "fr"), ("ru", "es"),
        ("ge", "en"), ("ge", "fr"), ("ge", "it"), ("ge", "po"), ("ge", "es"), ("ge", "el"),
        ("po", "en"), ("po", "fr"), ("po", "ge"),
        # reverse hops needed only by back-translation pivots
        ("es", "en"), ("es", "fr"), ("es", "it"), ("es", "ru"), ("es", "ge"),
        ("el", "fr"),
        ("en", "po"),  # required by the covered po->en->po round trip
    }
)

# Task language codes -> ISO codes used in public MT model names.
ISO_CODES: dict[str, str] = {
    "en": "en", "fr": "fr", "it": "it", "ru": "ru",
    "ge": "de", "po": "pl", "es": "es", "el": "el", "ka": "ka",
}


def parse_directions(spec: str) -> frozenset[tuple[str, str]]:
    """Parse "en2fr,fr2en" or the "table" preset."""
    if spec == "table":
        return MARIAN_DIRECTIONS
    directions = set()
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            source, target = part.split("2")
        except ValueError:
            raise SystemExit(f"bad direction {part!r}; expected like en2fr")
        if source not in LANGUAGES or target not in LANGUAGES or source == target:
            raise SystemExit(f"bad direction {part!r}")
        directions.add((source, target))
    if not directions:
        raise SystemExit("no directions given")
    return frozenset(directions)
