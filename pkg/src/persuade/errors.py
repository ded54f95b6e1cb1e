"""Exception hierarchy for data and validation failures.

Everything raised here maps to CLI exit code 2; anything else that escapes
is an internal error (exit code 3).
"""


class PersuadeError(Exception):
    """Base class for expected data/validation errors."""


class UnknownTechniqueError(PersuadeError):
    def __init__(self, name: str):
        super().__init__(f"unknown persuasion technique: {name!r}")
        self.name = name


class UnknownLanguageError(PersuadeError):
    def __init__(self, code: str):
        super().__init__(f"unknown language code: {code!r}")
        self.code = code


class SameLanguageError(PersuadeError):
    def __init__(self, code: str):
        super().__init__(f"source and target language are both {code!r}")
        self.code = code


class DuplicateIdError(PersuadeError):
    pass


class CorpusParseError(PersuadeError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class CoverageError(PersuadeError):
    """Augmentation pool inconsistent with the coverage matrix."""


class MissingLanguageError(PersuadeError):
    pass


class UnknownParagraphError(PersuadeError):
    pass


class OrphanParaphraseError(PersuadeError):
    pass


class SchemaError(PersuadeError):
    """Score file violates the score-TSV schema."""


class BackendError(PersuadeError):
    """A translator backend failed to serve a request."""


class AugmentationError(PersuadeError):
    """Every eligible paragraph in an augmentation run failed."""


class IncompleteDesignError(PersuadeError):
    def __init__(self, missing):
        cells = ", ".join(f"({ts}, {lang})" for ts, lang in missing)
        super().__init__(f"incomplete factorial design, missing cells: {cells}")
        self.missing = tuple(missing)


class RankDeficiencyError(PersuadeError):
    def __init__(self, aliased):
        super().__init__(
            "design matrix is rank deficient; aliased columns: "
            + ", ".join(aliased)
        )
        self.aliased = tuple(aliased)


class ConfigError(PersuadeError):
    pass
