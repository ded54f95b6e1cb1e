"""Which augmentation strategy helps which technique: OLS + sequential ANOVA.

The regression table has one row per (training set, test language, technique)
with that cell's per-label F1.  Factors are treatment-coded against the
alphabetically first level, so individual coefficients depend on the coding;
only coding-invariant quantities (R-squared, sums of squares, degrees of
freedom, predictions) are contractual.

Sequential (type-I) ANOVA attributes sums of squares to terms in the order
they enter the model; explained variance per term is 100 * SS_term /
SS_total, so the terms sum to 100 * R-squared.

Also here: aggregation of human quality ratings for (back-)translations.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats as sstats

from persuade.errors import (
    IncompleteDesignError,
    PersuadeError,
    RankDeficiencyError,
)
from persuade.metrics import EvalReport
from persuade.taxonomy import (
    AugmentationKind,
    TECHNIQUE_INDEX,
    TECHNIQUES,
    Technique,
    parse_language,
)

# Combined corpus sizes per training recipe (sum over the six languages),
# used to order effect-plot axes by ascending data volume.
RECIPE_TOTAL_SIZES: dict[str, int] = {
    "gold": 10_933,
    "+BT": 46_197,
    "+BT-sl": 57_585,
    "+T": 65_576,
    "+T+BT": 84_438,
    "+T+BT-sl": 95_826,
    "+span": 21_860,
}

FACTORS = ("label", "trainingSet", "testLang")
INTERACTIONS = ("trainingSet:label", "testLang:trainingSet")
FULL_MODEL_TERMS = ("label", "trainingSet", "testLang") + INTERACTIONS


@dataclass(frozen=True)
class RegressionRow:
    training_set: str
    test_language: str
    technique: str
    f1: float

    def __post_init__(self):
        if not (0.0 <= self.f1 <= 1.0):
            raise PersuadeError(f"F1 {self.f1} outside [0, 1]")


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[str, ...]

    def __post_init__(self):
        seen = set()
        for term in self.terms:
            if term not in FACTORS and term not in INTERACTIONS:
                raise PersuadeError(f"unknown model term {term!r}")
            if term in seen:
                raise PersuadeError(f"duplicate model term {term!r}")
            seen.add(term)
        for term in self.terms:
            if ":" in term:
                for main in term.split(":"):
                    if main not in self.terms:
                        raise PersuadeError(
                            f"interaction {term!r} requires main effect {main!r}"
                        )


FULL_MODEL = ModelSpec(FULL_MODEL_TERMS)


def build_table(
    eval_runs: Mapping[tuple[str, str], EvalReport],
) -> list[RegressionRow]:
    """One row per (training set, language, technique) from per-label F1.

    The provided (training set, language) cells must form a full factorial
    design; techniques missing from a report score 0.
    """
    training_sets = sorted({ts for ts, _ in eval_runs})
    languages = sorted({lang for _, lang in eval_runs})
    missing = [
        (ts, lang)
        for ts in training_sets
        for lang in languages
        if (ts, lang) not in eval_runs
    ]
    if missing:
        raise IncompleteDesignError(missing)

    rows = []
    for ts in training_sets:
        for lang in languages:
            report = eval_runs[(ts, lang)]
            for t in TECHNIQUES:
                scores = report.per_label.get(t)
                rows.append(
                    RegressionRow(ts, lang, t.name, scores.f1 if scores else 0.0)
                )
    return rows


def _factor_value(row: RegressionRow, factor: str) -> str:
    if factor == "label":
        return row.technique
    if factor == "trainingSet":
        return row.training_set
    if factor == "testLang":
        return row.test_language
    raise PersuadeError(f"unknown factor {factor!r}")


class DesignEncoder:
    """Treatment coding with the alphabetically first level as reference."""

    def __init__(self, table: Sequence[RegressionRow], spec: ModelSpec):
        self.spec = spec
        self.levels: dict[str, tuple[str, ...]] = {}
        for factor in FACTORS:
            values = sorted({_factor_value(row, factor) for row in table})
            self.levels[factor] = tuple(values)

        self.columns: list[str] = ["(Intercept)"]
        self.term_columns: dict[str, list[int]] = {}
        for term in spec.terms:
            start = len(self.columns)
            if ":" in term:
                a, b = term.split(":")
                for la in self.levels[a][1:]:
                    for lb in self.levels[b][1:]:
                        self.columns.append(f"{a}[{la}]:{b}[{lb}]")
            else:
                for level in self.levels[term][1:]:
                    self.columns.append(f"{term}[{level}]")
            self.term_columns[term] = list(range(start, len(self.columns)))

    def encode(self, rows: Sequence[RegressionRow]) -> np.ndarray:
        x = np.zeros((len(rows), len(self.columns)))
        x[:, 0] = 1.0
        for i, row in enumerate(rows):
            col = 1
            for term in self.spec.terms:
                if ":" in term:
                    a, b = term.split(":")
                    va, vb = _factor_value(row, a), _factor_value(row, b)
                    for la in self.levels[a][1:]:
                        for lb in self.levels[b][1:]:
                            if va == la and vb == lb:
                                x[i, col] = 1.0
                            col += 1
                else:
                    value = _factor_value(row, term)
                    for level in self.levels[term][1:]:
                        if value == level:
                            x[i, col] = 1.0
                        col += 1
        return x


@dataclass
class OlsFit:
    spec: ModelSpec
    encoder: DesignEncoder
    column_names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    r_squared: float
    adj_r_squared: float
    sigma_squared: float
    n_observations: int
    rank: int


def _solve_ls(x: np.ndarray, y: np.ndarray, column_names: Sequence[str]):
    """Least squares through column-pivoted QR; flags aliased columns."""
    q, r, pivots = sla.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(x.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < x.shape[1]:
        aliased = [column_names[j] for j in sorted(pivots[rank:])]
        raise RankDeficiencyError(aliased)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return beta, rank


def fit_ols(table: Sequence[RegressionRow], spec: ModelSpec) -> OlsFit:
    encoder = DesignEncoder(table, spec)
    x = encoder.encode(table)
    y = np.array([row.f1 for row in table])
    beta, rank = _solve_ls(x, y, encoder.columns)

    fitted = x @ beta
    residuals = y - fitted
    rss = float(residuals @ residuals)
    tss = float(np.sum((y - y.mean()) ** 2))
    n, p = x.shape
    r_squared = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r_squared) * (n - 1) / (n - p) if n > p else float("nan")
    df_res = n - p
    sigma2 = rss / df_res if df_res > 0 else 0.0
    xtx_inv = np.linalg.inv(x.T @ x)
    stderr = np.sqrt(np.maximum(np.diag(xtx_inv), 0.0) * sigma2)

    return OlsFit(
        spec=spec,
        encoder=encoder,
        column_names=tuple(encoder.columns),
        coefficients=beta,
        standard_errors=stderr,
        fitted=fitted,
        residuals=residuals,
        r_squared=r_squared,
        adj_r_squared=adj,
        sigma_squared=sigma2,
        n_observations=n,
        rank=rank,
    )


def _stars(p_value: float) -> str:
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class AnovaTerm:
    name: str
    df: int
    ss: float
    explvar: float
    f_stat: float
    p_value: float
    stars: str


@dataclass(frozen=True)
class AnovaTable:
    terms: tuple[AnovaTerm, ...]
    residual_df: int
    residual_ss: float
    total_ss: float
    r_squared: float
    adj_r_squared: float

    def explained_variance(self) -> float:
        return sum(t.explvar for t in self.terms)

    def to_tsv(self, sort_by_explvar: bool = True) -> str:
        terms = self.terms
        if sort_by_explvar:
            terms = tuple(sorted(terms, key=lambda t: -t.explvar))
        lines = ["term\tdf\tss\texplvar\tf\tp\tsign"]
        for t in terms:
            lines.append(
                f"{t.name}\t{t.df}\t{t.ss:.6g}\t{t.explvar:.2f}\t{t.f_stat:.4g}\t{t.p_value:.3g}\t{t.stars}"
            )
        lines.append(f"residual\t{self.residual_df}\t{self.residual_ss:.6g}\t\t\t\t")
        lines.append(f"total explained variance\t\t\t{self.explained_variance():.2f}\t\t\t")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "terms": [
                {
                    "term": t.name,
                    "df": t.df,
                    "ss": t.ss,
                    "explvar": t.explvar,
                    "f": t.f_stat,
                    "p": t.p_value,
                    "sign": t.stars,
                }
                for t in self.terms
            ],
            "residual": {"df": self.residual_df, "ss": self.residual_ss},
            "total_ss": self.total_ss,
            "r_squared": self.r_squared,
            "adj_r_squared": self.adj_r_squared,
            "total_explained_variance": self.explained_variance(),
        }


def anova_sequential(table: Sequence[RegressionRow], spec: ModelSpec) -> AnovaTable:
    """Type-I decomposition: each term's SS is the RSS drop when it is added."""
    full_fit = fit_ols(table, spec)  # validates rank of the full design
    y = np.array([row.f1 for row in table])
    n = len(y)
    tss = float(np.sum((y - y.mean()) ** 2))

    encoder = full_fit.encoder
    x_full = encoder.encode(table)

    def rss_of(columns: list[int]) -> tuple[float, int]:
        x = x_full[:, columns]
        beta, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid = y - x @ beta
        rank = int(np.linalg.matrix_rank(x))
        return float(resid @ resid), rank

    columns = [0]
    prev_rss, prev_rank = rss_of(columns)
    full_rank = x_full.shape[1]
    df_res = n - full_rank
    rss_full = float(full_fit.residuals @ full_fit.residuals)
    ms_res = rss_full / df_res if df_res > 0 else 0.0

    terms = []
    for term in spec.terms:
        columns = columns + encoder.term_columns[term]
        rss, rank = rss_of(columns)
        ss = prev_rss - rss
        df = rank - prev_rank
        if df <= 0:
            raise RankDeficiencyError([term])
        if ms_res > 0:
            f_stat = (ss / df) / ms_res
            p_value = float(sstats.f.sf(f_stat, df, df_res))
        else:
            f_stat = math.inf
            p_value = 0.0
        terms.append(
            AnovaTerm(
                name=term,
                df=df,
                ss=ss,
                explvar=100.0 * ss / tss if tss > 0 else 0.0,
                f_stat=f_stat,
                p_value=p_value,
                stars=_stars(p_value),
            )
        )
        prev_rss, prev_rank = rss, rank

    return AnovaTable(
        terms=tuple(terms),
        residual_df=df_res,
        residual_ss=rss_full,
        total_ss=tss,
        r_squared=full_fit.r_squared,
        adj_r_squared=full_fit.adj_r_squared,
    )


def _training_set_axis(levels: Iterable[str]) -> list[str]:
    """Training sets ordered by ascending combined corpus size; unknown names last."""
    known = [ts for ts in levels if ts in RECIPE_TOTAL_SIZES]
    unknown = sorted(ts for ts in levels if ts not in RECIPE_TOTAL_SIZES)
    return sorted(known, key=RECIPE_TOTAL_SIZES.__getitem__) + unknown


def _technique_axis(levels: Iterable[str]) -> list[str]:
    canonical = {t.name for t in TECHNIQUES}
    levels = list(levels)
    if all(name in canonical for name in levels):
        by_name = {t.name: TECHNIQUE_INDEX[t] for t in TECHNIQUES}
        return sorted(levels, key=by_name.__getitem__)
    return sorted(levels)


@dataclass(frozen=True)
class EffectCell:
    training_set: str
    technique: str
    predicted_f1: float


def effects(fit: OlsFit, factor_pair: tuple[str, str] = ("trainingSet", "label")) -> list[EffectCell]:
    """Marginal predictions per (training set, technique).

    Each cell is the model prediction averaged over the test-language levels
    with equal weights; rows come out ordered by ascending combined corpus
    size along the training-set axis.
    """
    a, b = factor_pair
    interaction = f"{a}:{b}"
    if interaction not in fit.spec.terms and f"{b}:{a}" not in fit.spec.terms:
        raise PersuadeError(f"fit has no {a}x{b} interaction term")
    if (a, b) != ("trainingSet", "label"):
        raise PersuadeError("only the (trainingSet, label) effect table is supported")

    languages = fit.encoder.levels["testLang"]
    cells = []
    for ts in _training_set_axis(fit.encoder.levels["trainingSet"]):
        for tech in _technique_axis(fit.encoder.levels["label"]):
            rows = [
                RegressionRow(ts, lang, tech, 0.0) for lang in languages
            ]
            x = fit.encoder.encode(rows)
            predictions = x @ fit.coefficients
            cells.append(EffectCell(ts, tech, float(predictions.mean())))
    return cells


def effects_csv(cells: Sequence[EffectCell]) -> str:
    lines = ["training_set,technique,predicted_f1"]
    for c in cells:
        technique = f'"{c.technique}"' if "," in c.technique else c.technique
        lines.append(f"{c.training_set},{technique},{c.predicted_f1:.6f}")
    return "\n".join(lines) + "\n"


# --- human-evaluation aggregation ----------------------------------------------


@dataclass(frozen=True)
class RatingRecord:
    """One human judgement of a translated or back-translated paragraph."""

    evaluation: AugmentationKind
    target_language: str
    source_language: str  # source for translations, pivot for back-translations
    technique: Technique
    fluency: int
    label_ok: bool
    fidelity: int | None = None
    surface_variability: int | None = None
    human_produced: bool | None = None

    def __post_init__(self):
        parse_language(self.target_language)
        parse_language(self.source_language)
        if not (1 <= self.fluency <= 5):
            raise PersuadeError(f"fluency {self.fluency} outside 1..5")
        if self.evaluation is AugmentationKind.BACK_TRANSLATION:
            if self.fidelity is None or self.surface_variability is None:
                raise PersuadeError("back-translation ratings need fidelity and surface variability")
            if self.human_produced is not None:
                raise PersuadeError("back-translation ratings carry no human-produced judgement")
            for value in (self.fidelity, self.surface_variability):
                if not (1 <= value <= 5):
                    raise PersuadeError(f"rating {value} outside 1..5")
        else:
            if self.fidelity is not None or self.surface_variability is not None:
                raise PersuadeError("translation ratings carry no fidelity/surface variability")
            if self.human_produced is None:
                raise PersuadeError("translation ratings need a human-produced judgement")


@dataclass(frozen=True)
class RatingsCell:
    n: int
    fluency_mean: float
    label_ok_pct: float
    fidelity_mean: float | None = None
    surface_variability_mean: float | None = None
    human_produced_pct: float | None = None
    label_ok_pct_by_technique: dict[str, float] | None = None


@dataclass(frozen=True)
class RatingsReport:
    """Cells keyed (evaluation, target, source); source=None is the Avg cell."""

    cells: dict[tuple[AugmentationKind, str, str | None], RatingsCell]


def _aggregate_cell(records: list[RatingRecord]) -> RatingsCell:
    n = len(records)
    kind = records[0].evaluation
    fluency = sum(r.fluency for r in records) / n
    label_ok = 100.0 * sum(r.label_ok for r in records) / n
    by_technique: dict[str, float] = {}
    groups: dict[str, list[RatingRecord]] = {}
    for r in records:
        groups.setdefault(r.technique.name, []).append(r)
    for name, group in groups.items():
        by_technique[name] = 100.0 * sum(g.label_ok for g in group) / len(group)
    if kind is AugmentationKind.BACK_TRANSLATION:
        return RatingsCell(
            n=n,
            fluency_mean=fluency,
            label_ok_pct=label_ok,
            fidelity_mean=sum(r.fidelity for r in records) / n,
            surface_variability_mean=sum(r.surface_variability for r in records) / n,
            label_ok_pct_by_technique=by_technique,
        )
    return RatingsCell(
        n=n,
        fluency_mean=fluency,
        label_ok_pct=label_ok,
        human_produced_pct=100.0 * sum(r.human_produced for r in records) / n,
        label_ok_pct_by_technique=by_technique,
    )


def aggregate_ratings(records: Sequence[RatingRecord]) -> RatingsReport:
    """Mean 1-5 aspects and yes-percentages per target language and per pair."""
    if not records:
        raise PersuadeError("no rating records to aggregate")
    cells: dict[tuple[AugmentationKind, str, str | None], list[RatingRecord]] = {}
    for r in records:
        cells.setdefault((r.evaluation, r.target_language, None), []).append(r)
        cells.setdefault((r.evaluation, r.target_language, r.source_language), []).append(r)
    return RatingsReport(
        cells={key: _aggregate_cell(group) for key, group in cells.items()}
    )


_RATING_COLUMNS = [
    "evaluation",
    "target_language",
    "source_or_pivot_language",
    "technique",
    "fluency",
    "fidelity",
    "surface_variability",
    "human_produced",
    "label_ok",
]


def _parse_bool(value: str) -> bool:
    value = value.strip().lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise PersuadeError(f"cannot parse boolean {value!r}")


def read_ratings_csv(path: str | Path) -> list[RatingRecord]:
    from persuade.taxonomy import parse_technique

    records = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_RATING_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise PersuadeError(f"{path}: missing rating columns {sorted(missing)}")
        for row in reader:
            kind = AugmentationKind(row["evaluation"].strip())
            is_bt = kind is AugmentationKind.BACK_TRANSLATION
            records.append(
                RatingRecord(
                    evaluation=kind,
                    target_language=row["target_language"].strip(),
                    source_language=row["source_or_pivot_language"].strip(),
                    technique=parse_technique(row["technique"]),
                    fluency=int(row["fluency"]),
                    label_ok=_parse_bool(row["label_ok"]),
                    fidelity=int(row["fidelity"]) if is_bt else None,
                    surface_variability=int(row["surface_variability"]) if is_bt else None,
                    human_produced=_parse_bool(row["human_produced"]) if not is_bt else None,
                )
            )
    return records


def ratings_report_csv(report: RatingsReport) -> str:
    """Long-format CSV: one row per cell, plus per-technique label rows."""
    lines = [
        "evaluation,target_language,source_or_pivot_language,technique,n,"
        "fluency_mean,fidelity_mean,surface_variability_mean,human_produced_pct,label_ok_pct"
    ]

    def fmt(value) -> str:
        return "" if value is None else f"{value:.4g}"

    for (kind, target, source), cell in sorted(
        report.cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1], kv[0][2] or "")
    ):
        source_label = source if source is not None else "Avg"
        lines.append(
            f"{kind.value},{target},{source_label},,{cell.n},"
            f"{fmt(cell.fluency_mean)},{fmt(cell.fidelity_mean)},"
            f"{fmt(cell.surface_variability_mean)},{fmt(cell.human_produced_pct)},"
            f"{fmt(cell.label_ok_pct)}"
        )
        for name in sorted(cell.label_ok_pct_by_technique or {}):
            quoted = f'"{name}"' if "," in name else name
            lines.append(
                f"{kind.value},{target},{source_label},{quoted},,,,,,"
                f"{fmt(cell.label_ok_pct_by_technique[name])}"
            )
    return "\n".join(lines) + "\n"


def save_anova_json(anova: AnovaTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(anova.to_json_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
