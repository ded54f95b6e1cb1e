"""Threshold moving, language heuristics, and vote-sum ensembling.

Decision rules pinned here (and in the tests):
  - a technique is predicted when its score is >= the threshold (inclusive);
  - thresholds live on the nine-point grid 0.1 .. 0.9;
  - the ensemble adds a class when the vote sum is >= the voting threshold;
  - all tuning tie-breaks go to the smallest candidate value.
"""

from __future__ import annotations

import configparser
import enum
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from persuade.baseline import ScoreMatrix
from persuade.corpus import Corpus, ParagraphId, PredictionSet
from persuade.errors import ConfigError, PersuadeError
from persuade.metrics import f1_multilabel
from persuade.taxonomy import (
    LANGUAGES,
    TECHNIQUES,
    Technique,
    parse_language,
    parse_technique,
)

THRESHOLD_GRID: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

# Question-mark forms across the nine scripts (incl. Greek ';' and Spanish inverted).
QUESTION_MARKS = "?¿;？"

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def _check_grid(threshold: float) -> float:
    for g in THRESHOLD_GRID:
        if abs(threshold - g) < 1e-9:
            return g
    raise PersuadeError(f"threshold {threshold} not on the 0.1..0.9 grid")


def apply_threshold(scores: ScoreMatrix, threshold: float) -> PredictionSet:
    """Predict every technique whose score reaches the threshold (inclusive)."""
    threshold = _check_grid(threshold)
    pred: PredictionSet = {}
    for pid, row in zip(scores.ids, scores.scores):
        pred[pid] = frozenset(t for j, t in enumerate(TECHNIQUES) if row[j] >= threshold)
    return pred


def threshold_curve(scores: ScoreMatrix, dev_gold: Corpus) -> list[tuple[float, float]]:
    """Micro-F1 at every grid point, in grid order."""
    for pid in dev_gold.ids():
        if not scores.has(pid):
            raise PersuadeError(f"dev paragraph {pid} missing from score matrix")
    dev_scores = scores.subset(dev_gold.ids())
    curve = []
    for theta in THRESHOLD_GRID:
        report = f1_multilabel(dev_gold, apply_threshold(dev_scores, theta))
        curve.append((theta, report.micro_f1))
    return curve


def tune_threshold(scores: ScoreMatrix, dev_gold: Corpus) -> float:
    """Grid point maximizing dev micro-F1; ties go to the smallest threshold."""
    best_theta, best_f1 = None, -1.0
    for theta, f1 in threshold_curve(scores, dev_gold):
        if f1 > best_f1:
            best_theta, best_f1 = theta, f1
    return best_theta


class Action(enum.Enum):
    ASSERT = "assert"
    SUPPRESS = "suppress"


@dataclass(frozen=True)
class HeuristicRule:
    """Language-scoped override: on trigger, assert or suppress one technique."""

    technique: Technique
    language: str
    question_mark: bool = False
    question_words: tuple[str, ...] = ()
    action: Action = Action.ASSERT

    def __post_init__(self):
        parse_language(self.language)
        if not self.question_mark and not self.question_words:
            raise PersuadeError("heuristic rule needs at least one trigger")

    def matches(self, text: str) -> bool:
        if self.question_mark and any(ch in text for ch in QUESTION_MARKS):
            return True
        if self.question_words:
            words = {w.lower() for w in _WORD_RE.findall(text)}
            return any(qw.lower() in words for qw in self.question_words)
        return False


def question_words(language: str) -> tuple[str, ...]:
    """Per-language question-word list shipped as an editable data file."""
    parse_language(language)
    ref = resources.files("persuade").joinpath(f"data/question_words/{language}.txt")
    words = []
    for line in ref.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line)
    return tuple(words)


def apply_heuristics(
    pred: PredictionSet, corpus: Corpus, rules: Sequence[HeuristicRule]
) -> PredictionSet:
    """Apply rules to each paragraph of their language; idempotent by construction."""
    out: PredictionSet = dict(pred)
    for p in corpus:
        labels = set(out.get(p.id, frozenset()))
        changed = False
        for rule in rules:
            if rule.language != p.language or not rule.matches(p.text):
                continue
            if rule.action is Action.ASSERT:
                labels.add(rule.technique)
            else:
                labels.discard(rule.technique)
            changed = True
        if changed or p.id in out:
            out[p.id] = frozenset(labels)
    return out


@dataclass(frozen=True)
class EnsembleMember:
    model_id: str
    source: str = ""  # score file path or "builtin:<model path>"
    use_heuristics: bool = False


ThresholdProfile = dict[tuple[str, str], float]


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple[EnsembleMember, ...]
    thresholds: ThresholdProfile
    heuristics: tuple[HeuristicRule, ...] = ()
    voting_threshold: int = 1

    def __post_init__(self):
        if not self.members:
            raise ConfigError("ensemble needs at least one member")
        ids = [m.model_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate member model ids")
        if not (1 <= self.voting_threshold <= len(self.members)):
            raise ConfigError(
                f"voting threshold {self.voting_threshold} outside 1..{len(self.members)}"
            )
        for theta in self.thresholds.values():
            _check_grid(theta)

    def threshold_for(self, model_id: str, language: str) -> float:
        try:
            return self.thresholds[(model_id, language)]
        except KeyError:
            raise ConfigError(
                f"no threshold configured for model {model_id!r}, language {language!r}"
            ) from None


def member_votes(
    member: EnsembleMember,
    scores: ScoreMatrix,
    corpus: Corpus,
    config: EnsembleConfig,
) -> PredictionSet:
    votes: PredictionSet = {}
    for p in corpus:
        theta = config.threshold_for(member.model_id, p.language)
        row = scores.row(p.id)
        votes[p.id] = frozenset(
            t for j, t in enumerate(TECHNIQUES) if row[j] >= theta
        )
    if member.use_heuristics and config.heuristics:
        votes = apply_heuristics(votes, corpus, config.heuristics)
    return votes


def ensemble_predict(
    config: EnsembleConfig,
    member_scores: Mapping[str, ScoreMatrix],
    corpus: Corpus,
) -> PredictionSet:
    """Sum member votes; predict a class when the sum reaches the voting threshold."""
    for member in config.members:
        if member.model_id not in member_scores:
            raise PersuadeError(f"no score matrix for ensemble member {member.model_id!r}")
        matrix = member_scores[member.model_id]
        for pid in corpus.ids():
            if not matrix.has(pid):
                raise PersuadeError(
                    f"score matrix for member {member.model_id!r} does not cover paragraph {pid}"
                )

    counts: dict[ParagraphId, dict[Technique, int]] = {
        pid: {} for pid in corpus.ids()
    }
    for member in config.members:
        votes = member_votes(member, member_scores[member.model_id], corpus, config)
        for pid, labels in votes.items():
            for t in labels:
                counts[pid][t] = counts[pid].get(t, 0) + 1

    return {
        pid: frozenset(t for t, c in label_counts.items() if c >= config.voting_threshold)
        for pid, label_counts in counts.items()
    }


def tune_voting_threshold(
    config: EnsembleConfig,
    member_scores: Mapping[str, ScoreMatrix],
    dev_gold: Corpus,
) -> int:
    """Vote count in 1..|members| maximizing dev micro-F1; ties to the smallest."""
    best_v, best_f1 = None, -1.0
    for v in range(1, len(config.members) + 1):
        pred = ensemble_predict(replace(config, voting_threshold=v), member_scores, dev_gold)
        f1 = f1_multilabel(dev_gold, pred).micro_f1
        if f1 > best_f1:
            best_v, best_f1 = v, f1
    return best_v


def tune_member_thresholds(
    members: Sequence[EnsembleMember],
    member_scores: Mapping[str, ScoreMatrix],
    dev_gold_by_language: Mapping[str, Corpus],
) -> ThresholdProfile:
    profile: ThresholdProfile = {}
    for member in members:
        for language, dev in dev_gold_by_language.items():
            matrix = member_scores[member.model_id]
            profile[(member.model_id, language)] = tune_threshold(matrix, dev)
    return profile


def select_ensemble(
    candidates: Sequence[Sequence[str]],
    member_scores: Mapping[str, ScoreMatrix],
    dev_gold_by_language: Mapping[str, Corpus],
    heuristics: Sequence[HeuristicRule] = (),
    heuristic_members: frozenset[str] = frozenset(),
) -> dict[str, EnsembleConfig]:
    """Per language, pick the candidate member set with the best tuned dev micro-F1.

    Ties break toward the lexicographically smaller (sorted) member-id tuple.
    """
    if not candidates:
        raise PersuadeError("need at least one candidate member set")
    ordered = sorted({tuple(sorted(c)) for c in candidates})
    result: dict[str, EnsembleConfig] = {}
    for language, dev in dev_gold_by_language.items():
        best: tuple[float, EnsembleConfig] | None = None
        for candidate in ordered:
            members = tuple(
                EnsembleMember(model_id=m, use_heuristics=m in heuristic_members)
                for m in candidate
            )
            thresholds = tune_member_thresholds(
                members, member_scores, {language: dev}
            )
            config = EnsembleConfig(
                members=members,
                thresholds=thresholds,
                heuristics=tuple(heuristics),
                voting_threshold=1,
            )
            v = tune_voting_threshold(config, member_scores, dev)
            config = replace(config, voting_threshold=v)
            f1 = f1_multilabel(
                dev, ensemble_predict(config, member_scores, dev)
            ).micro_f1
            if best is None or f1 > best[0]:
                best = (f1, config)
        result[language] = best[1]
    return result


# --- config file (INI) --------------------------------------------------------


def load_ensemble_config(path: str | Path) -> EnsembleConfig:
    """Read the human-editable ensemble config.

    Layout:

        [ensemble]
        members = base, large
        voting_threshold = 2

        [member:base]
        scores = base.tsv
        heuristics = true

        [thresholds]
        base = 0.5          ; every language
        base.en = 0.3       ; per-language override

        [heuristic:doubt-en]
        technique = Doubt
        language = en
        question_mark = true
        question_words = builtin
        action = assert
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read ensemble config {path}")
    if "ensemble" not in parser:
        raise ConfigError(f"{path}: missing [ensemble] section")

    member_ids = [
        m.strip() for m in parser["ensemble"].get("members", "").split(",") if m.strip()
    ]
    if not member_ids:
        raise ConfigError(f"{path}: no members configured")

    members = []
    for model_id in member_ids:
        section = f"member:{model_id}"
        source = ""
        use_heuristics = False
        if section in parser:
            source = parser[section].get("scores", "")
            use_heuristics = parser[section].getboolean("heuristics", fallback=False)
        members.append(EnsembleMember(model_id, source, use_heuristics))

    thresholds: ThresholdProfile = {}
    if "thresholds" in parser:
        for key, value in parser["thresholds"].items():
            theta = float(value)
            if "." in key:
                model_id, language = key.rsplit(".", 1)
                thresholds[(model_id, parse_language(language))] = theta
            else:
                for language in LANGUAGES:
                    thresholds.setdefault((key, language), theta)

    heuristics = []
    for section in parser.sections():
        if not section.startswith("heuristic:"):
            continue
        s = parser[section]
        language = parse_language(s.get("language", ""))
        words_value = s.get("question_words", "").strip()
        if words_value == "builtin":
            words = question_words(language)
        elif words_value:
            words = tuple(w.strip() for w in words_value.split(",") if w.strip())
        else:
            words = ()
        heuristics.append(
            HeuristicRule(
                technique=parse_technique(s.get("technique", "")),
                language=language,
                question_mark=s.getboolean("question_mark", fallback=False),
                question_words=words,
                action=Action(s.get("action", "assert").lower()),
            )
        )

    voting_threshold = parser["ensemble"].getint("voting_threshold", fallback=1)
    try:
        return EnsembleConfig(
            members=tuple(members),
            thresholds=thresholds,
            heuristics=tuple(heuristics),
            voting_threshold=voting_threshold,
        )
    except PersuadeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_ensemble_config(config: EnsembleConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["ensemble"] = {
        "members": ", ".join(m.model_id for m in config.members),
        "voting_threshold": str(config.voting_threshold),
    }
    for m in config.members:
        section = f"member:{m.model_id}"
        parser[section] = {}
        if m.source:
            parser[section]["scores"] = m.source
        if m.use_heuristics:
            parser[section]["heuristics"] = "true"
    parser["thresholds"] = {
        f"{model_id}.{language}": repr(theta)
        for (model_id, language), theta in sorted(config.thresholds.items())
    }
    for i, rule in enumerate(config.heuristics):
        section = f"heuristic:{i}"
        parser[section] = {
            "technique": rule.technique.name,
            "language": rule.language,
            "action": rule.action.value,
        }
        if rule.question_mark:
            parser[section]["question_mark"] = "true"
        if rule.question_words:
            parser[section]["question_words"] = ", ".join(rule.question_words)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)
