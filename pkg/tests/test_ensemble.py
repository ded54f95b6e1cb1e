import random
from dataclasses import replace

import numpy as np
import pytest

from persuade.baseline import ScoreMatrix
from persuade.corpus import Corpus, ParagraphId
from persuade.ensemble import (
    THRESHOLD_GRID,
    Action,
    EnsembleConfig,
    EnsembleMember,
    HeuristicRule,
    apply_heuristics,
    apply_threshold,
    dump_ensemble_config,
    ensemble_predict,
    load_ensemble_config,
    question_words,
    select_ensemble,
    threshold_curve,
    tune_threshold,
    tune_voting_threshold,
)
from persuade.errors import ConfigError, PersuadeError
from persuade.metrics import f1_multilabel
from persuade.taxonomy import LANGUAGES, TECHNIQUES, parse_technique

from conftest import make_corpus, make_paragraph

LOADED = parse_technique("Loaded Language")
SLOGANS = parse_technique("Slogans")
DOUBT = parse_technique("Doubt")


def matrix_from(scores_by_id: dict[ParagraphId, dict]) -> ScoreMatrix:
    ids = tuple(scores_by_id)
    rows = np.zeros((len(ids), len(TECHNIQUES)))
    for i, pid in enumerate(ids):
        for technique, value in scores_by_id[pid].items():
            rows[i, TECHNIQUES.index(technique)] = value
    return ScoreMatrix(ids, rows)


class TestApplyThreshold:
    def test_boundary_is_inclusive(self):
        pid = ParagraphId("a", 0)
        matrix = matrix_from({pid: {LOADED: 0.35, SLOGANS: 0.30}})
        pred = apply_threshold(matrix, 0.3)
        assert pred[pid] == {LOADED, SLOGANS}
        pred4 = apply_threshold(matrix, 0.4)
        assert pred4[pid] == frozenset()

    def test_all_zero_scores_predict_nothing(self):
        pid = ParagraphId("a", 0)
        matrix = matrix_from({pid: {}})
        assert apply_threshold(matrix, 0.1)[pid] == frozenset()

    def test_threshold_must_be_on_grid(self):
        matrix = matrix_from({ParagraphId("a", 0): {}})
        with pytest.raises(PersuadeError):
            apply_threshold(matrix, 0.35)


class TestTuneThreshold:
    def test_indicator_scores_tie_to_smallest(self):
        corpus = make_corpus(
            make_paragraph("a", 0, labels=["Loaded Language"]),
            make_paragraph("a", 1, labels=["Slogans"]),
        )
        matrix = matrix_from(
            {
                ParagraphId("a", 0): {LOADED: 1.0},
                ParagraphId("a", 1): {SLOGANS: 1.0},
            }
        )
        assert tune_threshold(matrix, corpus) == 0.1

    def test_handcrafted_unique_maximum_at_04(self):
        corpus = make_corpus(
            make_paragraph("a", 0, labels=["Loaded Language"]),
            make_paragraph("a", 1, labels=["Slogans"]),
            make_paragraph("a", 2),
        )
        matrix = matrix_from(
            {
                ParagraphId("a", 0): {LOADED: 0.45, SLOGANS: 0.35},
                ParagraphId("a", 1): {SLOGANS: 0.45, DOUBT: 0.25},
                ParagraphId("a", 2): {LOADED: 0.15},
            }
        )
        curve = dict(threshold_curve(matrix, corpus))
        best = max(curve.values())
        winners = [t for t, f in curve.items() if f == best]
        assert winners == [0.4]  # unique by construction
        assert tune_threshold(matrix, corpus) == 0.4
        assert curve[0.4] == 1.0

    def test_constant_half_scores(self):
        corpus = make_corpus(make_paragraph("a", 0, labels=["Loaded Language"]))
        pid = ParagraphId("a", 0)
        matrix = ScoreMatrix((pid,), np.full((1, 23), 0.5))
        curve = dict(threshold_curve(matrix, corpus))
        # everything predicted through 0.5 (inclusive), nothing above
        assert curve[0.1] == curve[0.5] > 0
        assert curve[0.6] == 0.0
        assert tune_threshold(matrix, corpus) == 0.1

    def test_returned_threshold_attains_grid_maximum(self):
        rng = random.Random(4242)
        for _ in range(100):
            n = rng.randint(1, 15)
            ids = [ParagraphId("r", i) for i in range(n)]
            corpus = Corpus(
                [
                    make_paragraph(
                        "r",
                        i,
                        labels=[t.name for t in TECHNIQUES if rng.random() < 0.15],
                        text=f"text {i}",
                    )
                    for i in range(n)
                ]
            )
            matrix = ScoreMatrix(
                tuple(ids), np.array([[rng.random() for _ in TECHNIQUES] for _ in ids])
            )
            theta = tune_threshold(matrix, corpus)
            curve = dict(threshold_curve(matrix, corpus))
            best = max(curve.values())
            assert curve[theta] == best
            assert theta == min(t for t, f in curve.items() if f == best)

    def test_dev_ids_must_be_scored(self):
        corpus = make_corpus(make_paragraph("a", 0))
        matrix = matrix_from({ParagraphId("b", 0): {}})
        with pytest.raises(PersuadeError):
            tune_threshold(matrix, corpus)


class TestHeuristics:
    doubt_rule = HeuristicRule(
        technique=DOUBT, language="en", question_mark=True, question_words=("why", "how")
    )

    def test_assert_on_question_mark(self):
        corpus = make_corpus(make_paragraph("a", 0, "en", "Is this safe?"))
        pred = {ParagraphId("a", 0): frozenset()}
        out = apply_heuristics(pred, corpus, [self.doubt_rule])
        assert DOUBT in out[ParagraphId("a", 0)]

    def test_question_word_trigger(self):
        corpus = make_corpus(make_paragraph("a", 0, "en", "Why would anyone believe that"))
        out = apply_heuristics({}, corpus, [self.doubt_rule])
        assert DOUBT in out[ParagraphId("a", 0)]

    def test_no_trigger_leaves_predictions_unchanged(self):
        corpus = make_corpus(make_paragraph("a", 0, "en", "A calm statement."))
        pred = {ParagraphId("a", 0): frozenset({SLOGANS})}
        out = apply_heuristics(pred, corpus, [self.doubt_rule])
        assert out == pred

    def test_language_scoping(self):
        rule = HeuristicRule(technique=DOUBT, language="fr", question_mark=True)
        corpus = make_corpus(make_paragraph("a", 0, "en", "Quoi?"))
        out = apply_heuristics({}, corpus, [rule])
        assert out.get(ParagraphId("a", 0), frozenset()) == frozenset()

    def test_suppress_action(self):
        rule = HeuristicRule(
            technique=DOUBT, language="en", question_mark=True, action=Action.SUPPRESS
        )
        corpus = make_corpus(make_paragraph("a", 0, "en", "Really?"))
        pred = {ParagraphId("a", 0): frozenset({DOUBT, SLOGANS})}
        out = apply_heuristics(pred, corpus, [rule])
        assert out[ParagraphId("a", 0)] == {SLOGANS}

    def test_idempotence(self):
        corpus = make_corpus(
            make_paragraph("a", 0, "en", "Is this safe?"),
            make_paragraph("a", 1, "en", "Sure thing."),
        )
        pred = {ParagraphId("a", 1): frozenset({SLOGANS})}
        once = apply_heuristics(pred, corpus, [self.doubt_rule])
        twice = apply_heuristics(once, corpus, [self.doubt_rule])
        assert once == twice

    def test_rule_needs_a_trigger(self):
        with pytest.raises(PersuadeError):
            HeuristicRule(technique=DOUBT, language="en")

    def test_word_matching_is_word_level(self):
        # "howl" must not trigger the "how" word rule
        rule = HeuristicRule(technique=DOUBT, language="en", question_words=("how",))
        corpus = make_corpus(make_paragraph("a", 0, "en", "The howl of wolves."))
        out = apply_heuristics({}, corpus, [rule])
        assert out.get(ParagraphId("a", 0), frozenset()) == frozenset()

    def test_builtin_question_words_available_for_all_languages(self):
        for lang in LANGUAGES:
            words = question_words(lang)
            assert words, lang


def three_member_fixture():
    corpus = make_corpus(
        make_paragraph("a", 0, "en", "first", labels=["Loaded Language"]),
        make_paragraph("a", 1, "en", "second", labels=["Slogans"]),
        make_paragraph("a", 2, "en", "third"),
    )
    ids = corpus.ids()
    gold_pairs = {(ids[0], LOADED), (ids[1], SLOGANS)}

    def matrix(predicted_pairs):
        rows = np.zeros((3, 23))
        for pid, technique in predicted_pairs:
            rows[ids.index(pid), TECHNIQUES.index(technique)] = 1.0
        return ScoreMatrix(ids, rows)

    return corpus, ids, gold_pairs, matrix


class TestEnsemblePredict:
    def config_for(self, member_ids, v=1, heuristics=(), use_heuristics=frozenset()):
        members = tuple(
            EnsembleMember(m, use_heuristics=m in use_heuristics) for m in member_ids
        )
        thresholds = {(m, lang): 0.5 for m in member_ids for lang in LANGUAGES}
        return EnsembleConfig(
            members=members,
            thresholds=thresholds,
            heuristics=tuple(heuristics),
            voting_threshold=v,
        )

    def test_single_member_identity(self):
        corpus, ids, _, matrix = three_member_fixture()
        m = matrix({(ids[0], LOADED), (ids[2], DOUBT)})
        config = self.config_for(["solo"], v=1)
        out = ensemble_predict(config, {"solo": m}, corpus)
        assert out == apply_threshold(m, 0.5)

    def test_two_of_three_votes_predicts(self):
        corpus, ids, _, matrix = three_member_fixture()
        yes = {(ids[0], LOADED)}
        scores = {"m1": matrix(yes), "m2": matrix(yes), "m3": matrix(set())}
        config = self.config_for(["m1", "m2", "m3"], v=2)
        out = ensemble_predict(config, scores, corpus)
        assert LOADED in out[ids[0]]

    def test_one_of_three_votes_does_not_predict(self):
        corpus, ids, _, matrix = three_member_fixture()
        scores = {"m1": matrix({(ids[0], LOADED)}), "m2": matrix(set()), "m3": matrix(set())}
        config = self.config_for(["m1", "m2", "m3"], v=2)
        out = ensemble_predict(config, scores, corpus)
        assert out[ids[0]] == frozenset()

    def test_v1_is_union_and_vmax_is_intersection(self):
        rng = random.Random(12)
        for _ in range(20):
            corpus, ids, _, matrix = three_member_fixture()
            member_preds = {}
            for m in ("m1", "m2", "m3"):
                pairs = {
                    (pid, t)
                    for pid in ids
                    for t in TECHNIQUES
                    if rng.random() < 0.1
                }
                member_preds[m] = pairs
            scores = {m: matrix(pairs) for m, pairs in member_preds.items()}
            config = self.config_for(["m1", "m2", "m3"], v=1)
            union = ensemble_predict(config, scores, corpus)
            inter = ensemble_predict(replace(config, voting_threshold=3), scores, corpus)
            for pid in ids:
                expected_union = set()
                expected_inter = None
                for pairs in member_preds.values():
                    chosen = {t for q, t in pairs if q == pid}
                    expected_union |= chosen
                    expected_inter = chosen if expected_inter is None else expected_inter & chosen
                assert union[pid] == expected_union
                assert inter[pid] == expected_inter

    def test_monotone_in_voting_threshold(self):
        rng = random.Random(99)
        corpus, ids, _, matrix = three_member_fixture()
        scores = {
            m: matrix({(pid, t) for pid in ids for t in TECHNIQUES if rng.random() < 0.2})
            for m in ("m1", "m2", "m3")
        }
        config = self.config_for(["m1", "m2", "m3"])
        previous = None
        for v in (1, 2, 3):
            out = ensemble_predict(replace(config, voting_threshold=v), scores, corpus)
            pairs = {(pid, t) for pid, chosen in out.items() for t in chosen}
            if previous is not None:
                assert pairs <= previous
            previous = pairs

    def test_member_corpus_mismatch(self):
        corpus, ids, _, matrix = three_member_fixture()
        small = matrix(set()).subset(ids[:2])
        config = self.config_for(["m1"])
        with pytest.raises(PersuadeError, match="does not cover"):
            ensemble_predict(config, {"m1": small}, corpus)

    def test_heuristics_attached_to_one_member(self):
        corpus = make_corpus(make_paragraph("a", 0, "en", "Is it safe?", labels=["Doubt"]))
        pid = ParagraphId("a", 0)
        empty = matrix_from({pid: {}})
        rule = HeuristicRule(technique=DOUBT, language="en", question_mark=True)
        config = self.config_for(["plain", "heur"], v=1, heuristics=[rule], use_heuristics={"heur"})
        out = ensemble_predict(config, {"plain": empty, "heur": empty}, corpus)
        assert DOUBT in out[pid]
        config_plain = self.config_for(["plain", "other"], v=1, heuristics=[rule])
        out_plain = ensemble_predict(config_plain, {"plain": empty, "other": empty}, corpus)
        assert out_plain[pid] == frozenset()


class TestTuneVoting:
    def test_single_member_returns_one(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        config = TestEnsemblePredict().config_for(["only"], v=1)
        assert tune_voting_threshold(config, {"only": matrix(gold_pairs)}, corpus) == 1

    def test_identical_members_tie_to_one(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        scores = {"m1": matrix(gold_pairs), "m2": matrix(gold_pairs)}
        config = TestEnsemblePredict().config_for(["m1", "m2"], v=1)
        assert tune_voting_threshold(config, scores, corpus) == 1

    def test_two_noisy_one_incomplete_makes_v2_win(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        scores = {
            "a": matrix(gold_pairs | {(ids[2], DOUBT)}),      # one extra FP
            "b": matrix(gold_pairs | {(ids[2], LOADED)}),     # a different FP
            "c": matrix(gold_pairs - {(ids[1], SLOGANS)}),    # one FN
        }
        config = TestEnsemblePredict().config_for(["a", "b", "c"], v=1)
        # exhaustive check that v=2 is the unique argmax
        f1_by_v = {}
        for v in (1, 2, 3):
            pred = ensemble_predict(replace(config, voting_threshold=v), scores, corpus)
            f1_by_v[v] = f1_multilabel(corpus, pred).micro_f1
        assert f1_by_v[2] == 1.0
        assert f1_by_v[2] > f1_by_v[1] and f1_by_v[2] > f1_by_v[3]
        assert tune_voting_threshold(config, scores, corpus) == 2


class TestSelectEnsemble:
    def test_dominating_candidate_wins(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        scores = {
            "good": matrix(gold_pairs),
            "bad": matrix({(ids[2], DOUBT)}),
        }
        result = select_ensemble(
            [["good"], ["bad"]], scores, {"en": corpus}
        )
        assert [m.model_id for m in result["en"].members] == ["good"]

    def test_equal_candidates_tie_lexicographically(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        scores = {"alpha": matrix(gold_pairs), "beta": matrix(gold_pairs)}
        result = select_ensemble([["beta"], ["alpha"]], scores, {"en": corpus})
        assert [m.model_id for m in result["en"].members] == ["alpha"]

    def test_single_candidate(self):
        corpus, ids, gold_pairs, matrix = three_member_fixture()
        scores = {"only": matrix(gold_pairs)}
        result = select_ensemble([["only"]], scores, {"en": corpus})
        config = result["en"]
        assert config.voting_threshold == 1
        assert config.thresholds[("only", "en")] == 0.1  # indicator scores tie low


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        rule = HeuristicRule(
            technique=DOUBT, language="en", question_mark=True, question_words=("why",)
        )
        config = EnsembleConfig(
            members=(
                EnsembleMember("base", "base.tsv"),
                EnsembleMember("heur", "heur.tsv", use_heuristics=True),
            ),
            thresholds={("base", lang): 0.4 for lang in LANGUAGES}
            | {("heur", lang): 0.6 for lang in LANGUAGES},
            heuristics=(rule,),
            voting_threshold=2,
        )
        path = tmp_path / "ens.ini"
        dump_ensemble_config(config, path)
        again = load_ensemble_config(path)
        assert again.members == config.members
        assert again.thresholds == config.thresholds
        assert again.heuristics == config.heuristics
        assert again.voting_threshold == 2

    def test_builtin_question_words_expansion(self, tmp_path):
        path = tmp_path / "ens.ini"
        path.write_text(
            "[ensemble]\nmembers = m\nvoting_threshold = 1\n"
            "[member:m]\nscores = m.tsv\n"
            "[thresholds]\nm = 0.5\n"
            "[heuristic:doubt]\ntechnique = Doubt\nlanguage = en\nquestion_words = builtin\n",
            encoding="utf-8",
        )
        config = load_ensemble_config(path)
        assert config.heuristics[0].question_words == question_words("en")
        assert config.thresholds[("m", "ka")] == 0.5

    def test_voting_threshold_bounds(self):
        with pytest.raises(ConfigError):
            EnsembleConfig(
                members=(EnsembleMember("m"),),
                thresholds={},
                voting_threshold=2,
            )

    def test_missing_threshold_is_config_error(self):
        corpus, ids, _, matrix = three_member_fixture()
        config = EnsembleConfig(
            members=(EnsembleMember("m"),),
            thresholds={("m", "fr"): 0.5},  # corpus is en
            voting_threshold=1,
        )
        with pytest.raises(ConfigError, match="no threshold"):
            ensemble_predict(config, {"m": matrix(set())}, corpus)
