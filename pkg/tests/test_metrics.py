import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import direct_bleu, make_dataset
from viclevr import metrics
from viclevr.dataset import PredictionSet
from viclevr.metrics import (
    AnswerScore,
    BleuConfig,
    MeteorConfig,
    RougeConfig,
    answer_prf1,
    bleu_corpus,
    evaluate_all,
    exact_match_accuracy,
    f1_overall,
    meteor,
    rouge_l,
)
from viclevr.textproc import align_unigrams

TOKENS = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=8).map(tuple)


def score(qid, f1=0.0, exact=False):
    return AnswerScore(
        question_id=qid,
        precision=f1,
        recall=f1,
        f1=f1,
        exact_match=exact,
        rouge_l=0.0,
        meteor=0.0,
    )


# ---------------------------------------------------------------------------
# precision / recall / F1


def test_prf1_worked_example():
    p, r, f1 = answer_prf1(aa=("xanh",), sa=("màu", "xanh"))
    assert (p, r) == (1.0, 0.5)
    assert abs(f1 - 2 / 3) < 1e-9


def test_prf1_identity_and_disjoint():
    assert answer_prf1(("a", "b"), ("a", "b")) == (1.0, 1.0, 1.0)
    assert answer_prf1(("a",), ("b",)) == (0.0, 0.0, 0.0)


def test_prf1_empty_conventions():
    assert answer_prf1((), ()) == (1.0, 1.0, 1.0)
    assert answer_prf1((), ("a",)) == (0.0, 0.0, 0.0)
    assert answer_prf1(("a",), ()) == (0.0, 0.0, 0.0)


def test_prf1_multiset_counting():
    # the duplicated token only matches as often as it appears in the answer
    p, r, _ = answer_prf1(("a", "a", "b"), ("a", "b"))
    assert abs(p - 2 / 3) < 1e-12
    assert r == 1.0


@settings(max_examples=200, deadline=None)
@given(TOKENS, TOKENS)
def test_prf1_harmonic_identity_and_range(aa, sa):
    p, r, f1 = answer_prf1(aa, sa)
    assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f1 <= 1.0
    if p + r > 0:
        assert abs(f1 * (p + r) - 2 * p * r) < 1e-12


# ---------------------------------------------------------------------------
# aggregates


def test_f1_overall_examples():
    assert f1_overall([score(0, 1.0), score(1, 0.5)]) == 0.75
    assert f1_overall([score(i, 0.0) for i in range(3)]) == 0.0
    got = f1_overall([score(0, 2 / 3), score(1, 1.0), score(2, 0.0)])
    assert abs(got - 5 / 9) < 1e-12


def test_f1_overall_order_independent():
    scores = [score(i, f1) for i, f1 in enumerate([0.1, 0.7, 0.4])]
    assert f1_overall(scores) == f1_overall(list(reversed(scores)))


def test_f1_overall_rejects_empty():
    with pytest.raises(ValueError):
        f1_overall([])


def test_exact_match_accuracy_counting():
    gold = make_dataset([(i, 0, "q ?", a) for i, a in enumerate("abcd")])
    preds = PredictionSet(entries=[(0, "a"), (1, "b"), (2, "c"), (3, "x")])
    assert exact_match_accuracy(preds, gold) == 0.75


def test_exact_match_normalizes_and_counts_missing_wrong():
    gold = make_dataset([(0, 0, "q ?", "Màu Đỏ"), (1, 0, "q2 ?", "hai")])
    preds = PredictionSet(entries=[(0, "màu  đỏ")])
    assert exact_match_accuracy(preds, gold) == 0.5


# ---------------------------------------------------------------------------
# BLEU


def test_bleu_identity_corpus():
    pairs = [(("a", "b", "c"), ("a", "b", "c")), (("x", "y", "z", "w"), ("x", "y", "z", "w"))]
    assert abs(bleu_corpus(pairs) - 1.0) < 1e-12


def test_bleu_single_pair_worked_example():
    pairs = [(("một", "khối", "trụ"), ("một", "khối", "lập", "phương"))]
    got = bleu_corpus(pairs, BleuConfig(max_n=1))
    assert abs(got - (2 / 3) * math.exp(-1 / 3)) < 1e-9
    assert abs(got - 0.47768754038252614) < 1e-9


def test_bleu_zero_overlap_without_smoothing():
    assert bleu_corpus([(("a", "b"), ("c", "d"))]) == 0.0


def test_bleu_add_one_smoothing_is_positive():
    got = bleu_corpus([(("a", "b"), ("c", "d"))], BleuConfig(smoothing="add_one"))
    assert got > 0.0


def test_bleu_brevity_penalty_capped_at_one():
    # hypothesis longer than reference: no penalty
    got = bleu_corpus([(("a", "b", "c"), ("a", "b"))], BleuConfig(max_n=1))
    assert abs(got - 2 / 3) < 1e-12


def test_bleu_rejects_degenerate_corpora():
    with pytest.raises(ValueError):
        bleu_corpus([])
    with pytest.raises(ValueError):
        bleu_corpus([((), ("a",))])


def test_bleu_config_validation():
    with pytest.raises(ValueError):
        BleuConfig(max_n=2, weights=(1.0,))
    with pytest.raises(ValueError):
        BleuConfig(max_n=2, weights=(0.8, 0.8))
    with pytest.raises(ValueError):
        BleuConfig(smoothing="laplace")


def test_bleu_matches_independent_direct_evaluation():
    rng = random.Random(123)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(50):
        pairs = []
        for _ in range(rng.randint(1, 6)):
            hypo = tuple(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            ref = tuple(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            pairs.append((hypo, ref))
        for smoothing in ("none", "add_one"):
            got = bleu_corpus(pairs, BleuConfig(smoothing=smoothing))
            expected = direct_bleu(pairs, smoothing=smoothing)
            assert abs(got - expected) < 1e-9, (pairs, smoothing)


def test_bleu_p1_monotone_under_perfect_pairs():
    pairs = [(("a", "b", "x"), ("a", "b", "y"))]
    base = bleu_corpus(pairs, BleuConfig(max_n=1))
    extended = bleu_corpus(pairs + [(("c", "d"), ("c", "d"))], BleuConfig(max_n=1))
    assert extended >= base


# ---------------------------------------------------------------------------
# ROUGE-L


def test_rouge_identity_for_any_beta():
    tokens = ("a", "b", "c")
    for beta in (0.5, 1.0, 1.2, 3.0):
        assert abs(rouge_l(tokens, tokens, RougeConfig(beta=beta)) - 1.0) < 1e-12


def test_rouge_worked_example():
    got = rouge_l(("a", "c", "d"), ("a", "b", "c", "d"))
    assert abs(got - 0.8356164383561644) < 1e-9


def test_rouge_disjoint_and_empty():
    assert rouge_l(("a",), ("b",)) == 0.0
    assert rouge_l((), ()) == 1.0
    assert rouge_l((), ("a",)) == 0.0
    assert rouge_l(("a",), ()) == 0.0


def test_rouge_beta_invariant_when_p_equals_r():
    hypo, ref = ("a", "x", "b"), ("a", "y", "b")  # LCS 2, equal lengths
    values = {rouge_l(hypo, ref, RougeConfig(beta=b)) for b in (0.5, 1.2, 4.0)}
    assert max(values) - min(values) < 1e-12


def test_rouge_config_validation():
    with pytest.raises(ValueError):
        RougeConfig(beta=0.0)
    with pytest.raises(ValueError):
        RougeConfig(beta=float("inf"))


# ---------------------------------------------------------------------------
# METEOR


def test_meteor_identity_is_fixed_for_any_length():
    for length in (1, 2, 5, 9):
        tokens = tuple(f"t{i}" for i in range(length))
        assert abs(meteor(tokens, tokens) - 0.9375) < 1e-9


def test_meteor_worked_example():
    got = meteor(("một", "khối", "đỏ"), ("một", "khối", "màu", "đỏ"))
    f_mean = 7.5 / 9.75
    penalty = 0.5 * (3 / 7) ** 3
    assert abs(got - f_mean * (1 - penalty)) < 1e-9
    assert abs(got - 0.738954922628392) < 1e-9


def test_meteor_disjoint_and_empty():
    assert meteor(("a",), ("b",)) == 0.0
    assert meteor((), ()) == 1.0
    assert meteor((), ("a",)) == 0.0
    assert meteor(("a",), ()) == 0.0


def test_meteor_canonical_chunk_penalty():
    tokens = ("a", "b", "c", "d")
    cfg = MeteorConfig(penalty_mode="canonical")
    # identity: one chunk out of four matches
    assert abs(meteor(tokens, tokens, cfg) - (1 - 0.5 * (1 / 4) ** 3)) < 1e-12
    # a crossing alignment splits into more chunks and is penalized harder
    assert meteor(("a", "c"), ("a", "b", "c"), cfg) < meteor(
        ("a", "c"), ("a", "c"), cfg
    )


def test_meteor_config_validation():
    with pytest.raises(ValueError):
        MeteorConfig(penalty_mode="strict")


@settings(max_examples=200, deadline=None)
@given(TOKENS, TOKENS)
def test_meteor_literal_penalty_bound(hypo, ref):
    got = meteor(hypo, ref)
    assert 0.0 <= got <= 1.0
    if not hypo or not ref:
        return
    # shared count <= min length, so the penalty caps at 0.5*(1/2)^3 and the
    # score stays within 6.25% of the harmonic mean
    m = len(align_unigrams(hypo, ref).pairs)
    if m:
        p, r = m / len(hypo), m / len(ref)
        f_mean = 10 * p * r / (r + 9 * p)
        assert got >= 0.9375 * f_mean - 1e-12


# ---------------------------------------------------------------------------
# evaluate_all


def gold_and_preds(answers, predictions):
    gold = make_dataset(
        [(i, 0, f"câu hỏi {i} ?", a) for i, a in enumerate(answers)]
    )
    preds = PredictionSet(entries=list(enumerate(predictions)))
    return gold, preds


def test_evaluate_all_identity_composition():
    gold, preds = gold_and_preds(["một khối", "màu đỏ", "hai"], ["một khối", "màu đỏ", "hai"])
    corpus, scores = evaluate_all(preds, gold)
    assert corpus.accuracy == 1.0
    assert corpus.f1_overall == 1.0
    assert abs(corpus.bleu - 1.0) < 1e-12
    assert corpus.rouge_l_mean == 1.0
    assert abs(corpus.meteor_mean - 0.9375) < 1e-9
    assert all(s.exact_match for s in scores)


def test_evaluate_all_disjoint_answers_score_zero():
    gold, preds = gold_and_preds(["một", "hai"], ["xyz", "abc"])
    corpus, _ = evaluate_all(preds, gold)
    row = corpus.as_row()
    assert all(row[c] == 0.0 for c in metrics.REPORT_COLUMNS)


def test_evaluate_all_missing_predictions_count_wrong():
    gold, _ = gold_and_preds(["một", "hai"], [])
    corpus, scores = evaluate_all(PredictionSet(entries=[(0, "một")]), gold)
    assert corpus.accuracy == 0.5
    assert [s.exact_match for s in scores] == [True, False]


def test_evaluate_all_all_empty_hypotheses():
    gold, preds = gold_and_preds(["một", "hai"], ["", ""])
    corpus, _ = evaluate_all(preds, gold)
    assert corpus.bleu == 0.0
    assert corpus.accuracy == 0.0


def test_evaluate_all_order_independent():
    gold, _ = gold_and_preds(["một", "hai", "ba"], [])
    forward = PredictionSet(entries=[(0, "một"), (1, "x"), (2, "ba")])
    backward = PredictionSet(entries=[(2, "ba"), (0, "một"), (1, "x")])
    a, _ = evaluate_all(forward, gold)
    b, _ = evaluate_all(backward, gold)
    assert a == b


def test_evaluate_all_rejects_empty_gold():
    gold = make_dataset([], n_images=1)
    with pytest.raises(ValueError):
        evaluate_all(PredictionSet(), gold)


def test_report_row_has_fixed_column_order():
    gold, preds = gold_and_preds(["một"], ["một"])
    corpus, _ = evaluate_all(preds, gold)
    assert tuple(corpus.as_row()) == metrics.REPORT_COLUMNS


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(TOKENS, TOKENS), min_size=1, max_size=4))
def test_all_measures_stay_in_unit_interval(pairs):
    gold, preds = gold_and_preds(
        [" ".join(ref) for _, ref in pairs], [" ".join(hypo) for hypo, _ in pairs]
    )
    corpus, scores = evaluate_all(preds, gold)
    row = corpus.as_row()
    assert all(0.0 <= row[c] <= 1.0 for c in metrics.REPORT_COLUMNS)
    for s in scores:
        assert 0.0 <= s.rouge_l <= 1.0
        assert 0.0 <= s.meteor <= 1.0
