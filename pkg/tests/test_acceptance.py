"""End-to-end acceptance checks.

Each test exercises one advertised guarantee at its published tolerance and
prints a one-line verdict (run with -s to see them). Wall-clock budgets are
asserted with the stated ceilings.
"""

import math
import os
import random
import time

import numpy as np
import pytest

from helpers import direct_bleu, make_dataset, brute_force_lcs, naive_execute
from viclevr import dataset, phovit, scenegen
from viclevr.analysis import (
    HeuristicDependencyProvider,
    assign_length_group,
    breakdown,
    classify_category,
    profile_dataset,
)
from viclevr.metrics import (
    FULL_SCALE_REFERENCE,
    REPORT_COLUMNS,
    AnswerScore,
    BleuConfig,
    answer_prf1,
    bleu_corpus,
    meteor,
    rouge_l,
)
from viclevr.phovit import PhoVitConfig, grad_check_model, training_probe
from viclevr.rng import SplitMix64
from viclevr.scenegen import GenConfig, generate_dataset, generate_scene
from viclevr.textproc import lcs_length, tokenize


class Budget:
    """Context manager asserting a wall-clock ceiling."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc == (None, None, None):
            assert self.elapsed < self.seconds, (
                f"exceeded {self.seconds}s budget: {self.elapsed:.1f}s"
            )


def verdict(name, detail):
    print(f"acceptance: {name}: PASS ({detail})")


def test_metric_exactness():
    with Budget(1.0) as budget:
        p, r, f1 = answer_prf1(("xanh",), ("màu", "xanh"))
        assert abs(p - 1.0) < 1e-9 and abs(r - 0.5) < 1e-9
        assert abs(f1 - 2 / 3) < 1e-9

        bleu1 = bleu_corpus(
            [(("một", "khối", "trụ"), ("một", "khối", "lập", "phương"))],
            BleuConfig(max_n=1),
        )
        assert abs(bleu1 - (2 / 3) * math.exp(-1 / 3)) < 1e-9

        rouge = rouge_l(("a", "c", "d"), ("a", "b", "c", "d"))
        assert abs(rouge - 1.83 / 2.19) < 1e-9

        for length in (1, 3, 7):
            tokens = tuple(f"t{i}" for i in range(length))
            assert abs(meteor(tokens, tokens) - 0.9375) < 1e-9
        second = meteor(("một", "khối", "đỏ"), ("một", "khối", "màu", "đỏ"))
        assert abs(second - (7.5 / 9.75) * (1 - 0.5 * (3 / 7) ** 3)) < 1e-9

        identity = [(("a", "b", "c", "d"), ("a", "b", "c", "d"))]
        assert abs(bleu_corpus(identity) - 1.0) < 1e-9
        assert bleu_corpus([(("a",), ("b",))]) == 0.0
    verdict("metric exactness", f"{budget.elapsed:.2f}s, all within 1e-9")


def test_oracle_equivalence():
    with Budget(10.0) as budget:
        rng = random.Random(2024)
        alphabet = ["a", "b", "c"]
        for _ in range(200):
            a = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
            b = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))
            assert lcs_length(a, b) == brute_force_lcs(a, b), (a, b)

        wide = ["a", "b", "c", "d"]
        for _ in range(50):
            pairs = [
                (
                    tuple(rng.choice(wide) for _ in range(rng.randint(1, 12))),
                    tuple(rng.choice(wide) for _ in range(rng.randint(1, 12))),
                )
                for _ in range(rng.randint(1, 5))
            ]
            got = bleu_corpus(pairs)
            assert abs(got - direct_bleu(pairs)) < 1e-9, pairs
    verdict("oracle equivalence", f"{budget.elapsed:.2f}s, 200 LCS + 50 BLEU cases")


def test_generator_soundness():
    with Budget(30.0) as budget:
        pairs_checked = 0
        for seed in range(6):
            generated = generate_dataset(
                GenConfig(n_scenes=60, questions_per_scene=3, seed=seed)
            )
            report = dataset.validate(generated.dataset)
            assert report.errors == []
            by_id = generated.dataset.question_by_id()
            for qid, program in generated.programs.items():
                q = by_id[qid]
                scene = generated.scenes[q.image_id]
                assert 3 <= len(scene.objects) <= 10
                expected = naive_execute(
                    program.to_obj(), scene.to_spec(), scenegen.LEXICON
                )
                assert expected == q.answer
                pairs_checked += 1
        assert pairs_checked >= 1000
        for seed in range(50):
            scene = generate_scene(SplitMix64(seed ^ 0xABCD), GenConfig())
            assert 3 <= len(scene.objects) <= 10
    verdict("generator soundness", f"{budget.elapsed:.2f}s, {pairs_checked} programs")


def test_analysis_fidelity_planted_mix():
    rows = []
    for i in range(60):
        rows.append((i, 0, "có bao nhiêu vật màu đỏ ?", "2", "count"))
    for i in range(60, 100):
        rows.append((i, 0, "màu sắc của khối là gì ?", "màu đỏ", "color"))
    d = make_dataset(rows)
    profiles = profile_dataset(d)
    scores = [
        AnswerScore(q.question_id, 1.0, 1.0, 1.0, True, 1.0, 1.0)
        for q in d.questions
    ]
    groups = {r["group"]: r["n"] for r in breakdown(scores, profiles, "category")}
    assert groups == {"count": 60, "color": 40}

    generated = generate_dataset(GenConfig(n_scenes=30, questions_per_scene=3, seed=5))
    planted = {}
    for q in generated.dataset.questions:
        planted[q.category] = planted.get(q.category, 0) + 1
    gen_profiles = profile_dataset(generated.dataset)
    gen_scores = [
        AnswerScore(q.question_id, 1.0, 1.0, 1.0, True, 1.0, 1.0)
        for q in generated.dataset.questions
    ]
    observed = {
        r["group"]: r["n"]
        for r in breakdown(gen_scores, gen_profiles, "category")
    }
    assert observed == planted

    quartiles = (16.0, 19.0, 24.0)
    assert assign_length_group(16, quartiles) == "short"
    assert assign_length_group(17, quartiles) == "medium"
    assert assign_length_group(25, quartiles) == "very_long"
    verdict("analysis fidelity", "planted mixes exact, boundary behavior exact")


def test_analysis_fidelity_official_files():
    path = os.environ.get("VICLEVR_OFFICIAL_DATA")
    if not path:
        pytest.skip("official dataset files not supplied (set VICLEVR_OFFICIAL_DATA)")
    d = dataset.load_dataset(path)
    stats = dataset.overlap_stats(d)
    assert stats["train"]["questions"] == 21000
    assert stats["dev"]["questions"] == 6000
    assert stats["test"]["questions"] == 5000
    assert stats["dev"]["overlap_with_train"] == 134
    assert stats["test"]["overlap_with_train"] == 96
    verdict("official-file statistics", "question counts and overlaps exact")


def test_model_gradient_check():
    with Budget(120.0) as budget:
        report = grad_check_model(eps=1e-5, tol=1e-4)
        assert report["passed"]
        worst = 0.0
        for group, entry in report["groups"].items():
            assert not entry.get("skipped"), group
            assert entry["max_rel_error"] < 1e-4, group
            worst = max(worst, entry["max_rel_error"])
    verdict("gradient check", f"{budget.elapsed:.1f}s, worst rel error {worst:.2e}")


def test_model_shape_and_invariant_suite():
    with Budget(10.0) as budget:
        from viclevr.phovit import (
            attentional_reduce,
            build_embedding_table,
            embed_question,
            patchify,
            stacked_coattention,
            vit_encode,
        )
        from viclevr.tensor import constant

        base = PhoVitConfig.tiny()
        img, question, answer = phovit._synthetic_sample(base, seed=7)
        tokens = tokenize(question)

        for k in (1, 2, 3):
            cfg = PhoVitConfig(k_coattn=k)
            embedding = build_embedding_table(set(tokens), cfg.d, seed=0)
            vocab = phovit.AnswerVocab(
                answers=tuple(f"a{i}" for i in range(cfg.n_answers))
            )
            model = phovit.PhoVitModel(cfg, embedding, vocab)
            leaves = model.leaves()
            q0 = embed_question(tokens, embedding, cfg, leaf=leaves["embed.table"])
            i0 = vit_encode(constant(patchify(img, cfg.patch)), leaves, cfg)
            q_k, i_k = stacked_coattention(q0, i0, leaves, cfg)
            assert q_k.shape == q0.shape
            assert i_k.shape == i0.shape == (cfg.n_patches + 1, cfg.d)

            _, alpha = attentional_reduce(q_k, leaves, "reduce.q", cfg)
            assert abs(float(alpha.data.sum()) - 1.0) < 1e-12

            probs, _ = model.forward(img, question)
            assert probs.shape == (cfg.n_answers,)
            assert np.all((probs > 0) & (probs < 1))
            again, _ = model.forward(img, question)
            assert np.array_equal(probs, again)

            long_question = " ".join(["vật"] * 60)
            q_long = embed_question(
                tokenize(long_question), embedding, cfg, leaf=leaves["embed.table"]
            )
            assert q_long.shape == (44, cfg.d)
    verdict("shape/invariant suite", f"{budget.elapsed:.1f}s, depths 1-3")


def test_training_probe_halves_loss():
    with Budget(120.0) as budget:
        first = training_probe(steps=300)
        assert first["halved"], (first["initial_loss"], first["final_loss"])
        assert first["final_loss"] <= 0.5 * first["initial_loss"]
    second = training_probe(steps=300)
    assert first["losses"] == second["losses"]  # bit-identical trajectory
    verdict(
        "training probe",
        f"{budget.elapsed:.1f}s, loss {first['initial_loss']:.3f} -> "
        f"{first['final_loss']:.3f}, trajectory reproducible",
    )


def test_reference_scores_are_annotations_only():
    # Full-scale scores and parser-based complexity statistics are not
    # reproducible at desk scale; they ride along as annotations with the
    # published column order, never as assertions about computed output.
    assert tuple(FULL_SCALE_REFERENCE) == REPORT_COLUMNS
    assert REPORT_COLUMNS == (
        "Accuracy", "Precision", "Recall", "F1_overall", "BLEU", "ROUGE", "METEOR",
    )
    assert all(isinstance(v, float) and 0.0 <= v <= 1.0
               for v in FULL_SCALE_REFERENCE.values())
    assert "not reproducible" in HeuristicDependencyProvider.__doc__
    verdict("reference annotations", "column order fixed, values carried inertly")
