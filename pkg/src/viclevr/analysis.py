"""Question classification, corpus statistics and per-group metric breakdowns."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Protocol

from .dataset import Dataset, normalize_text
from .metrics import AnswerScore
from .textproc import tokenize

CATEGORIES = ("count", "color", "comparison", "size", "material", "shape")
LINGUISTIC_TYPES = ("what", "how", "yes_no", "other")
LENGTH_GROUPS = ("short", "medium", "long", "very_long")
LLS_LEVELS = ("word", "phrase", "sentence")

_GROUP_ORDERS = {
    "category": CATEGORIES + ("unknown",),
    "linguistic_type": LINGUISTIC_TYPES,
    "length_group": LENGTH_GROUPS,
    "lls_level": LLS_LEVELS,
}


def _load_default(name: str) -> dict:
    with resources.files("viclevr.data").joinpath(name).open(encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class KeywordRules:
    """Ordered first-match keyword rules for categories and linguistic types.

    Pattern syntax on normalized text: plain substring; "a && b" requires all
    parts; a leading "^" anchors at the start, a trailing "$" at the end.
    """

    categories: tuple[tuple[str, tuple[str, ...]], ...]
    types: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def default(cls) -> "KeywordRules":
        return cls.from_config(_load_default("rules.json"))

    @classmethod
    def from_config(cls, cfg: dict) -> "KeywordRules":
        def parse(rules):
            out = []
            for rule in rules:
                patterns = tuple(rule["patterns"])
                if not all(patterns):
                    raise ValueError(f"empty pattern in rule {rule['label']!r}")
                out.append((rule["label"], patterns))
            return tuple(out)

        return cls(categories=parse(cfg["categories"]), types=parse(cfg["types"]))


def _pattern_matches(pattern: str, text: str) -> bool:
    for part in pattern.split("&&"):
        part = part.strip()
        if part.startswith("^"):
            if not text.startswith(part[1:]):
                return False
        elif part.endswith("$"):
            if not text.endswith(part[:-1]):
                return False
        elif part not in text:
            return False
    return True


def _first_match(text: str, rules, default: str) -> str:
    for label, patterns in rules:
        if any(_pattern_matches(p, text) for p in patterns):
            return label
    return default


def classify_category(q: str, rules: KeywordRules | None = None) -> str:
    if rules is None:
        rules = KeywordRules.default()
    return _first_match(normalize_text(q), rules.categories, "unknown")


def classify_linguistic_type(q: str, rules: KeywordRules | None = None) -> str:
    if rules is None:
        rules = KeywordRules.default()
    return _first_match(normalize_text(q), rules.types, "other")


def _nearest_rank(sorted_values: list[int], p: float) -> float:
    idx = math.ceil(p * len(sorted_values)) - 1
    return float(sorted_values[max(idx, 0)])


def length_quartiles(d: Dataset) -> tuple[float, float, float]:
    """Token-length quartiles of all questions via the nearest-rank method."""
    if not d.questions:
        raise ValueError("empty dataset")
    lengths = sorted(len(tokenize(q.question)) for q in d.questions)
    return (
        _nearest_rank(lengths, 0.25),
        _nearest_rank(lengths, 0.50),
        _nearest_rank(lengths, 0.75),
    )


def assign_length_group(length: int, quartiles: tuple[float, float, float]) -> str:
    q1, q2, q3 = quartiles
    if length <= q1:
        return "short"
    if length <= q2:
        return "medium"
    if length <= q3:
        return "long"
    return "very_long"


class DependencyProvider(Protocol):
    def parse(self, question: str) -> tuple[int, int, bool, bool]:
        """Return (dependency_count, tree_height, root_is_verb, has_subject)."""
        ...


class HeuristicDependencyProvider:
    """Fallback provider built on a small verb lexicon.

    Pseudo-dependencies: count = tokens - 1; height = ceil(log2(tokens)) + 1.
    A verb anywhere past the first token counts as having a subject. Real
    parser statistics are not reproducible with this stand-in.
    """

    def __init__(self, verbs: set[str] | None = None):
        if verbs is None:
            verbs = set(_load_default("lexicon.json")["verbs"])
        self.verbs = verbs

    def parse(self, question: str) -> tuple[int, int, bool, bool]:
        tokens = tokenize(question)
        n = len(tokens)
        if n == 0:
            return 0, 0, False, False
        dep_count = n - 1
        height = (math.ceil(math.log2(n)) + 1) if n > 1 else 1
        verb_indices = [i for i, t in enumerate(tokens) if t in self.verbs]
        root_is_verb = bool(verb_indices)
        has_subject = any(i > 0 for i in verb_indices)
        return dep_count, height, root_is_verb, has_subject


def lls_level(text: str, dep: DependencyProvider | None = None) -> str:
    """Classify text as a lone word, a phrase, or a full sentence."""
    if dep is None:
        dep = HeuristicDependencyProvider()
    tokens = tokenize(text)
    if len(tokens) == 1:
        return "word"
    _, _, root_is_verb, has_subject = dep.parse(text)
    if root_is_verb and has_subject:
        return "sentence"
    return "phrase"


@dataclass
class ComplexityStats:
    word: tuple[float, float, float]
    dependency: tuple[float, float, float]
    height: tuple[float, float, float]


def _min_mean_max(values: list[float]) -> tuple[float, float, float]:
    return (float(min(values)), sum(values) / len(values), float(max(values)))


def complexity_stats(d: Dataset, dep: DependencyProvider | None = None) -> ComplexityStats:
    if dep is None:
        dep = HeuristicDependencyProvider()
    if not d.questions:
        raise ValueError("empty dataset")
    words, deps, heights = [], [], []
    for q in d.questions:
        words.append(len(tokenize(q.question)))
        dep_count, height, _, _ = dep.parse(q.question)
        deps.append(dep_count)
        heights.append(height)
    return ComplexityStats(
        word=_min_mean_max(words),
        dependency=_min_mean_max(deps),
        height=_min_mean_max(heights),
    )


@dataclass(frozen=True)
class QuestionProfile:
    question_id: int
    category: str
    linguistic_type: str
    length: int
    length_group: str
    lls_level: str


def profile_dataset(
    d: Dataset,
    rules: KeywordRules | None = None,
    dep: DependencyProvider | None = None,
    quartiles: tuple[float, float, float] | None = None,
) -> list[QuestionProfile]:
    if rules is None:
        rules = KeywordRules.default()
    if dep is None:
        dep = HeuristicDependencyProvider()
    if quartiles is None:
        quartiles = length_quartiles(d)
    profiles = []
    for q in d.questions:
        length = len(tokenize(q.question))
        profiles.append(
            QuestionProfile(
                question_id=q.question_id,
                category=classify_category(q.question, rules),
                linguistic_type=classify_linguistic_type(q.question, rules),
                length=length,
                length_group=assign_length_group(length, quartiles),
                lls_level=lls_level(q.question, dep),
            )
        )
    return profiles


def breakdown(
    scores: list[AnswerScore],
    profiles: list[QuestionProfile],
    group_by: str,
) -> list[dict]:
    """Per-group n, exact-match accuracy and mean F1 for one profile dimension."""
    if group_by not in _GROUP_ORDERS:
        raise ValueError(f"unknown dimension {group_by!r}")
    profile_of = {p.question_id: p for p in profiles}
    missing = [s.question_id for s in scores if s.question_id not in profile_of]
    if missing:
        raise ValueError(f"scores without profiles: {missing[:5]}")
    grouped: dict[str, list[AnswerScore]] = {}
    for s in sorted(scores, key=lambda s: s.question_id):
        key = getattr(profile_of[s.question_id], group_by)
        grouped.setdefault(key, []).append(s)
    rows = []
    for label in _GROUP_ORDERS[group_by]:
        members = grouped.get(label)
        if not members:
            continue
        n = len(members)
        rows.append(
            {
                "group": label,
                "n": n,
                "accuracy": sum(1 for s in members if s.exact_match) / n,
                "f1_mean": sum(s.f1 for s in members) / n,
            }
        )
    return rows
