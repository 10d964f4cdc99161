"""Tokenization, n-grams, LCS and unigram alignment shared by all metrics."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

from .dataset import normalize_text

TokenSeq = tuple[str, ...]


@dataclass(frozen=True)
class AlignmentMap:
    pairs: tuple[tuple[int, int], ...]
    chunk_count: int


def tokenize(s: str) -> TokenSeq:
    """Normalize then split on spaces; underscored compounds pass through."""
    norm = normalize_text(s)
    if not norm:
        return ()
    return tuple(norm.split(" "))


def ngram_counts(tokens: TokenSeq, n: int) -> Counter:
    if n < 1:
        raise ValueError("n must be >= 1")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    """Longest common subsequence length, O(|a|*|b|) dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token_a in a:
        cur = [0]
        for j, token_b in enumerate(b):
            if token_a == token_b:
                cur.append(prev[j] + 1)
            else:
                cur.append(max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _chunks(pairs: list[tuple[int, int]]) -> int:
    """Maximal runs contiguous and monotone in both sequences."""
    if not pairs:
        return 0
    count = 1
    for (h0, r0), (h1, r1) in zip(pairs, pairs[1:]):
        if h1 != h0 + 1 or r1 != r0 + 1:
            count += 1
    return count


def _crossings(pairs: list[tuple[int, int]]) -> int:
    refs = [r for _, r in pairs]
    return sum(
        1
        for i, j in itertools.combinations(range(len(refs)), 2)
        if refs[i] > refs[j]
    )


# Candidate alignments beyond this budget fall back to in-order matching.
_SEARCH_BUDGET = 200_000


def align_unigrams(hypo: TokenSeq, ref: TokenSeq) -> AlignmentMap:
    """Exact-match unigram alignment of maximal cardinality.

    Among maximum-cardinality matchings the one with fewest crossings wins,
    ties broken by the lexicographically smallest ref-index sequence in hypo
    order. Within a repeated token, occurrences are matched in order: swapping
    a crossed same-token pair never increases total crossings, so some optimal
    alignment is always monotone per token.
    """
    hypo_pos: dict[str, list[int]] = {}
    ref_pos: dict[str, list[int]] = {}
    for i, t in enumerate(hypo):
        hypo_pos.setdefault(t, []).append(i)
    for j, t in enumerate(ref):
        ref_pos.setdefault(t, []).append(j)

    shared = sorted(t for t in hypo_pos if t in ref_pos)
    per_token_options = []
    total = 1
    for t in shared:
        hs, rs = hypo_pos[t], ref_pos[t]
        k = min(len(hs), len(rs))
        options = [
            list(zip(hc, rc))
            for hc in itertools.combinations(hs, k)
            for rc in itertools.combinations(rs, k)
        ]
        per_token_options.append(options)
        total *= len(options)
        if total > _SEARCH_BUDGET:
            break

    if total > _SEARCH_BUDGET:
        # In-order fallback: still maximal cardinality and monotone per token.
        pairs = []
        for t in shared:
            hs, rs = hypo_pos[t], ref_pos[t]
            pairs.extend(zip(hs, rs))
        pairs.sort()
        return AlignmentMap(pairs=tuple(pairs), chunk_count=_chunks(pairs))

    best = None
    best_key = None
    for combo in itertools.product(*per_token_options):
        pairs = sorted(p for chosen in combo for p in chosen)
        key = (_crossings(pairs), [r for _, r in pairs])
        if best_key is None or key < best_key:
            best, best_key = pairs, key
    if best is None:
        best = []
    return AlignmentMap(pairs=tuple(best), chunk_count=_chunks(best))
