"""Shared builders and independent reference implementations for the tests."""

from __future__ import annotations

import itertools
import math

from viclevr.dataset import Dataset, ImageEntry, QAPair


def make_dataset(questions, n_images=None, splits=None):
    """Dataset with one image per distinct image_id referenced by questions.

    questions: list of (question_id, image_id, question, answer[, category]).
    """
    qa = []
    image_ids = set()
    for item in questions:
        category = item[4] if len(item) > 4 else None
        qa.append(
            QAPair(
                question_id=item[0],
                image_id=item[1],
                question=item[2],
                answer=item[3],
                category=category,
            )
        )
        image_ids.add(item[1])
    if n_images is not None:
        image_ids.update(range(n_images))
    images = []
    for image_id in sorted(image_ids):
        split = splits.get(image_id, "train") if splits else "train"
        images.append(
            ImageEntry(image_id=image_id, file_name=f"img_{image_id}.ppm", split=split)
        )
    return Dataset(images=images, questions=qa)


def brute_force_lcs(a, b):
    """Exponential oracle: longest subsequence of a that is a subsequence of b."""
    best = 0
    for r in range(len(a), 0, -1):
        if r <= best:
            break
        for sub in itertools.combinations(a, r):
            it = iter(b)
            if all(tok in it for tok in sub):
                best = r
                break
    return best


def brute_force_alignment(hypo, ref):
    """Enumerate every exact-match matching; apply the published tie-breaks.

    Returns the winning pair tuple: maximal cardinality, then fewest
    crossings, then lexicographically smallest ref-index sequence in hypo
    order, then smallest hypo-index sequence (the residual tie-break).
    """
    candidates = [[]]
    for i, token in enumerate(hypo):
        new = []
        for partial in candidates:
            new.append(partial)  # leave hypo[i] unmatched
            used = {r for _, r in partial}
            for j, other in enumerate(ref):
                if other == token and j not in used:
                    new.append(partial + [(i, j)])
        candidates = new

    def crossings(pairs):
        refs = [r for _, r in pairs]
        return sum(
            1
            for x, y in itertools.combinations(range(len(refs)), 2)
            if refs[x] > refs[y]
        )

    best_size = max(len(c) for c in candidates)
    maximal = [c for c in candidates if len(c) == best_size]
    best = min(
        maximal,
        key=lambda c: (crossings(c), [r for _, r in c], [h for h, _ in c]),
    )
    return tuple(best)


def chunk_count(pairs):
    if not pairs:
        return 0
    count = 1
    for (h0, r0), (h1, r1) in zip(pairs, pairs[1:]):
        if h1 != h0 + 1 or r1 != r0 + 1:
            count += 1
    return count


def direct_bleu(pairs, max_n=4, weights=None, smoothing="none"):
    """Independent corpus BLEU built from first principles with list scans."""
    if weights is None:
        weights = [1.0 / max_n] * max_n
    c = sum(len(h) for h, _ in pairs)
    r = sum(len(g) for _, g in pairs)
    log_sum = 0.0
    for n, w in zip(range(1, max_n + 1), weights):
        clipped = 0
        total = 0
        for hypo, ref in pairs:
            h_grams = [tuple(hypo[i : i + n]) for i in range(len(hypo) - n + 1)]
            r_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
            total += len(h_grams)
            for gram in set(h_grams):
                clipped += min(h_grams.count(gram), r_grams.count(gram))
        if total == 0:
            continue  # no n-grams of this order exist in the corpus
        if smoothing == "add_one":
            p_n = (clipped + 1) / (total + 1)
        else:
            if clipped == 0 or total == 0:
                return 0.0
            p_n = clipped / total
        log_sum += w * math.log(p_n)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def naive_execute(program_obj, scene_spec, lexicon):
    """Independent interpreter over the serialized program and scene forms."""
    objs = scene_spec["objects"]

    def run(steps):
        current = list(range(len(objs)))
        for step in steps:
            if step["op"] == "filter":
                current = [
                    i for i in current if objs[i][step["attribute"]] == step["value"]
                ]
            elif step["op"] == "unique":
                if len(current) != 1:
                    raise AssertionError("unique over non-singleton set")
            elif step["op"] == "relate":
                ref = current[0]
                rx, ry = objs[ref]["position"][0], objs[ref]["position"][1]
                direction = step["direction"]
                chosen = []
                for i in range(len(objs)):
                    if i == ref:
                        continue
                    x, y = objs[i]["position"][0], objs[i]["position"][1]
                    if direction == "left" and x < rx:
                        chosen.append(i)
                    elif direction == "right" and x > rx:
                        chosen.append(i)
                    elif direction == "front" and y < ry:
                        chosen.append(i)
                    elif direction == "behind" and y > ry:
                        chosen.append(i)
                current = chosen
        return current

    current = run(program_obj["steps"])
    terminal = program_obj["terminal"]
    kind = terminal["kind"]
    if kind == "count":
        return str(len(current))
    if kind == "exist":
        return lexicon["yes"] if current else lexicon["no"]
    if kind == "query":
        attr = terminal["attribute"]
        return lexicon[attr][objs[current[0]][attr]]
    if kind == "compare":
        other = run(terminal["other"]["steps"])
        attr = terminal["attribute"]
        same = objs[current[0]][attr] == objs[other[0]][attr]
        return lexicon["yes"] if same else lexicon["no"]
    raise AssertionError(f"unknown terminal {kind!r}")
