"""Dataset types, JSON I/O, text normalization, validation and splitting."""

from __future__ import annotations

import json
import string
import unicodedata
from dataclasses import dataclass, field

from .rng import SplitMix64
from .scenes import Scene, SceneSpecError

SPLITS = ("train", "dev", "test")

# ASCII punctuation minus the underscore (kept inside tokens so that
# pre-segmented compounds like "màu_sắc" survive normalization), plus the
# Unicode quotes and ellipsis that show up in Vietnamese text.
_PUNCT = set(string.punctuation.replace("_", "")) | {"…", "“", "”"}


class DatasetError(Exception):
    """Base class for dataset loading problems."""


class SchemaError(DatasetError):
    """A required field is missing or has the wrong type."""


class IntegrityError(DatasetError):
    """Cross-reference or uniqueness violation."""


@dataclass
class ImageEntry:
    image_id: int
    file_name: str
    split: str = "train"
    scene: Scene | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise SchemaError(f"image {self.image_id}: invalid split {self.split!r}")


@dataclass
class QAPair:
    question_id: int
    image_id: int
    question: str
    answer: str
    category: str | None = None


@dataclass
class Dataset:
    images: list[ImageEntry] = field(default_factory=list)
    questions: list[QAPair] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def image_by_id(self) -> dict[int, ImageEntry]:
        return {img.image_id: img for img in self.images}

    def question_by_id(self) -> dict[int, QAPair]:
        return {q.question_id: q for q in self.questions}

    def questions_for_split(self, split: str) -> list[QAPair]:
        ids = {img.image_id for img in self.images if img.split == split}
        return [q for q in self.questions if q.image_id in ids]


@dataclass
class PredictionSet:
    entries: list[tuple[int, str]] = field(default_factory=list)

    def as_dict(self) -> dict[int, str]:
        return dict(self.entries)


@dataclass
class ValidationReport:
    errors: list[tuple[str, int | None, str]] = field(default_factory=list)
    warnings: list[tuple[str, int | None, str]] = field(default_factory=list)
    notices: list[tuple[str, str]] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for rule_id, _, _ in self.errors + self.warnings:
            out[rule_id] = out.get(rule_id, 0) + 1
        return out

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class SplitSpec:
    ratio: tuple[float, float, float] = (0.7, 0.2, 0.1)
    seed: int = 0

    def __post_init__(self):
        if any(r < 0 for r in self.ratio):
            raise ValueError("ratio components must be non-negative")
        if abs(sum(self.ratio) - 1.0) > 1e-9:
            raise ValueError("ratio must sum to 1")


def normalize_text(s: str) -> str:
    """Lowercase, isolate punctuation with single spaces, collapse whitespace.

    Idempotent; total over arbitrary UTF-8 input.
    """
    s = unicodedata.normalize("NFC", s).lower()
    out = []
    for ch in s:
        if ch in _PUNCT:
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise SchemaError(f"{path}: missing field {key!r}")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"{path}.{key}: expected {kind.__name__}")
    if not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}: expected {kind.__name__}")
    return value


def dataset_from_obj(obj: dict) -> Dataset:
    if not isinstance(obj, dict):
        raise SchemaError("$: top level must be an object")
    images = []
    for i, item in enumerate(_require(obj, "images", list, "$")):
        path = f"$.images[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        scene = None
        if item.get("scene") is not None:
            try:
                scene = Scene.from_spec(item["scene"], scene_id=item.get("image_id", 0))
            except SceneSpecError as exc:
                raise SchemaError(f"{path}.scene: {exc}") from exc
        split = _require(item, "split", str, path)
        if split not in SPLITS:
            raise SchemaError(f"{path}.split: invalid value {split!r}")
        images.append(
            ImageEntry(
                image_id=_require(item, "image_id", int, path),
                file_name=_require(item, "file_name", str, path),
                split=split,
                scene=scene,
            )
        )
    questions = []
    for i, item in enumerate(_require(obj, "questions", list, "$")):
        path = f"$.questions[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        category = item.get("category")
        if category is not None and not isinstance(category, str):
            raise SchemaError(f"{path}.category: expected str")
        questions.append(
            QAPair(
                question_id=_require(item, "question_id", int, path),
                image_id=_require(item, "image_id", int, path),
                question=_require(item, "question", str, path),
                answer=_require(item, "answer", str, path),
                category=category,
            )
        )
    info = obj.get("info", {})
    if not isinstance(info, dict):
        raise SchemaError("$.info: expected object")
    d = Dataset(images=images, questions=questions, info=info)
    check_integrity(d)
    return d


def check_integrity(d: Dataset) -> None:
    seen_img = set()
    for img in d.images:
        if img.image_id in seen_img:
            raise IntegrityError(f"duplicate image_id {img.image_id}")
        seen_img.add(img.image_id)
    seen_q = set()
    for q in d.questions:
        if q.question_id in seen_q:
            raise IntegrityError(f"duplicate question_id {q.question_id}")
        seen_q.add(q.question_id)
        if q.image_id not in seen_img:
            raise IntegrityError(
                f"question {q.question_id} references unknown image_id {q.image_id}"
            )


def load_dataset(path: str) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed JSON: {exc}") from exc
    return dataset_from_obj(obj)


def dataset_to_obj(d: Dataset) -> dict:
    images = []
    for img in d.images:
        item = {"image_id": img.image_id, "file_name": img.file_name, "split": img.split}
        if img.scene is not None:
            item["scene"] = img.scene.to_spec()
        images.append(item)
    questions = []
    for q in d.questions:
        item = {
            "question_id": q.question_id,
            "image_id": q.image_id,
            "question": q.question,
            "answer": q.answer,
        }
        if q.category is not None:
            item["category"] = q.category
        questions.append(item)
    return {"info": d.info, "images": images, "questions": questions}


def save_dataset(d: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_obj(d), fh, ensure_ascii=False, sort_keys=True,
                  separators=(",", ":"))


_YES_NO_ANSWERS = {"có", "không"}


def validate(d: Dataset, yes_no_patterns: list[str] | None = None) -> ValidationReport:
    """Check the machine-checkable annotation protocols.

    Rule 1 (every image has a question) and rule 2 (every question has one
    non-empty answer) are errors; rule 6 (yes/no questions) is a warning
    because comparison questions are legitimately yes/no. Rules 3-5 have no
    algorithmic criterion and are surfaced as notices.
    """
    if yes_no_patterns is None:
        yes_no_patterns = ["có phải"]
    report = ValidationReport()
    questions_per_image: dict[int, int] = {img.image_id: 0 for img in d.images}
    for q in d.questions:
        questions_per_image[q.image_id] = questions_per_image.get(q.image_id, 0) + 1
    for img in d.images:
        if questions_per_image.get(img.image_id, 0) == 0:
            report.errors.append(
                ("rule1", img.image_id, f"image {img.image_id} has no questions")
            )
    for q in d.questions:
        if not normalize_text(q.answer):
            report.errors.append(
                ("rule2", q.question_id, f"question {q.question_id} has empty answer")
            )
        norm_q = normalize_text(q.question)
        is_yes_no = normalize_text(q.answer) in _YES_NO_ANSWERS or any(
            norm_q.startswith(normalize_text(p)) for p in yes_no_patterns
        )
        if is_yes_no:
            report.warnings.append(
                ("rule6", q.question_id, f"question {q.question_id} looks yes/no")
            )
    report.notices.extend(
        [
            ("rule3", "content focus is not machine-checkable"),
            ("rule4", "absence of opinions is not machine-checkable"),
            ("rule5", "reasoning diversity is not machine-checkable"),
        ]
    )
    return report


def split_dataset(d: Dataset, spec: SplitSpec, reassign: bool = False) -> Dataset:
    """Assign train/dev/test splits by seeded shuffle and ratio cut points.

    Deterministic for a fixed seed; questions inherit their image's split.
    """
    ids = [img.image_id for img in d.images]
    rng = SplitMix64(spec.seed)
    rng.shuffle(ids)
    n = len(ids)
    r1, r2, _ = spec.ratio
    cut1 = round(r1 * n)
    cut2 = round((r1 + r2) * n)
    assignment = {}
    for i, image_id in enumerate(ids):
        if i < cut1:
            assignment[image_id] = "train"
        elif i < cut2:
            assignment[image_id] = "dev"
        else:
            assignment[image_id] = "test"
    images = [
        ImageEntry(
            image_id=img.image_id,
            file_name=img.file_name,
            split=assignment[img.image_id],
            scene=img.scene,
        )
        for img in d.images
    ]
    return Dataset(images=images, questions=list(d.questions), info=dict(d.info))


def overlap_stats(d: Dataset) -> dict:
    """Per-split question counts, unique normalized counts and train overlap."""
    normalized: dict[str, list[str]] = {s: [] for s in SPLITS}
    split_of = {img.image_id: img.split for img in d.images}
    for q in d.questions:
        normalized[split_of[q.image_id]].append(normalize_text(q.question))
    train_set = set(normalized["train"])
    out = {}
    for s in SPLITS:
        entry = {
            "questions": len(normalized[s]),
            "unique_questions": len(set(normalized[s])),
        }
        if s != "train":
            entry["overlap_with_train"] = sum(
                1 for text in set(normalized[s]) if text in train_set
            )
        out[s] = entry
    return out


def load_predictions(path: str, gold: Dataset) -> PredictionSet:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed JSON: {exc}") from exc
    return predictions_from_obj(obj, gold)


def predictions_from_obj(obj, gold: Dataset) -> PredictionSet:
    if not isinstance(obj, list):
        raise SchemaError("$: predictions must be an array")
    gold_ids = {q.question_id for q in gold.questions}
    seen = set()
    entries = []
    for i, item in enumerate(obj):
        path = f"$[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        qid = _require(item, "question_id", int, path)
        answer = _require(item, "answer", str, path)
        if qid in seen:
            raise IntegrityError(f"duplicate question_id {qid}")
        if qid not in gold_ids:
            raise IntegrityError(f"prediction for unknown question_id {qid}")
        seen.add(qid)
        entries.append((qid, answer))
    return PredictionSet(entries=entries)
