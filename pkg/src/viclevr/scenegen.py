"""Synthetic scene and question generation with an executable answer oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dataset import Dataset, ImageEntry, QAPair, SplitSpec, split_dataset
from .rng import SplitMix64
from .scenes import COLORS, MATERIALS, SHAPES, SIZES, Scene, SceneObject

ATTRIBUTES = ("shape", "color", "material", "size")
DIRECTIONS = ("left", "right", "front", "behind")
QUERY_CATEGORIES = ("color", "size", "material", "shape")
CATEGORIES = ("count", "color", "comparison", "size", "material", "shape")

_ATTR_VALUES = {
    "shape": SHAPES,
    "color": COLORS,
    "material": MATERIALS,
    "size": SIZES,
}


def _load_lexicon() -> dict:
    with resources.files("viclevr.data").joinpath("lexicon.json").open(
        encoding="utf-8"
    ) as fh:
        return json.load(fh)


LEXICON = _load_lexicon()


class ProgramError(Exception):
    """Malformed program or failed execution (non-unique/empty referent)."""


class PlacementError(Exception):
    """Rejection sampling could not place an object."""


@dataclass(frozen=True)
class Filter:
    attribute: str
    value: str


@dataclass(frozen=True)
class Relate:
    direction: str


@dataclass(frozen=True)
class Unique:
    pass


@dataclass(frozen=True)
class QueryProgram:
    steps: tuple
    terminal: dict  # {"kind": "count"|"exist"|"query"|"compare", ...}

    def to_obj(self) -> dict:
        steps = []
        for s in self.steps:
            if isinstance(s, Filter):
                steps.append({"op": "filter", "attribute": s.attribute, "value": s.value})
            elif isinstance(s, Relate):
                steps.append({"op": "relate", "direction": s.direction})
            else:
                steps.append({"op": "unique"})
        terminal = dict(self.terminal)
        if terminal["kind"] == "compare":
            terminal["other"] = terminal["other"].to_obj()
        return {"steps": steps, "terminal": terminal}

    @classmethod
    def from_obj(cls, obj: dict) -> "QueryProgram":
        steps = []
        for s in obj["steps"]:
            if s["op"] == "filter":
                steps.append(Filter(s["attribute"], s["value"]))
            elif s["op"] == "relate":
                steps.append(Relate(s["direction"]))
            elif s["op"] == "unique":
                steps.append(Unique())
            else:
                raise ProgramError(f"unknown step op {s['op']!r}")
        terminal = dict(obj["terminal"])
        if terminal["kind"] == "compare":
            terminal["other"] = cls.from_obj(terminal["other"])
        return cls(steps=tuple(steps), terminal=terminal)


def _check_program(p: QueryProgram) -> None:
    for i, step in enumerate(p.steps):
        if isinstance(step, Relate):
            if step.direction not in DIRECTIONS:
                raise ProgramError(f"unknown direction {step.direction!r}")
            if i == 0 or not isinstance(p.steps[i - 1], Unique):
                raise ProgramError("relate requires an immediately preceding unique")
        elif isinstance(step, Filter):
            if step.attribute not in _ATTR_VALUES:
                raise ProgramError(f"unknown attribute {step.attribute!r}")
            if step.value not in _ATTR_VALUES[step.attribute]:
                raise ProgramError(f"invalid {step.attribute} value {step.value!r}")
    kind = p.terminal.get("kind")
    if kind == "query":
        if not p.steps or not isinstance(p.steps[-1], Unique):
            raise ProgramError("query requires a trailing unique step")
        if p.terminal.get("attribute") not in _ATTR_VALUES:
            raise ProgramError("query needs a valid attribute")
    elif kind == "compare":
        if p.terminal.get("attribute") not in _ATTR_VALUES:
            raise ProgramError("compare needs a valid attribute")
        other = p.terminal.get("other")
        if not isinstance(other, QueryProgram):
            raise ProgramError("compare needs a second operand program")
    elif kind not in ("count", "exist"):
        raise ProgramError(f"unknown terminal {kind!r}")


def _relation_holds(obj: SceneObject, ref: SceneObject, direction: str) -> bool:
    if direction == "left":
        return obj.position[0] < ref.position[0]
    if direction == "right":
        return obj.position[0] > ref.position[0]
    if direction == "front":
        return obj.position[1] < ref.position[1]
    if direction == "behind":
        return obj.position[1] > ref.position[1]
    raise ProgramError(f"unknown direction {direction!r}")


def _run_steps(steps, scene: Scene) -> list[SceneObject]:
    current = list(scene.objects)
    for step in steps:
        if isinstance(step, Filter):
            current = [o for o in current if o.attribute(step.attribute) == step.value]
        elif isinstance(step, Unique):
            if len(current) != 1:
                raise ProgramError(
                    f"unique over a set of {len(current)} objects"
                )
        elif isinstance(step, Relate):
            ref = current[0]
            current = [
                o
                for o in scene.objects
                if o is not ref and _relation_holds(o, ref, step.direction)
            ]
        else:
            raise ProgramError(f"unknown step {step!r}")
    return current


def execute_program(p: QueryProgram, scene: Scene) -> str:
    """Run a query program against the ground-truth scene graph."""
    _check_program(p)
    current = _run_steps(p.steps, scene)
    kind = p.terminal["kind"]
    if kind == "count":
        return str(len(current))
    if kind == "exist":
        return LEXICON["yes"] if current else LEXICON["no"]
    if kind == "query":
        if not current:
            raise ProgramError("empty referent for query")
        if len(current) != 1:
            raise ProgramError("non-unique referent for query")
        attr = p.terminal["attribute"]
        return LEXICON[attr][current[0].attribute(attr)]
    if kind == "compare":
        if len(current) != 1:
            raise ProgramError("non-unique referent for compare")
        other = _run_steps(p.terminal["other"].steps, scene)
        if len(other) != 1:
            raise ProgramError("non-unique second referent for compare")
        attr = p.terminal["attribute"]
        same = current[0].attribute(attr) == other[0].attribute(attr)
        return LEXICON["yes"] if same else LEXICON["no"]
    raise ProgramError(f"unknown terminal {kind!r}")


@dataclass
class GenConfig:
    n_scenes: int = 10
    questions_per_scene: int = 3
    category_mix: dict = field(
        default_factory=lambda: {c: 1.0 for c in CATEGORIES}
    )
    seed: int = 0
    image_size: int = 32
    patch_compatible: bool = True
    patch_size: int = 4
    min_separation: float = 0.12
    placement_budget: int = 1000
    ratio: tuple[float, float, float] = (0.7, 0.2, 0.1)

    def __post_init__(self):
        weights = list(self.category_mix.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("category weights must be non-negative, positive sum")
        unknown = set(self.category_mix) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories: {sorted(unknown)}")
        if self.patch_compatible and self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by the patch size")


def generate_scene(rng: SplitMix64, cfg: GenConfig, scene_id: int = 0) -> Scene:
    """Uniform attributes, rejection-sampled positions in the unit square."""
    n_objects = 3 + rng.next_below(8)
    objects: list[SceneObject] = []
    for _ in range(n_objects):
        shape = SHAPES[rng.next_below(len(SHAPES))]
        color = COLORS[rng.next_below(len(COLORS))]
        material = MATERIALS[rng.next_below(len(MATERIALS))]
        size = SIZES[rng.next_below(len(SIZES))]
        placed = False
        for _attempt in range(cfg.placement_budget):
            x, y = rng.next_float(), rng.next_float()
            if all(
                (x - o.position[0]) ** 2 + (y - o.position[1]) ** 2
                >= cfg.min_separation**2
                for o in objects
            ):
                objects.append(
                    SceneObject(shape, color, material, size, (x, y, 0.0))
                )
                placed = True
                break
        if not placed:
            raise PlacementError(
                f"could not place object {len(objects)} after "
                f"{cfg.placement_budget} attempts (min_separation too large)"
            )
    return Scene(scene_id=scene_id, objects=tuple(objects))


def _unique_filters(
    obj: SceneObject, scene: Scene, rng: SplitMix64, exclude: str | None = None
) -> tuple | None:
    """Filter steps that isolate obj, drawing attributes in random order."""
    attrs = [a for a in ATTRIBUTES if a != exclude]
    rng.shuffle(attrs)
    filters: list[Filter] = []
    current = list(scene.objects)
    for attr in attrs:
        if len(current) == 1 and current[0] is obj:
            break
        value = obj.attribute(attr)
        filters.append(Filter(attr, value))
        current = [o for o in current if o.attribute(attr) == value]
    if len(current) == 1 and current[0] is obj:
        return tuple(filters)
    return None


class InstantiationError(Exception):
    """No valid program found within the retry budget."""


def sample_program(
    category: str, scene: Scene, rng: SplitMix64, max_retries: int = 100
) -> QueryProgram:
    """Random program whose terminal matches the category and which executes."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    for _ in range(max_retries):
        program = _try_sample(category, scene, rng)
        if program is None:
            continue
        try:
            execute_program(program, scene)
        except ProgramError:
            continue
        return program
    raise InstantiationError(
        f"no valid {category} program for scene {scene.scene_id} "
        f"after {max_retries} retries"
    )


def _random_filters(rng: SplitMix64, scene: Scene) -> list[Filter]:
    n_filters = 1 + rng.next_below(2)
    attrs = list(ATTRIBUTES)
    rng.shuffle(attrs)
    filters = []
    for attr in attrs[:n_filters]:
        values = _ATTR_VALUES[attr]
        # Bias values toward ones present in the scene to avoid trivial zeros.
        present = sorted({o.attribute(attr) for o in scene.objects})
        pool = present if rng.next_below(4) else list(values)
        filters.append(Filter(attr, pool[rng.next_below(len(pool))]))
    return filters


def _try_sample(category: str, scene: Scene, rng: SplitMix64) -> QueryProgram | None:
    if category == "count":
        if rng.next_below(4) == 0:
            ref = scene.objects[rng.next_below(len(scene.objects))]
            filters = _unique_filters(ref, scene, rng)
            if filters is None:
                return None
            direction = DIRECTIONS[rng.next_below(len(DIRECTIONS))]
            steps = filters + (Unique(), Relate(direction))
            return QueryProgram(steps=steps, terminal={"kind": "count"})
        return QueryProgram(
            steps=tuple(_random_filters(rng, scene)), terminal={"kind": "count"}
        )
    if category in QUERY_CATEGORIES:
        obj = scene.objects[rng.next_below(len(scene.objects))]
        filters = _unique_filters(obj, scene, rng, exclude=category)
        if filters is None:
            return None
        return QueryProgram(
            steps=filters + (Unique(),),
            terminal={"kind": "query", "attribute": category},
        )
    if category == "comparison":
        if len(scene.objects) < 2:
            return None
        i = rng.next_below(len(scene.objects))
        j = rng.next_below(len(scene.objects))
        if i == j:
            return None
        attr = ATTRIBUTES[rng.next_below(len(ATTRIBUTES))]
        first = _unique_filters(scene.objects[i], scene, rng, exclude=attr)
        second = _unique_filters(scene.objects[j], scene, rng, exclude=attr)
        if first is None or second is None:
            return None
        other = QueryProgram(steps=second + (Unique(),), terminal={"kind": "exist"})
        return QueryProgram(
            steps=first + (Unique(),),
            terminal={"kind": "compare", "attribute": attr, "other": other},
        )
    return None


def _describe(filters: list[Filter]) -> str:
    """Vietnamese noun phrase for a filter list."""
    by_attr = {f.attribute: f.value for f in filters}
    noun = (
        LEXICON["shape"][by_attr["shape"]] if "shape" in by_attr else LEXICON["generic_noun"]
    )
    parts = [noun]
    if "size" in by_attr:
        parts.append(LEXICON["size"][by_attr["size"]])
    if "color" in by_attr:
        parts.append(LEXICON["color"][by_attr["color"]])
    if "material" in by_attr:
        parts.append("bằng " + LEXICON["material"][by_attr["material"]])
    return " ".join(parts)


def _split_at_relate(steps) -> tuple[list[Filter], str | None, list[Filter]]:
    before: list[Filter] = []
    after: list[Filter] = []
    direction = None
    target = before
    for step in steps:
        if isinstance(step, Relate):
            direction = step.direction
            target = after
        elif isinstance(step, Filter):
            target.append(step)
    return before, direction, after


def realize_question(p: QueryProgram, rng: SplitMix64) -> str:
    """Render a program as a Vietnamese question from per-category templates."""
    _check_program(p)
    kind = p.terminal["kind"]
    ref_filters, direction, post_filters = _split_at_relate(p.steps)
    if kind == "count":
        if direction is not None:
            subject = _describe(post_filters)
            ref = _describe(ref_filters)
            dir_word = LEXICON["directions"][direction]
            templates = [
                f"có bao nhiêu {subject} ở {dir_word} {ref} ?",
                f"ở {dir_word} {ref} có bao nhiêu {subject} ?",
            ]
        else:
            desc = _describe(ref_filters)
            templates = [
                f"có bao nhiêu {desc} ?",
                f"trong hình có bao nhiêu {desc} ?",
            ]
    elif kind == "exist":
        desc = _describe(ref_filters)
        templates = [f"có {desc} nào không ?"]
    elif kind == "query":
        desc = _describe(ref_filters)
        attr_name = LEXICON["attribute_names"][p.terminal["attribute"]]
        templates = [
            f"{attr_name} của {desc} là gì ?",
            f"{desc} có {attr_name} là gì ?",
        ]
    else:  # compare
        attr_name = LEXICON["attribute_names"][p.terminal["attribute"]]
        other_filters, _, _ = _split_at_relate(p.terminal["other"].steps)
        first = _describe(ref_filters)
        second = _describe(other_filters)
        templates = [
            f"có phải {first} có cùng {attr_name} với {second} không ?",
            f"có phải {first} giống {second} về {attr_name} không ?",
        ]
    return templates[rng.next_below(len(templates))]


# Fixed 8-entry RGB table, values in [0, 1].
COLOR_RGB = {
    "gray": (0.5, 0.5, 0.5),
    "red": (0.8, 0.1, 0.1),
    "blue": (0.1, 0.2, 0.8),
    "green": (0.1, 0.7, 0.2),
    "brown": (0.55, 0.35, 0.15),
    "purple": (0.6, 0.2, 0.7),
    "cyan": (0.2, 0.8, 0.8),
    "yellow": (0.9, 0.85, 0.1),
}


@dataclass
class RasterImage:
    height: int
    width: int
    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]

    channels: int = 3


def rasterize_scene(scene: Scene, size: int = 32) -> RasterImage:
    """Paint simple glyphs back-to-front: cube=square, sphere=disc, cylinder=rect."""
    if size < 16:
        raise ValueError("size must be >= 16")
    pixels = np.ones((size, size, 3), dtype=np.float64)
    # Larger y is further back; paint those first so nearer objects overdraw.
    for obj in sorted(scene.objects, key=lambda o: -o.position[1]):
        r = size // 10 if obj.size == "small" else size // 6
        cx = round(obj.position[0] * (size - 1))
        cy = round(obj.position[1] * (size - 1))
        rgb = np.array(COLOR_RGB[obj.color])
        mask = np.zeros((size, size), dtype=bool)
        ys, xs = np.mgrid[0:size, 0:size]
        if obj.shape == "cube":
            mask = (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r)
        elif obj.shape == "sphere":
            mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r**2
        else:  # cylinder: 1:2 vertical rectangle
            half_w = max(r // 2, 1)
            mask = (np.abs(xs - cx) <= half_w) & (np.abs(ys - cy) <= r)
        pixels[mask] = rgb
        if obj.material == "metal":
            stripe = mask & (xs == cx - r + 1)
            pixels[stripe] = np.clip(pixels[stripe] + 0.25, 0.0, 1.0)
    return RasterImage(height=size, width=size, pixels=pixels)


def write_ppm(img: RasterImage, path: str) -> None:
    data = np.round(img.pixels * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path: str) -> RasterImage:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError("not a P6 pixmap")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        data = np.frombuffer(fh.read(width * height * 3), dtype=np.uint8)
    pixels = data.reshape(height, width, 3).astype(np.float64) / maxval
    return RasterImage(height=height, width=width, pixels=pixels)


@dataclass
class GeneratedDataset:
    dataset: Dataset
    programs: dict[int, QueryProgram]  # question_id -> program
    images: dict[int, RasterImage]  # image_id -> raster
    scenes: dict[int, Scene]


def generate_dataset(cfg: GenConfig) -> GeneratedDataset:
    """Scenes, rasters, realized questions with oracle answers, split assignment.

    Per-scene PRNG streams are derived from seed XOR scene_id, so output is
    independent of generation order.
    """
    labels = sorted(cfg.category_mix)
    weights = [cfg.category_mix[c] for c in labels]
    images: list[ImageEntry] = []
    questions: list[QAPair] = []
    programs: dict[int, QueryProgram] = {}
    rasters: dict[int, RasterImage] = {}
    scenes: dict[int, Scene] = {}
    for scene_id in range(cfg.n_scenes):
        rng = SplitMix64(cfg.seed ^ scene_id)
        scene = generate_scene(rng, cfg, scene_id=scene_id)
        scenes[scene_id] = scene
        rasters[scene_id] = rasterize_scene(scene, cfg.image_size)
        images.append(
            ImageEntry(
                image_id=scene_id,
                file_name=f"scene_{scene_id:06d}.ppm",
                scene=scene,
            )
        )
        made = 0
        for j in range(cfg.questions_per_scene):
            category = rng.choice_weighted(labels, weights)
            try:
                program = sample_program(category, scene, rng)
            except InstantiationError:
                continue
            qid = scene_id * cfg.questions_per_scene + j
            questions.append(
                QAPair(
                    question_id=qid,
                    image_id=scene_id,
                    question=realize_question(program, rng),
                    answer=execute_program(program, scene),
                    category=category,
                )
            )
            programs[qid] = program
            made += 1
        if made == 0:
            # A bare count program always executes; keeps rule 1 satisfiable.
            program = QueryProgram(steps=(), terminal={"kind": "count"})
            qid = scene_id * cfg.questions_per_scene
            questions.append(
                QAPair(
                    question_id=qid,
                    image_id=scene_id,
                    question=realize_question(program, rng),
                    answer=execute_program(program, scene),
                    category="count",
                )
            )
            programs[qid] = program
    d = Dataset(
        images=images,
        questions=questions,
        info={"generator": {"seed": cfg.seed, "n_scenes": cfg.n_scenes}},
    )
    d = split_dataset(d, SplitSpec(ratio=cfg.ratio, seed=cfg.seed))
    return GeneratedDataset(
        dataset=d, programs=programs, images=rasters, scenes=scenes
    )


def programs_to_jsonl(programs: dict[int, QueryProgram]) -> str:
    lines = []
    for qid in sorted(programs):
        obj = programs[qid].to_obj()
        obj = {"question_id": qid, "steps": obj["steps"], "terminal": obj["terminal"]}
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    return "\n".join(lines) + "\n" if lines else ""


def programs_from_jsonl(text: str) -> dict[int, QueryProgram]:
    programs = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        programs[obj["question_id"]] = QueryProgram.from_obj(obj)
    return programs
