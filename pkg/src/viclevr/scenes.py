"""Ground-truth scene descriptions: object lists with discrete attributes."""

from __future__ import annotations

from dataclasses import dataclass, field

SHAPES = ("cube", "sphere", "cylinder")
COLORS = ("gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow")
MATERIALS = ("rubber", "metal")
SIZES = ("small", "large")

_ATTR_VALUES = {
    "shape": SHAPES,
    "color": COLORS,
    "material": MATERIALS,
    "size": SIZES,
}


class SceneSpecError(ValueError):
    """Raised for a malformed scene description."""


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    material: str
    size: str
    position: tuple[float, float, float]

    def __post_init__(self):
        for attr, values in _ATTR_VALUES.items():
            v = getattr(self, attr)
            if v not in values:
                raise SceneSpecError(f"invalid {attr}: {v!r}")
        if len(self.position) != 3:
            raise SceneSpecError("position must have 3 coordinates")

    def attribute(self, name: str) -> str:
        if name not in _ATTR_VALUES:
            raise SceneSpecError(f"unknown attribute: {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class Scene:
    scene_id: int
    objects: tuple[SceneObject, ...] = field(default_factory=tuple)

    def to_spec(self) -> dict:
        return {
            "objects": [
                {
                    "shape": o.shape,
                    "color": o.color,
                    "material": o.material,
                    "size": o.size,
                    "position": list(o.position),
                }
                for o in self.objects
            ]
        }

    @classmethod
    def from_spec(cls, spec: dict, scene_id: int = 0) -> "Scene":
        if not isinstance(spec, dict) or "objects" not in spec:
            raise SceneSpecError("scene spec must be an object with 'objects'")
        objects = []
        for i, obj in enumerate(spec["objects"]):
            try:
                objects.append(
                    SceneObject(
                        shape=obj["shape"],
                        color=obj["color"],
                        material=obj["material"],
                        size=obj["size"],
                        position=tuple(float(c) for c in obj["position"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise SceneSpecError(f"objects[{i}]: {exc}") from exc
        return cls(scene_id=scene_id, objects=tuple(objects))
