"""Pleasure/arousal/dominance (PAD) vector space with discrete-label lookup.

Everything here is value-semantic: vectors and tables are frozen after
construction and all operations are pure, so they are safe to call from
any thread.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

# Canonical dimension keys, in fixed order. Partial score maps elsewhere in
# the package use these keys.
PAD_DIMS = ("p", "a", "d")

_AXIS_NAMES = ("pleasure", "arousal", "dominance")


class EmotionConfigError(ValueError):
    """Invalid label table or dominance rule configuration."""


def _checked_component(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [-1, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class PadVector:
    """A point in PAD space; every axis lies in [-1, 1]."""

    pleasure: float = 0.0
    arousal: float = 0.0
    dominance: float = 0.0

    def __post_init__(self):
        for name in _AXIS_NAMES:
            object.__setattr__(self, name, _checked_component(name, getattr(self, name)))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.pleasure, self.arousal, self.dominance)

    def distance_to(self, other: "PadVector") -> float:
        return math.dist(self.as_tuple(), other.as_tuple())

    def magnitude(self) -> float:
        return math.hypot(self.pleasure, self.arousal, self.dominance)


NEUTRAL = PadVector()


def clamp_pad(raw: Sequence[float]) -> PadVector:
    """Clamp a raw (pleasure, arousal, dominance) triple into the unit cube.

    Non-finite components are rejected, not clamped.
    """
    if len(raw) != 3:
        raise ValueError(f"expected 3 components, got {len(raw)}")
    clamped = []
    for name, value in zip(_AXIS_NAMES, raw):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
        clamped.append(min(1.0, max(-1.0, value)))
    return PadVector(*clamped)


@dataclass(frozen=True)
class DominanceRule:
    """Affine valence/arousal -> dominance mapping.

    The default coefficients lean on dominance covarying positively with
    pleasure and, more weakly, with arousal. They are configuration with
    documented defaults, not empirical constants.
    """

    offset: float = 0.0
    pleasure_coef: float = 0.5
    arousal_coef: float = 0.25

    def __post_init__(self):
        for name in ("offset", "pleasure_coef", "arousal_coef"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise EmotionConfigError(f"DominanceRule.{name} must be finite")
            object.__setattr__(self, name, value)


def va_to_dominance(valence: float, arousal: float, rule: DominanceRule = DominanceRule()) -> float:
    """Infer a dominance score in [-1, 1] from a valence/arousal pair."""
    valence = _checked_component("valence", valence)
    arousal = _checked_component("arousal", arousal)
    raw = rule.offset + rule.pleasure_coef * valence + rule.arousal_coef * arousal
    return min(1.0, max(-1.0, raw))


@dataclass(frozen=True)
class LabelPrototypeTable:
    """Ordered (label, prototype) pairs for nearest-prototype labeling.

    Order matters: distance ties resolve to the earliest entry.
    """

    entries: Tuple[Tuple[str, PadVector], ...]

    def __post_init__(self):
        entries = tuple((str(label), proto) for label, proto in self.entries)
        if not entries:
            raise EmotionConfigError("label table must contain at least one entry")
        labels = [label for label, _ in entries]
        if len(set(labels)) != len(labels):
            raise EmotionConfigError("label table labels must be unique")
        for label, proto in entries:
            if not isinstance(proto, PadVector):
                raise EmotionConfigError(f"prototype for {label!r} is not a PadVector")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, Sequence[float]]]) -> "LabelPrototypeTable":
        return cls(tuple((label, PadVector(*coords)) for label, coords in pairs))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.entries)


# The eight octant temperament labels at corner magnitude 0.5 per axis,
# in (label, (P, A, D)) form. Overridable via configuration.
DEFAULT_LABEL_PROTOTYPES = (
    ("exuberant", (0.5, 0.5, 0.5)),
    ("bored", (-0.5, -0.5, -0.5)),
    ("dependent", (0.5, 0.5, -0.5)),
    ("disdainful", (-0.5, -0.5, 0.5)),
    ("relaxed", (0.5, -0.5, 0.5)),
    ("anxious", (-0.5, 0.5, -0.5)),
    ("docile", (0.5, -0.5, -0.5)),
    ("hostile", (-0.5, 0.5, 0.5)),
)


def default_label_table() -> LabelPrototypeTable:
    return LabelPrototypeTable.from_pairs(DEFAULT_LABEL_PROTOTYPES)


def pad_to_label(point: PadVector, table: LabelPrototypeTable) -> Tuple[str, float]:
    """Return the nearest prototype's label and its Euclidean distance.

    Ties go to the entry listed first in the table.
    """
    best_label = None
    best_distance = math.inf
    for label, proto in table.entries:
        distance = point.distance_to(proto)
        if distance < best_distance:
            best_label = label
            best_distance = distance
    return best_label, best_distance
