"""Event-driven affect fusion in PAD space.

Incoming cues are registered as decaying score vectors. Each tick shrinks
every active vector's norm linearly (vectors whose norm is used up are
discarded), recomputes a per-dimension weighted center of mass over the
survivors, and moves a smoothing vector toward that fusion point at a
bounded approach speed. The smoothing vector is the published estimate.

Decay model, for an event with initial norm n0 and decay speed s:

    current_norm(lifetime) = n0 - lifetime * s

The decayed scores are the original scores uniformly rescaled to the
current norm; rescaling always starts from the original scores, so decay
over split intervals composes bit-exactly with one-shot decay.

The fusion point, per dimension, is the weight-normalized sum of decayed
scores over the active events that carry that dimension with weight > 0;
dimensions nothing covers fall back to the neutral point.
"""

import math
import threading
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .emotion import (
    NEUTRAL,
    PAD_DIMS,
    LabelPrototypeTable,
    PadVector,
    default_label_table,
    pad_to_label,
)


class EventValidationError(ValueError):
    """An affective event violated its invariants."""


class ClockRegressionError(RuntimeError):
    """tick() was handed a timestamp earlier than the previous tick."""


@dataclass(frozen=True)
class AffectEvent:
    """A registered affective cue.

    scores is a partial map over the PAD dimensions ("p", "a", "d"); at
    least one dimension must be present and every present score lies in
    [-1, 1]. weight quantifies the cue's impact on the fusion point and
    decay_speed is the linear norm loss in norm-units per second.
    """

    modality: str
    scores: Dict[str, float]
    weight: float = 1.0
    decay_speed: float = 0.5
    id: Optional[int] = None
    registered_at: Optional[float] = None

    def __post_init__(self):
        if not self.scores:
            raise EventValidationError("event must carry at least one dimension")
        unknown = set(self.scores) - set(PAD_DIMS)
        if unknown:
            raise EventValidationError(f"unknown dimensions: {sorted(unknown)}")
        normalized = {}
        for dim in PAD_DIMS:
            if dim not in self.scores:
                continue
            value = float(self.scores[dim])
            if not math.isfinite(value) or not -1.0 <= value <= 1.0:
                raise EventValidationError(f"score {dim}={value!r} outside [-1, 1]")
            normalized[dim] = value
        object.__setattr__(self, "scores", normalized)
        weight = float(self.weight)
        if not math.isfinite(weight) or weight < 0.0:
            raise EventValidationError(f"weight must be finite and >= 0, got {weight!r}")
        object.__setattr__(self, "weight", weight)
        speed = float(self.decay_speed)
        if not math.isfinite(speed) or speed <= 0.0:
            raise EventValidationError(f"decay_speed must be finite and > 0, got {speed!r}")
        object.__setattr__(self, "decay_speed", speed)

    def norm(self) -> float:
        """Euclidean norm of the score vector over its present dimensions."""
        return math.sqrt(sum(v * v for v in self.scores.values()))


@dataclass(frozen=True)
class DecayedEvent:
    """An active event together with its decay bookkeeping."""

    event: AffectEvent
    lifetime: float
    initial_norm: float
    current_norm: float
    decayed_scores: Dict[str, float]

    @classmethod
    def fresh(cls, event: AffectEvent) -> "DecayedEvent":
        norm = event.norm()
        return cls(event, 0.0, norm, norm, dict(event.scores))


def decay_event(entry: DecayedEvent, dt: float) -> Optional[DecayedEvent]:
    """Advance an event's lifetime by dt seconds.

    Returns the decayed event, or None once the norm fails to stay above
    zero (the event is discarded).
    """
    if dt < 0.0:
        raise ValueError(f"dt must be >= 0, got {dt!r}")
    lifetime = entry.lifetime + dt
    remaining = entry.initial_norm - lifetime * entry.event.decay_speed
    if remaining <= 0.0:
        return None
    scale = remaining / entry.initial_norm
    decayed = {dim: score * scale for dim, score in entry.event.scores.items()}
    return DecayedEvent(entry.event, lifetime, entry.initial_norm, remaining, decayed)


def compute_fusion_point(active: Sequence[DecayedEvent], neutral: PadVector = NEUTRAL) -> PadVector:
    """Per-dimension weighted mean of the active decayed scores.

    Only events that carry a dimension with weight > 0 contribute to it;
    uncovered dimensions resolve to the neutral point.
    """
    sums: Dict[str, float] = {}
    weight_sums: Dict[str, float] = {}
    for entry in active:
        weight = entry.event.weight
        if weight <= 0.0:
            continue
        for dim, score in entry.decayed_scores.items():
            sums[dim] = sums.get(dim, 0.0) + score * weight
            weight_sums[dim] = weight_sums.get(dim, 0.0) + weight
    components = []
    for dim, fallback in zip(PAD_DIMS, neutral.as_tuple()):
        if dim in weight_sums:
            components.append(min(1.0, max(-1.0, sums[dim] / weight_sums[dim])))
        else:
            components.append(fallback)
    return PadVector(*components)


@dataclass(frozen=True)
class FusionConfig:
    tick_interval: float = 0.02
    approach_speed: float = 1.0
    neutral_point: PadVector = NEUTRAL
    max_active_events: int = 1024

    def __post_init__(self):
        if not (math.isfinite(self.tick_interval) and self.tick_interval > 0.0):
            raise ValueError("tick_interval must be > 0")
        if not (math.isfinite(self.approach_speed) and self.approach_speed > 0.0):
            raise ValueError("approach_speed must be > 0")
        if self.max_active_events < 1:
            raise ValueError("max_active_events must be >= 1")


@dataclass(frozen=True)
class FusionResult:
    """Published snapshot: the smoothed vector plus its derivation context."""

    at: float
    pad: PadVector
    fusion_point: PadVector
    label: str
    active_event_count: int


class _EngineState(NamedTuple):
    """Immutable engine state. Arrays are never mutated in place; every
    operation swaps in a fresh state, so readers can extrapolate from a
    grabbed reference without locking."""

    last_tick: float
    vector: np.ndarray  # (3,) smoothed fusion vector
    scores: np.ndarray  # (n, 3), zero where a dimension is absent
    mask: np.ndarray  # (n, 3) bool, dimension presence
    weights: np.ndarray  # (n,)
    norms0: np.ndarray  # (n,) initial norms
    speeds: np.ndarray  # (n,) decay speeds
    reg: np.ndarray  # (n,) registration timestamps
    events: Tuple[AffectEvent, ...]
    result: FusionResult


def _empty_rows() -> Tuple[np.ndarray, ...]:
    return (
        np.zeros((0, 3)),
        np.zeros((0, 3), dtype=bool),
        np.zeros(0),
        np.zeros(0),
        np.zeros(0),
        np.zeros(0),
    )


def _project(
    state: _EngineState, cfg: FusionConfig, labels: LabelPrototypeTable, now: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, FusionResult]:
    """Pure evaluation of the state at `now`: decay, fusion point, vector
    motion and result snapshot. Shared by tick() and current_result()."""
    now = max(now, state.last_tick)
    dt = now - state.last_tick
    lifetimes = now - state.reg
    current = state.norms0 - lifetimes * state.speeds
    alive = current > 0.0
    neutral = np.array(cfg.neutral_point.as_tuple())
    if alive.any():
        w = state.weights[alive]
        scale = current[alive] / state.norms0[alive]
        eff = state.mask[alive] & (w > 0.0)[:, None]
        contrib = state.scores[alive] * (w * scale)[:, None]
        num = np.where(eff, contrib, 0.0).sum(axis=0)
        den = np.where(eff, w[:, None], 0.0).sum(axis=0)
        covered = den > 0.0
        point = np.where(covered, num / np.where(covered, den, 1.0), neutral)
    else:
        point = neutral.copy()
    np.clip(point, -1.0, 1.0, out=point)

    delta = point - state.vector
    distance = math.sqrt(float((delta * delta).sum()))
    step = cfg.approach_speed * dt
    if distance == 0.0 or distance <= step:
        vector = point.copy()
    else:
        vector = state.vector + delta * (step / distance)
    np.clip(vector, -1.0, 1.0, out=vector)

    pad = PadVector(float(vector[0]), float(vector[1]), float(vector[2]))
    label, _ = pad_to_label(pad, labels)
    result = FusionResult(
        at=now,
        pad=pad,
        fusion_point=PadVector(float(point[0]), float(point[1]), float(point[2])),
        label=label,
        active_event_count=int(alive.sum()),
    )
    return point, vector, alive, result


class FusionEngine:
    """Owns the active event set and the smoothed fusion vector.

    register() and tick() serialize through an internal lock; queries read
    the latest published immutable state and never block the updater.
    """

    def __init__(
        self,
        config: Optional[FusionConfig] = None,
        labels: Optional[LabelPrototypeTable] = None,
        start_time: float = 0.0,
    ):
        self._cfg = config if config is not None else FusionConfig()
        self._labels = labels if labels is not None else default_label_table()
        self._lock = threading.Lock()
        self._next_id = 1
        vector = np.array(self._cfg.neutral_point.as_tuple())
        scores, mask, weights, norms0, speeds, reg = _empty_rows()
        seed = _EngineState(
            last_tick=float(start_time),
            vector=vector,
            scores=scores,
            mask=mask,
            weights=weights,
            norms0=norms0,
            speeds=speeds,
            reg=reg,
            events=(),
            result=None,  # replaced below
        )
        _, _, _, result = _project(seed, self._cfg, self._labels, float(start_time))
        self._state = seed._replace(result=result)

    @property
    def config(self) -> FusionConfig:
        return self._cfg

    @property
    def labels(self) -> LabelPrototypeTable:
        return self._labels

    @property
    def latest(self) -> FusionResult:
        """The most recently published result snapshot."""
        return self._state.result

    def update_params(self, approach_speed: Optional[float] = None) -> FusionConfig:
        """Live-adjust engine parameters; takes effect on the next tick."""
        with self._lock:
            cfg = self._cfg
            if approach_speed is not None:
                cfg = replace(cfg, approach_speed=float(approach_speed))
            self._cfg = cfg
            return cfg

    def register(self, event: AffectEvent, now: float) -> AffectEvent:
        """Admit an event into the active set with lifetime 0 at `now`.

        Returns the stored event (id assigned, registered_at set). An event
        whose score vector has zero norm is accepted but is spent
        immediately and never activates. When the active set is full, the
        active event with the smallest current norm is discarded first.
        """
        now = float(now)
        with self._lock:
            stored = replace(event, id=self._next_id, registered_at=now)
            self._next_id += 1
            norm = stored.norm()
            if norm <= 0.0:
                return stored
            state = self._state
            scores, mask = state.scores, state.mask
            weights, norms0 = state.weights, state.norms0
            speeds, reg = state.speeds, state.reg
            events = state.events
            if len(events) >= self._cfg.max_active_events:
                current = norms0 - (now - reg) * speeds
                victim = int(np.argmin(current))
                keep = np.ones(len(events), dtype=bool)
                keep[victim] = False
                scores, mask = scores[keep], mask[keep]
                weights, norms0 = weights[keep], norms0[keep]
                speeds, reg = speeds[keep], reg[keep]
                events = events[:victim] + events[victim + 1 :]
            row_scores = np.zeros((1, 3))
            row_mask = np.zeros((1, 3), dtype=bool)
            for i, dim in enumerate(PAD_DIMS):
                if dim in stored.scores:
                    row_scores[0, i] = stored.scores[dim]
                    row_mask[0, i] = True
            self._state = state._replace(
                scores=np.concatenate([scores, row_scores]),
                mask=np.concatenate([mask, row_mask]),
                weights=np.concatenate([weights, [stored.weight]]),
                norms0=np.concatenate([norms0, [norm]]),
                speeds=np.concatenate([speeds, [stored.decay_speed]]),
                reg=np.concatenate([reg, [now]]),
                events=events + (stored,),
            )
            return stored

    def tick(self, now: float) -> FusionResult:
        """Advance to `now`: decay, discard, recompute the fusion point and
        move the smoothed vector. Publishes and returns the result snapshot."""
        now = float(now)
        with self._lock:
            state = self._state
            if now < state.last_tick:
                raise ClockRegressionError(
                    f"tick at {now!r} precedes last tick {state.last_tick!r}"
                )
            lifetimes = now - state.reg
            current = state.norms0 - lifetimes * state.speeds
            alive = current > 0.0
            if not alive.all():
                state = state._replace(
                    scores=state.scores[alive],
                    mask=state.mask[alive],
                    weights=state.weights[alive],
                    norms0=state.norms0[alive],
                    speeds=state.speeds[alive],
                    reg=state.reg[alive],
                    events=tuple(ev for ev, keep in zip(state.events, alive) if keep),
                )
            _, vector, _, result = _project(state, self._cfg, self._labels, now)
            self._state = state._replace(last_tick=now, vector=vector, result=result)
            return result

    def current_result(self, now: float) -> FusionResult:
        """What a tick at `now` would publish, without mutating state.

        Evaluated against the latest published state; timestamps earlier
        than the last tick are answered as of the last tick.
        """
        state = self._state
        _, _, _, result = _project(state, self._cfg, self._labels, float(now))
        return result

    def active_events(self, now: Optional[float] = None) -> List[DecayedEvent]:
        """Decayed view of the active set at `now` (default: last tick)."""
        state = self._state
        at = state.last_tick if now is None else max(float(now), state.last_tick)
        out = []
        for i, event in enumerate(state.events):
            lifetime = at - float(state.reg[i])
            remaining = float(state.norms0[i]) - lifetime * float(state.speeds[i])
            if remaining <= 0.0:
                continue
            scale = remaining / float(state.norms0[i])
            out.append(
                DecayedEvent(
                    event=event,
                    lifetime=lifetime,
                    initial_norm=float(state.norms0[i]),
                    current_norm=remaining,
                    decayed_scores={k: v * scale for k, v in event.scores.items()},
                )
            )
        return out
