"""Shared path from decoded wire messages into the fusion core.

Both the live pipeline's fusion component and the deterministic replay
driver route events through apply_event(), so gating and registration
physics are identical in both modes. Policies carry the per-modality
steering state that the control API patches live; patches only affect
events ingested afterwards.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional

from .fusion import AffectEvent, EventValidationError, FusionEngine
from .pipeline import ActivityRegistry, ActivityState, gate_event
from .wire import ActivityMessage, EventMessage


@dataclass
class ModalityPolicy:
    """Steering state for one modality's events.

    weight_scale/decay_scale multiply each incoming event's own values;
    event_weight/event_decay_speed are the defaults assigned to events
    built by in-process analyzers. activity_source names the modality
    whose activity score gates this one (None passes ungated).
    """

    modality: str
    enabled: bool = True
    threshold: float = 0.0
    activity_source: Optional[str] = None
    weight_scale: float = 1.0
    decay_scale: float = 1.0
    event_weight: float = 1.0
    event_decay_speed: float = 0.5


@dataclass
class RouteCounters:
    events_seen: int = 0
    registered: int = 0
    dropped_disabled: int = 0
    dropped_gated: int = 0
    dropped_invalid: int = 0
    invalid_reason: Optional[str] = None
    by_modality: Dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "events_seen": self.events_seen,
            "registered": self.registered,
            "dropped_disabled": self.dropped_disabled,
            "dropped_gated": self.dropped_gated,
            "dropped_invalid": self.dropped_invalid,
            "by_modality": dict(self.by_modality),
        }


def apply_activity(
    msg: ActivityMessage, at: float, registry: ActivityRegistry
) -> ActivityState:
    """Store an activity report at receiver time `at`."""
    return registry.set_activity(msg.modality, msg.score, at)


def apply_event(
    msg: EventMessage,
    at: float,
    engine: FusionEngine,
    registry: ActivityRegistry,
    policies: Dict[str, ModalityPolicy],
    counters: Optional[RouteCounters] = None,
) -> Optional[AffectEvent]:
    """Gate an event by its modality policy and register the survivor.

    Returns the registered event, or None when the policy disabled the
    modality, the activity gate dropped it, or it failed validation.
    Event lifetimes run on receiver time: `at` becomes registered_at.
    """
    counters = counters if counters is not None else RouteCounters()
    counters.events_seen += 1
    policy = policies.get(msg.modality)
    if policy is not None and not policy.enabled:
        counters.dropped_disabled += 1
        return None
    try:
        event = AffectEvent(
            modality=msg.modality,
            scores=dict(msg.scores),
            weight=msg.weight,
            decay_speed=msg.decay_speed,
        )
    except EventValidationError as exc:
        counters.dropped_invalid += 1
        counters.invalid_reason = str(exc)
        return None
    if policy is not None and policy.activity_source is not None:
        source = registry.get(policy.activity_source)
        if source is None:
            # never-reported activity reads as score 0, same as a stale one
            gate_view = ActivityState(
                modality=event.modality,
                score=0.0,
                threshold=policy.threshold,
                updated_at=at,
                stale_after=registry.stale_after,
            )
        else:
            gate_view = ActivityState(
                modality=event.modality,
                score=source.score,
                threshold=policy.threshold,
                updated_at=source.updated_at,
                stale_after=source.stale_after,
            )
        gated = gate_event(event, gate_view, now=at)
        if gated is None:
            counters.dropped_gated += 1
            return None
        event = gated
    if policy is not None and (policy.weight_scale != 1.0 or policy.decay_scale != 1.0):
        event = replace(
            event,
            weight=event.weight * policy.weight_scale,
            decay_speed=event.decay_speed * policy.decay_scale,
        )
    stored = engine.register(event, now=at)
    counters.registered += 1
    counters.by_modality[msg.modality] = counters.by_modality.get(msg.modality, 0) + 1
    return stored
