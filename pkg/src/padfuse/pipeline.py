"""Bounded-queue, multi-rate component runtime with activity gating.

Components come in three kinds: inputs write to at least one topic queue,
processing components read and write, outputs only read. Each enabled
component runs on its own thread at its own best-effort rate; missed
deadlines are skipped, not back-filled. Queues are bounded and drop their
oldest message on overflow (the freshest cue wins), counting every drop.
"""

import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

from .fusion import AffectEvent

DEFAULT_QUEUE_CAPACITY = 256
COMPONENT_KINDS = ("input", "processing", "output")


class PipelineError(RuntimeError):
    pass


class UnknownTopicError(PipelineError):
    pass


@dataclass
class QueueMessage:
    at: float
    payload: object


class TopicQueue:
    """Thread-safe FIFO with drop-oldest overflow and a drop counter."""

    def __init__(self, name: str, capacity: int = DEFAULT_QUEUE_CAPACITY):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.name = name
        self.capacity = capacity
        self.dropped = 0
        self._items: deque = deque()
        self._lock = threading.Lock()

    def push(self, message: QueueMessage) -> None:
        with self._lock:
            if len(self._items) >= self.capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(message)

    def pop(self) -> Optional[QueueMessage]:
        with self._lock:
            return self._items.popleft() if self._items else None

    def pop_all(self) -> List[QueueMessage]:
        with self._lock:
            items = list(self._items)
            self._items.clear()
            return items

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


@dataclass
class ComponentDescriptor:
    """Name, kind, rate and queue wiring of one pipeline component."""

    name: str
    kind: str
    rate_hz: float
    inputs: Tuple[str, ...] = ()
    outputs: Tuple[str, ...] = ()
    enabled: bool = True

    def __post_init__(self):
        if self.kind not in COMPONENT_KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if not self.rate_hz > 0.0:
            raise ValueError("rate_hz must be > 0")
        self.inputs = tuple(self.inputs)
        self.outputs = tuple(self.outputs)
        if self.kind == "input" and (self.inputs or not self.outputs):
            raise ValueError("input components write >= 1 queue and read none")
        if self.kind == "processing" and (not self.inputs or not self.outputs):
            raise ValueError("processing components read >= 1 and write >= 1 queue")
        if self.kind == "output" and (not self.inputs or self.outputs):
            raise ValueError("output components read >= 1 queue and write none")


class ComponentHandle:
    """Live view of a registered component: toggles and counters."""

    def __init__(self, descriptor: ComponentDescriptor):
        self.descriptor = descriptor
        self.enabled = descriptor.enabled
        self.steps = 0
        self.errors = 0
        self.last_error: Optional[str] = None
        self.last_step_at: Optional[float] = None
        self.last_output_at: Optional[float] = None
        self.messages_out = 0

    @property
    def name(self) -> str:
        return self.descriptor.name


class ComponentContext:
    """Handed to a component's step function; scopes queue access to the
    topics the component declared."""

    def __init__(self, runtime: "PipelineRuntime", handle: ComponentHandle):
        self._runtime = runtime
        self._handle = handle

    def now(self) -> float:
        return self._runtime.clock()

    def pop(self, topic: str) -> Optional[QueueMessage]:
        self._check_topic(topic, self._handle.descriptor.inputs, "read")
        return self._runtime.pop(topic)

    def pop_all(self, topic: str) -> List[QueueMessage]:
        self._check_topic(topic, self._handle.descriptor.inputs, "read")
        return self._runtime.topic(topic).pop_all()

    def push(self, topic: str, payload: object, at: Optional[float] = None) -> None:
        self._check_topic(topic, self._handle.descriptor.outputs, "write")
        at = self._runtime.clock() if at is None else at
        self._runtime.push(topic, payload, at)
        self._handle.messages_out += 1
        self._handle.last_output_at = at

    def _check_topic(self, topic: str, declared: Tuple[str, ...], verb: str) -> None:
        if topic not in declared:
            raise PipelineError(
                f"component {self._handle.name!r} may not {verb} topic {topic!r}"
            )


StepFn = Callable[[ComponentContext], None]


class PipelineRuntime:
    """Owns topics and components; start()/stop() manage the threads."""

    def __init__(
        self,
        clock: Callable[[], float] = time.monotonic,
        queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
        drain_grace: float = 2.0,
    ):
        self.clock = clock
        self.queue_capacity = queue_capacity
        self.drain_grace = drain_grace
        self._topics: Dict[str, TopicQueue] = {}
        self._components: Dict[str, Tuple[ComponentHandle, StepFn]] = {}
        self._threads: List[threading.Thread] = []
        self._running = False
        self._lock = threading.Lock()

    # -- topics ---------------------------------------------------------

    def add_topic(self, name: str, capacity: Optional[int] = None) -> TopicQueue:
        with self._lock:
            if name not in self._topics:
                self._topics[name] = TopicQueue(name, capacity or self.queue_capacity)
            return self._topics[name]

    def topic(self, name: str) -> TopicQueue:
        try:
            return self._topics[name]
        except KeyError:
            raise UnknownTopicError(f"unknown topic {name!r}") from None

    def push(self, topic: str, payload: object, at: Optional[float] = None) -> None:
        at = self.clock() if at is None else at
        self.topic(topic).push(QueueMessage(at=at, payload=payload))

    def pop(self, topic: str) -> Optional[QueueMessage]:
        return self.topic(topic).pop()

    # -- components -----------------------------------------------------

    def register_component(self, descriptor: ComponentDescriptor, step: StepFn) -> ComponentHandle:
        with self._lock:
            if self._running:
                raise PipelineError("cannot register components while running")
            if descriptor.name in self._components:
                raise PipelineError(f"duplicate component name {descriptor.name!r}")
        for topic in descriptor.inputs + descriptor.outputs:
            self.add_topic(topic)
        handle = ComponentHandle(descriptor)
        with self._lock:
            self._components[descriptor.name] = (handle, step)
        return handle

    def component(self, name: str) -> ComponentHandle:
        try:
            return self._components[name][0]
        except KeyError:
            raise PipelineError(f"unknown component {name!r}") from None

    def components(self) -> List[ComponentHandle]:
        return [handle for handle, _ in self._components.values()]

    # -- lifecycle ------------------------------------------------------

    @property
    def running(self) -> bool:
        return self._running

    def start(self) -> None:
        with self._lock:
            if self._running:
                raise PipelineError("runtime already running")
            if not self._components:
                raise PipelineError("no components registered")
            self._running = True
            self._threads = []
            for handle, step in self._components.values():
                thread = threading.Thread(
                    target=self._run_component,
                    args=(handle, step),
                    name=f"component-{handle.name}",
                    daemon=True,
                )
                self._threads.append(thread)
        for thread in self._threads:
            thread.start()

    def stop(self, grace: Optional[float] = None) -> Dict[str, int]:
        """Drain queues for up to `grace` seconds, halt, and report drops.

        A second stop is a no-op (returns the same report).
        """
        if self._running:
            grace = self.drain_grace if grace is None else grace
            deadline = self.clock() + grace
            while self.clock() < deadline:
                if all(len(q) == 0 for q in self._topics.values()):
                    break
                time.sleep(0.01)
            self._running = False
            for thread in self._threads:
                thread.join(timeout=1.0)
            self._threads = []
        return self.drop_counters()

    def drop_counters(self) -> Dict[str, int]:
        return {name: q.dropped for name, q in self._topics.items()}

    def queue_stats(self) -> Dict[str, Dict[str, int]]:
        return {
            name: {"depth": len(q), "capacity": q.capacity, "dropped": q.dropped}
            for name, q in self._topics.items()
        }

    def _run_component(self, handle: ComponentHandle, step: StepFn) -> None:
        ctx = ComponentContext(self, handle)
        period = 1.0 / handle.descriptor.rate_hz
        next_due = self.clock()
        while self._running:
            now = self.clock()
            if now >= next_due:
                if handle.enabled:
                    try:
                        step(ctx)
                        handle.steps += 1
                        handle.last_step_at = now
                    except Exception as exc:  # a component bug must not kill the runtime
                        handle.errors += 1
                        handle.last_error = f"{type(exc).__name__}: {exc}"
                next_due += period
                if next_due < self.clock():
                    # missed one or more deadlines: skip, don't back-fill
                    next_due = self.clock() + period
            time.sleep(min(0.02, max(0.0, next_due - self.clock())))


# -- activity gating ------------------------------------------------------


@dataclass
class ActivityUpdate:
    """A modality's momentary activity probability."""

    modality: str
    score: float
    at: float


@dataclass
class ActivityState:
    """Last known activity for a modality, with its gate threshold.

    A state older than stale_after reads as score 0 (inactive), so a
    modality that stops reporting is not trusted forever.
    """

    modality: str
    score: float
    threshold: float
    updated_at: float
    stale_after: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"activity score must lie in [0, 1], got {self.score!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold!r}")
        if not self.stale_after > 0.0:
            raise ValueError("stale_after must be > 0")

    def effective_score(self, now: float) -> float:
        if now - self.updated_at > self.stale_after:
            return 0.0
        return self.score


class ActivityRegistry:
    """Per-modality activity scores; concurrent reads, serialized writes."""

    def __init__(self, stale_after: float = 1.0, thresholds: Optional[Dict[str, float]] = None):
        self.stale_after = stale_after
        self._thresholds = dict(thresholds or {})
        self._states: Dict[str, ActivityState] = {}
        self._lock = threading.Lock()

    def set_threshold(self, modality: str, threshold: float) -> None:
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {threshold!r}")
        with self._lock:
            self._thresholds[modality] = threshold
            state = self._states.get(modality)
            if state is not None:
                self._states[modality] = replace(state, threshold=threshold)

    def threshold(self, modality: str) -> float:
        return self._thresholds.get(modality, 0.0)

    def set_activity(self, modality: str, score: float, now: float) -> ActivityState:
        state = ActivityState(
            modality=modality,
            score=float(score),
            threshold=self.threshold(modality),
            updated_at=float(now),
            stale_after=self.stale_after,
        )
        with self._lock:
            self._states[modality] = state
        return state

    def get(self, modality: str) -> Optional[ActivityState]:
        return self._states.get(modality)

    def effective_score(self, modality: str, now: float) -> float:
        state = self._states.get(modality)
        return 0.0 if state is None else state.effective_score(now)

    def snapshot(self, now: float) -> Dict[str, Dict[str, float]]:
        with self._lock:
            states = dict(self._states)
        return {
            modality: {
                "score": state.score,
                "effective": state.effective_score(now),
                "threshold": state.threshold,
                "age": now - state.updated_at,
            }
            for modality, state in states.items()
        }


def gate_event(
    event: AffectEvent, activity: ActivityState, now: Optional[float] = None
) -> Optional[AffectEvent]:
    """Gate an event by its modality's activity.

    Returns None (dropped) when the effective score is below the threshold,
    otherwise the event with its weight scaled by the score.
    """
    if event.modality != activity.modality:
        raise ValueError(
            f"modality mismatch: event {event.modality!r} vs activity {activity.modality!r}"
        )
    at = activity.updated_at if now is None else now
    score = activity.effective_score(at)
    if score < activity.threshold:
        return None
    return replace(event, weight=event.weight * score)
