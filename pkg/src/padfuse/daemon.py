"""Live daemon: wires the UDP edge, analyzers, fusion and recording onto
the pipeline runtime, and exposes the mutation surface the control API
steers.

All timestamps inside a running daemon are seconds since start() on the
monotonic clock, so queue message times, engine times, broadcast fusion
times and session-log offsets share one timebase.
"""

import json
import queue
import threading
import time
from typing import Any, Dict, List, Optional, Tuple

from .analyzers import (
    LandmarkFrame,
    PoseWindow,
    RawSamples,
    ScriptedSource,
    VoiceActivityDetector,
    face_activity,
    pose_dominance_event,
)
from .config import DaemonConfig
from .fusion import FusionEngine
from .ingest import RouteCounters, apply_activity, apply_event
from .pipeline import ActivityRegistry, ComponentDescriptor, PipelineRuntime
from .session import SessionRecorder
from .wire import (
    ActivityMessage,
    BroadcastTarget,
    EventMessage,
    FusionMessage,
    LandmarksMessage,
    SamplesMessage,
    UdpBroadcaster,
    UdpIngest,
    WireMessage,
    encode,
    fusion_message,
)

# Topic names
T_EVENTS = "wire.events"
T_ACTIVITY = "wire.activity"
T_AUDIO = "audio.samples"
T_FACE = "landmarks.face"
T_POSE = "landmarks.pose"
T_FUSION = "fusion.results"
T_TAP = "session.tap"

_ROUTED = (T_EVENTS, T_ACTIVITY, T_AUDIO, T_FACE, T_POSE, T_TAP)

# Records from concurrent producers may interleave slightly out of offset
# order at the tap queue; the recorder holds them briefly and writes in
# offset order. Inversions beyond the hold window still error.
RECORD_HOLD_SECONDS = 0.5


class ParamError(ValueError):
    """Invalid live parameter patch; carries key-path messages."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class AffectDaemon:
    """Owns every moving part of one running instance."""

    def __init__(
        self,
        config: DaemonConfig,
        clock=time.monotonic,
        script: Optional[List[Tuple[float, WireMessage]]] = None,
        script_acceleration: float = 1.0,
    ):
        self.config = config
        self._base_clock = clock
        self._t0 = clock()
        self.clock = lambda: self._base_clock() - self._t0

        self.engine = FusionEngine(config.fusion, config.label_table, start_time=0.0)
        self.registry = ActivityRegistry(
            stale_after=config.stale_after,
            thresholds={name: p.threshold for name, p in config.policies.items()},
        )
        self.policies = config.fresh_policies()
        self.route_counters = RouteCounters()
        self.runtime = PipelineRuntime(
            clock=self.clock,
            queue_capacity=config.pipeline.queue_capacity,
            drain_grace=config.pipeline.drain_grace,
        )
        self.ingest: Optional[UdpIngest] = None
        self.broadcaster = UdpBroadcaster(
            [
                BroadcastTarget(t["host"], t["port"], t["format"])
                for t in config.wire.broadcast_targets
            ]
        )
        self.recorder: Optional[SessionRecorder] = None
        self._record_buffer: List[Tuple[float, WireMessage]] = []
        self.recording_error: Optional[str] = None
        self._tap_enabled = bool(config.record_path)

        self._vad = VoiceActivityDetector(config.vad)
        self._pose_window = PoseWindow(config.pose_window_seconds)
        self._script = (
            ScriptedSource(script, acceleration=script_acceleration) if script else None
        )

        self._mutate_lock = threading.RLock()
        self._subscribers: List["queue.Queue[Tuple[str, bytes]]"] = []
        self._subscribers_lock = threading.Lock()
        self._modality_components: Dict[str, str] = {}
        self._last_broadcast: Optional[FusionMessage] = None

        self._register_components()

    # -- wiring -----------------------------------------------------------

    def _register_components(self) -> None:
        rates = self.config.pipeline.rates
        cfg = self.config

        self.runtime.register_component(
            ComponentDescriptor(
                name="ingest",
                kind="input",
                rate_hz=rates.get("ingest", 100.0),
                outputs=_ROUTED,
            ),
            self._step_ingest,
        )
        if self._script is not None:
            self.runtime.register_component(
                ComponentDescriptor(
                    name="scripted",
                    kind="input",
                    rate_hz=rates.get("ingest", 100.0),
                    outputs=_ROUTED,
                ),
                self._step_scripted,
            )
        self.runtime.register_component(
            ComponentDescriptor(
                name="vad",
                kind="processing",
                rate_hz=rates.get("vad", 50.0),
                inputs=(T_AUDIO,),
                outputs=(T_ACTIVITY,),
            ),
            self._step_vad,
        )
        self.runtime.register_component(
            ComponentDescriptor(
                name="face_activity",
                kind="processing",
                rate_hz=rates.get("face_activity", 30.0),
                inputs=(T_FACE,),
                outputs=(T_ACTIVITY,),
            ),
            self._step_face,
        )
        self.runtime.register_component(
            ComponentDescriptor(
                name="pose_features",
                kind="processing",
                rate_hz=rates.get("pose_features", 30.0),
                inputs=(T_POSE,),
                outputs=(T_EVENTS,),
            ),
            self._step_pose,
        )
        self.runtime.register_component(
            ComponentDescriptor(
                name="fusion",
                kind="processing",
                rate_hz=1.0 / cfg.fusion.tick_interval,
                inputs=(T_EVENTS, T_ACTIVITY),
                outputs=(T_FUSION, T_TAP),
            ),
            self._step_fusion,
        )
        self.runtime.register_component(
            ComponentDescriptor(
                name="broadcast",
                kind="output",
                rate_hz=1.0 / cfg.wire.broadcast_period,
                inputs=(T_FUSION,),
            ),
            self._step_broadcast,
        )
        if cfg.record_path:
            self.runtime.register_component(
                ComponentDescriptor(
                    name="recorder",
                    kind="output",
                    rate_hz=rates.get("recorder", 20.0),
                    inputs=(T_TAP,),
                ),
                self._step_recorder,
            )
        self._modality_components = {
            "voice": "vad",
            "face": "face_activity",
            "pose": "pose_features",
        }

    # -- component steps ---------------------------------------------------

    def _route(self, ctx, msg: WireMessage, at: float) -> None:
        if isinstance(msg, EventMessage):
            ctx.push(T_EVENTS, msg, at=at)
        elif isinstance(msg, ActivityMessage):
            ctx.push(T_ACTIVITY, msg, at=at)
        elif isinstance(msg, SamplesMessage):
            ctx.push(T_AUDIO, RawSamples(samples=msg.data, sample_rate=msg.rate, at=at), at=at)
        elif isinstance(msg, LandmarksMessage):
            points = [tuple(msg.points[i : i + 3]) for i in range(0, len(msg.points), 3)]
            try:
                frame = LandmarkFrame(kind=msg.kind, points=points, at=at)
            except ValueError:
                self.route_counters.dropped_invalid += 1
                return
            ctx.push(T_FACE if msg.kind == "face" else T_POSE, frame, at=at)
        else:
            # inbound fusion messages are valid but not ingestable
            self.route_counters.dropped_invalid += 1
            return
        if self._tap_enabled:
            ctx.push(T_TAP, msg, at=at)

    def _step_ingest(self, ctx) -> None:
        if self.ingest is None:
            return
        for msg, at in self.ingest.poll(self.clock):
            self._route(ctx, msg, at)

    def _step_scripted(self, ctx) -> None:
        for _offset, msg in self._script.due(ctx.now()):
            self._route(ctx, msg, ctx.now())

    def _step_vad(self, ctx) -> None:
        for item in ctx.pop_all(T_AUDIO):
            window: RawSamples = item.payload
            try:
                p = self._vad.probability(window)
            except ValueError:
                continue
            ctx.push(T_ACTIVITY, ActivityMessage(modality="voice", score=p, t=window.at), at=window.at)

    def _step_face(self, ctx) -> None:
        for item in ctx.pop_all(T_FACE):
            frame: LandmarkFrame = item.payload
            score = face_activity(frame, self.config.face_yaw_max)
            ctx.push(T_ACTIVITY, ActivityMessage(modality="face", score=score, t=frame.at), at=frame.at)

    def _step_pose(self, ctx) -> None:
        for item in ctx.pop_all(T_POSE):
            frame: LandmarkFrame = item.payload
            features = self._pose_window.add(frame)
            if features is None:
                continue
            policy = self.policies.get("pose")
            event = pose_dominance_event(
                features,
                self.config.pose_rule,
                weight=policy.event_weight if policy else 1.0,
                decay_speed=policy.event_decay_speed if policy else 0.5,
            )
            ctx.push(
                T_EVENTS,
                EventMessage(
                    modality=event.modality,
                    scores=event.scores,
                    weight=event.weight,
                    decay_speed=event.decay_speed,
                    t=frame.at,
                ),
                at=frame.at,
            )

    def _step_fusion(self, ctx) -> None:
        with self._mutate_lock:
            for item in ctx.pop_all(T_ACTIVITY):
                msg: ActivityMessage = item.payload
                apply_activity(msg, item.at, self.registry)
                self._publish("activity", encode(msg, "json"))
            for item in ctx.pop_all(T_EVENTS):
                apply_event(
                    item.payload, item.at, self.engine, self.registry, self.policies, self.route_counters
                )
            result = self.engine.tick(ctx.now())
        ctx.push(T_FUSION, result, at=result.at)
        if self._tap_enabled:
            ctx.push(T_TAP, fusion_message(result), at=result.at)

    def _step_broadcast(self, ctx) -> None:
        latest = None
        for item in ctx.pop_all(T_FUSION):
            latest = item.payload
        msg = fusion_message(latest) if latest is not None else fusion_message(self.engine.latest)
        encoded = self.broadcaster.send(msg)
        self._last_broadcast = msg
        self._publish("fusion", encoded["json"])

    def _step_recorder(self, ctx) -> None:
        if self.recorder is None or self.recording_error is not None:
            for _ in ctx.pop_all(T_TAP):
                pass
            return
        for item in ctx.pop_all(T_TAP):
            self._record_buffer.append((item.at, item.payload))
        self._flush_records(ctx.now() - RECORD_HOLD_SECONDS)

    def _flush_records(self, watermark: float) -> None:
        if self.recorder is None:
            return
        self._record_buffer.sort(key=lambda pair: pair[0])
        while self._record_buffer and self._record_buffer[0][0] <= watermark:
            offset, msg = self._record_buffer.pop(0)
            try:
                self.recorder.append(offset, msg)
            except Exception as exc:
                self.recording_error = str(exc)
                break

    # -- stream fanout ------------------------------------------------------

    def subscribe(self, max_pending: int = 256) -> "queue.Queue[Tuple[str, bytes]]":
        sub: "queue.Queue[Tuple[str, bytes]]" = queue.Queue(maxsize=max_pending)
        with self._subscribers_lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub) -> None:
        with self._subscribers_lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def _publish(self, kind: str, payload: bytes) -> None:
        with self._subscribers_lock:
            subs = list(self._subscribers)
        for sub in subs:
            try:
                sub.put_nowait((kind, payload))
            except queue.Full:
                try:  # drop oldest: live streams favor freshness
                    sub.get_nowait()
                    sub.put_nowait((kind, payload))
                except (queue.Empty, queue.Full):
                    pass

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._t0 = self._base_clock()
        self.ingest = UdpIngest(
            host=self.config.wire.ingest_host, port=self.config.wire.ingest_port
        )
        if self.config.record_path:
            self.recorder = SessionRecorder(self.config.record_path, self.config.config_hash)
        self.runtime.start()

    def stop(self) -> Dict[str, int]:
        drops = self.runtime.stop()
        if self.recorder is not None:
            self._flush_records(float("inf"))
            self.recorder.close()
        if self.ingest is not None:
            self.ingest.close()
        self.broadcaster.close()
        return drops

    def inject(self, msg: WireMessage, at: Optional[float] = None) -> None:
        """Feed a message as if it had arrived on the wire (tests, tools)."""
        at = self.clock() if at is None else at
        if isinstance(msg, EventMessage):
            self.runtime.push(T_EVENTS, msg, at=at)
        elif isinstance(msg, ActivityMessage):
            self.runtime.push(T_ACTIVITY, msg, at=at)
        elif isinstance(msg, SamplesMessage):
            self.runtime.push(T_AUDIO, RawSamples(samples=msg.data, sample_rate=msg.rate, at=at), at=at)
        elif isinstance(msg, LandmarksMessage):
            points = [tuple(msg.points[i : i + 3]) for i in range(0, len(msg.points), 3)]
            self.runtime.push(
                T_FACE if msg.kind == "face" else T_POSE,
                LandmarkFrame(kind=msg.kind, points=points, at=at),
                at=at,
            )
        else:
            raise ValueError("cannot inject fusion messages")
        if self._tap_enabled:
            self.runtime.push(T_TAP, msg, at=at)

    # -- control surface -------------------------------------------------------

    def modality_names(self) -> List[str]:
        return sorted(self.policies)

    def set_modality_enabled(self, name: str, enabled: bool) -> Dict[str, Any]:
        with self._mutate_lock:
            if name not in self.policies:
                raise KeyError(name)
            self.policies[name].enabled = enabled
            component = self._modality_components.get(name)
            if component is not None:
                try:
                    self.runtime.component(component).enabled = enabled
                except Exception:
                    pass
            return {"modality": name, "enabled": enabled}

    def patch_params(self, patch: Dict[str, Any]) -> Dict[str, Any]:
        """Validate and apply a partial parameter update atomically."""
        errors: List[str] = []
        staged: List[Tuple[str, str, float]] = []  # (group, modality, value)
        approach_speed: Optional[float] = None

        def _check_map(group: str, bounds) -> None:
            values = patch.get(group)
            if values is None:
                return
            if not isinstance(values, dict):
                errors.append(f"{group}: must map modality to value")
                return
            for modality, value in values.items():
                if modality not in self.policies:
                    errors.append(f"{group}.{modality}: unknown modality")
                    continue
                ok, why = bounds(value)
                if not ok:
                    errors.append(f"{group}.{modality}: {why}")
                    continue
                staged.append((group, modality, float(value)))

        def _is_num(v):
            return isinstance(v, (int, float)) and not isinstance(v, bool)

        if "approach_speed" in patch:
            value = patch["approach_speed"]
            if not _is_num(value) or not value > 0:
                errors.append("approach_speed: must be a number > 0")
            else:
                approach_speed = float(value)
        _check_map(
            "thresholds",
            lambda v: (_is_num(v) and 0.0 <= v <= 1.0, "must lie in [0, 1]"),
        )
        _check_map(
            "weight_scales",
            lambda v: (_is_num(v) and v >= 0.0, "must be >= 0"),
        )
        _check_map(
            "decay_scales",
            lambda v: (_is_num(v) and v > 0.0, "must be > 0"),
        )
        _check_map(
            "event_weights",
            lambda v: (_is_num(v) and v >= 0.0, "must be >= 0"),
        )
        _check_map(
            "event_decay_speeds",
            lambda v: (_is_num(v) and v > 0.0, "must be > 0"),
        )
        known = {
            "approach_speed",
            "thresholds",
            "weight_scales",
            "decay_scales",
            "event_weights",
            "event_decay_speeds",
        }
        for key in patch:
            if key not in known:
                errors.append(f"{key}: unknown parameter")
        if errors:
            raise ParamError(errors)

        with self._mutate_lock:
            if approach_speed is not None:
                self.engine.update_params(approach_speed=approach_speed)
            for group, modality, value in staged:
                policy = self.policies[modality]
                if group == "thresholds":
                    policy.threshold = value
                    self.registry.set_threshold(modality, value)
                elif group == "weight_scales":
                    policy.weight_scale = value
                elif group == "decay_scales":
                    policy.decay_scale = value
                elif group == "event_weights":
                    policy.event_weight = value
                elif group == "event_decay_speeds":
                    policy.event_decay_speed = value
            return self.effective_params()

    def effective_params(self) -> Dict[str, Any]:
        return {
            "approach_speed": self.engine.config.approach_speed,
            "thresholds": {m: p.threshold for m, p in self.policies.items()},
            "weight_scales": {m: p.weight_scale for m, p in self.policies.items()},
            "decay_scales": {m: p.decay_scale for m, p in self.policies.items()},
            "event_weights": {m: p.event_weight for m, p in self.policies.items()},
            "event_decay_speeds": {m: p.event_decay_speed for m, p in self.policies.items()},
        }

    def status(self) -> Dict[str, Any]:
        now = self.clock()
        with self._mutate_lock:
            activity = self.registry.snapshot(now)
            modalities = {
                name: {
                    "enabled": policy.enabled,
                    "threshold": policy.threshold,
                    "activity_source": policy.activity_source,
                    "weight_scale": policy.weight_scale,
                    "decay_scale": policy.decay_scale,
                    "event_weight": policy.event_weight,
                    "event_decay_speed": policy.event_decay_speed,
                    "activity": activity.get(policy.activity_source or name),
                }
                for name, policy in self.policies.items()
            }
            fusion_obj = json.loads(encode(fusion_message(self.engine.latest), "json"))
        components = [
            {
                "name": h.name,
                "kind": h.descriptor.kind,
                "rate_hz": h.descriptor.rate_hz,
                "enabled": h.enabled,
                "inputs": list(h.descriptor.inputs),
                "outputs": list(h.descriptor.outputs),
                "steps": h.steps,
                "errors": h.errors,
                "last_error": h.last_error,
                "messages_out": h.messages_out,
                "last_output_at": h.last_output_at,
            }
            for h in self.runtime.components()
        ]
        return {
            "uptime": now,
            "running": self.runtime.running,
            "config_hash": self.config.config_hash,
            "approach_speed": self.engine.config.approach_speed,
            "components": components,
            "modalities": modalities,
            "queues": self.runtime.queue_stats(),
            "wire": {
                "ingest": self.ingest.counters.as_dict() if self.ingest else None,
                "broadcast": {
                    "sent": self.broadcaster.sent,
                    "send_errors": self.broadcaster.send_errors,
                    "targets": len(self.broadcaster.targets),
                },
            },
            "routing": self.route_counters.as_dict(),
            "recording": {
                "active": self.recorder is not None and self.recording_error is None,
                "path": self.config.record_path,
                "records": self.recorder.records_written if self.recorder else 0,
                "error": self.recording_error,
            },
            "fusion": fusion_obj,
        }
