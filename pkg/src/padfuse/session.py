"""Session recording and deterministic replay.

Logs are UTF-8 JSONL: a header line carrying the format version, a
wall-clock start stamp and the config hash, then one record per line with
the message and its offset in seconds from session start (receiver
monotonic clock). Offsets must be non-decreasing.

Virtual-time replay drives the fusion engine from recorded offsets: the
engine ticks at every message offset and at every tick_interval boundary
up to the last offset, messages applying just before the tick at their
own offset. Nothing depends on the wall clock, so replaying the same log
with the same config is bit-for-bit reproducible.
"""

import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .analyzers import (
    LandmarkFrame,
    PoseWindow,
    RawSamples,
    VoiceActivityDetector,
    face_activity,
    pose_dominance_event,
)
from .config import DaemonConfig
from .fusion import FusionEngine
from .ingest import RouteCounters, apply_activity, apply_event
from .pipeline import ActivityRegistry
from .wire import (
    ActivityMessage,
    EventMessage,
    FusionMessage,
    LandmarksMessage,
    SamplesMessage,
    WireMessage,
    decode,
    encode,
    fusion_message,
)

SESSION_VERSION = 1


class SessionError(RuntimeError):
    pass


class SessionFormatError(SessionError):
    """Names the offending 1-based line number."""

    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class ConfigHashMismatch(SessionError):
    pass


@dataclass
class LogRecord:
    offset: float
    message: WireMessage


def _header_line(config_hash: str, started: Optional[str] = None) -> bytes:
    started = started or datetime.now(timezone.utc).isoformat()
    header = {
        "type": "session",
        "version": SESSION_VERSION,
        "started": started,
        "config_hash": config_hash,
    }
    return json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _record_line(offset: float, message: WireMessage) -> bytes:
    body = encode(message, "json").decode("utf-8")
    return f'{{"offset":{offset!r},"message":{body}}}'.encode("utf-8")


class SessionRecorder:
    """Append-only JSONL session writer.

    Enforces non-decreasing offsets (an inversion is a producer bug and is
    surfaced, not silently reordered) and flushes at least once a second.
    """

    def __init__(
        self,
        sink: Union[str, io.BufferedIOBase],
        config_hash: str,
        started: Optional[str] = None,
        flush_interval: float = 1.0,
    ):
        if isinstance(sink, str):
            self._fh = open(sink, "wb")
            self._owns = True
        else:
            self._fh = sink
            self._owns = False
        self.flush_interval = flush_interval
        self._last_offset = -math.inf
        self._last_flush_offset = 0.0
        self.records_written = 0
        self.error: Optional[str] = None
        self._fh.write(_header_line(config_hash, started) + b"\n")
        self._fh.flush()

    def append(self, offset: float, message: WireMessage) -> None:
        if self.error is not None:
            raise SessionError(f"recorder already failed: {self.error}")
        if offset < self._last_offset:
            self.error = (
                f"offset regression: {offset!r} after {self._last_offset!r}"
            )
            raise SessionError(self.error)
        try:
            self._fh.write(_record_line(offset, message) + b"\n")
            if offset - self._last_flush_offset >= self.flush_interval:
                self._fh.flush()
                self._last_flush_offset = offset
        except OSError as exc:
            self.error = f"write failed: {exc}"
            raise SessionError(self.error) from exc
        self._last_offset = offset
        self.records_written += 1

    def close(self) -> None:
        try:
            self._fh.flush()
        finally:
            if self._owns:
                self._fh.close()


def write_session(
    path: str,
    config_hash: str,
    rows: Iterable[Tuple[float, WireMessage]],
    started: Optional[str] = None,
) -> int:
    """Write a whole session in one go; returns the record count."""
    recorder = SessionRecorder(path, config_hash, started=started)
    count = 0
    try:
        for offset, message in rows:
            recorder.append(offset, message)
            count += 1
    finally:
        recorder.close()
    return count


def read_session(path: str) -> Tuple[dict, List[LogRecord]]:
    """Parse a session log; corrupt lines abort with their line number."""
    with open(path, "rb") as fh:
        lines = fh.read().split(b"\n")
    if not lines or not lines[0]:
        raise SessionFormatError(1, "missing session header")
    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise SessionFormatError(1, f"invalid header: {exc}") from None
    if not isinstance(header, dict) or header.get("type") != "session":
        raise SessionFormatError(1, "first line must be the session header")
    if header.get("version") != SESSION_VERSION:
        raise SessionFormatError(1, f"unsupported session version {header.get('version')!r}")
    records: List[LogRecord] = []
    last_offset = -math.inf
    for i, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except ValueError as exc:
            raise SessionFormatError(i, f"invalid json: {exc}") from None
        if not isinstance(obj, dict) or "offset" not in obj or "message" not in obj:
            raise SessionFormatError(i, "record must carry offset and message")
        offset = obj["offset"]
        if isinstance(offset, bool) or not isinstance(offset, (int, float)):
            raise SessionFormatError(i, "offset must be a number")
        offset = float(offset)
        if not math.isfinite(offset) or offset < 0.0:
            raise SessionFormatError(i, "offset must be finite and >= 0")
        if offset < last_offset:
            raise SessionFormatError(i, f"offset {offset!r} decreases")
        last_offset = offset
        try:
            message = decode(
                json.dumps(obj["message"], separators=(",", ":"), ensure_ascii=False).encode("utf-8"),
                "json",
            )
        except Exception as exc:
            raise SessionFormatError(i, f"invalid message: {exc}") from None
        records.append(LogRecord(offset=offset, message=message))
    return header, records


def check_config_hash(header: dict, config: DaemonConfig, override: bool = False) -> None:
    recorded = header.get("config_hash")
    if recorded != config.config_hash and not override:
        raise ConfigHashMismatch(
            f"log was recorded with config {recorded!r}, loaded config is "
            f"{config.config_hash!r}; pass an override to replay anyway"
        )


# -- virtual-time replay ------------------------------------------------------


class ReplayDriver:
    """Synchronous fusion pipeline for one replay run.

    Applies the same ingestion path as the live daemon (apply_event /
    apply_activity) and runs the built-in analyzers in-line for samples
    and landmark messages.
    """

    def __init__(self, config: DaemonConfig):
        self.config = config
        self.engine = FusionEngine(config.fusion, config.label_table)
        self.registry = ActivityRegistry(
            stale_after=config.stale_after,
            thresholds={name: p.threshold for name, p in config.policies.items()},
        )
        self.policies = config.fresh_policies()
        self.counters = RouteCounters()
        self.vad = VoiceActivityDetector(config.vad)
        self.pose_window = PoseWindow(config.pose_window_seconds)

    def apply(self, message: WireMessage, at: float) -> None:
        if isinstance(message, EventMessage):
            apply_event(message, at, self.engine, self.registry, self.policies, self.counters)
        elif isinstance(message, ActivityMessage):
            apply_activity(message, at, self.registry)
        elif isinstance(message, SamplesMessage):
            try:
                window = RawSamples(samples=message.data, sample_rate=message.rate, at=at)
                probability = self.vad.probability(window)
            except ValueError:
                self.counters.dropped_invalid += 1
                return
            self.registry.set_activity("voice", probability, at)
        elif isinstance(message, LandmarksMessage):
            points = [
                tuple(message.points[i : i + 3]) for i in range(0, len(message.points), 3)
            ]
            try:
                frame = LandmarkFrame(kind=message.kind, points=points, at=at)
            except ValueError:
                self.counters.dropped_invalid += 1
                return
            if frame.kind == "face":
                self.registry.set_activity(
                    "face", face_activity(frame, self.config.face_yaw_max), at
                )
            else:
                features = self.pose_window.add(frame)
                if features is not None:
                    policy = self.policies.get("pose")
                    event = pose_dominance_event(
                        features,
                        self.config.pose_rule,
                        weight=policy.event_weight if policy else 1.0,
                        decay_speed=policy.event_decay_speed if policy else 0.5,
                    )
                    msg = EventMessage(
                        modality=event.modality,
                        scores=event.scores,
                        weight=event.weight,
                        decay_speed=event.decay_speed,
                        t=at,
                    )
                    apply_event(msg, at, self.engine, self.registry, self.policies, self.counters)
        # fusion-type records are replay *output*, never input

    def tick(self, at: float) -> FusionMessage:
        return fusion_message(self.engine.tick(at))


def _time_grid(offsets: Sequence[float], tick_interval: float) -> List[float]:
    """Message offsets merged with tick boundaries up to the last offset."""
    end = max(offsets) if offsets else 0.0
    points = set(float(o) for o in offsets)
    k = 0
    while True:
        boundary = k * tick_interval
        if boundary > end:
            break
        points.add(boundary)
        k += 1
    return sorted(points)


def replay_session(
    records: Sequence[LogRecord],
    config: DaemonConfig,
    on_result: Optional[Callable[[float, FusionMessage], None]] = None,
) -> List[Tuple[float, FusionMessage]]:
    """Deterministic virtual-time replay; returns (offset, fusion) pairs."""
    driver = ReplayDriver(config)
    inputs = [r for r in records if not isinstance(r.message, FusionMessage)]
    by_offset: Dict[float, List[LogRecord]] = {}
    for record in inputs:
        by_offset.setdefault(record.offset, []).append(record)
    out: List[Tuple[float, FusionMessage]] = []
    for t in _time_grid([r.offset for r in inputs], config.fusion.tick_interval):
        for record in by_offset.get(t, ()):
            driver.apply(record.message, t)
        result = driver.tick(t)
        out.append((t, result))
        if on_result is not None:
            on_result(t, result)
    return out


def replay_wallclock(
    records: Sequence[LogRecord],
    speed: float,
    sink: Callable[[WireMessage, float], None],
    clock: Callable[[], float],
    sleep: Callable[[float], None],
) -> int:
    """Feed records into `sink` with inter-message gaps scaled by 1/speed."""
    if not speed > 0.0:
        raise ValueError("speed must be > 0")
    inputs = [r for r in records if not isinstance(r.message, FusionMessage)]
    if not inputs:
        return 0
    start = clock()
    base = inputs[0].offset
    for record in inputs:
        due = start + (record.offset - base) / speed
        delay = due - clock()
        if delay > 0:
            sleep(delay)
        sink(record.message, clock())
    return len(inputs)
