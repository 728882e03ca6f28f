"""Wire protocol: tagged message envelopes over UDP in JSON or XML.

One datagram carries one message. Encodings are byte-stable: fixed key
order (type, version, then the body fields), compact separators, and
shortest round-trip float formatting, so golden-byte tests and replay
logs stay exact. Decoding is strict about ranges and required fields but
ignores unknown extra fields, and it must never crash: every failure maps
onto one of four error categories (syntax, schema, range, version).
"""

import json
import math
import socket
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape, quoteattr

from .emotion import PAD_DIMS
from .fusion import FusionResult

WIRE_VERSION = 1
MAX_DATAGRAM_BYTES = 60 * 1024


class WireError(ValueError):
    pass


class WireEncodeError(WireError):
    pass


class OversizeError(WireEncodeError):
    pass


class WireDecodeError(WireError):
    """Base of the four decode failure categories."""

    category = "decode"


class WireSyntaxError(WireDecodeError):
    category = "syntax"


class WireSchemaError(WireDecodeError):
    category = "schema"


class WireRangeError(WireDecodeError):
    category = "range"


class WireVersionError(WireDecodeError):
    category = "version"


# -- message model -----------------------------------------------------------


@dataclass(frozen=True)
class EventMessage:
    type = "event"
    modality: str
    scores: Dict[str, float]  # partial over p/a/d, at least one
    weight: float
    decay_speed: float
    t: float

    def __post_init__(self):
        ordered = {dim: float(self.scores[dim]) for dim in PAD_DIMS if dim in self.scores}
        object.__setattr__(self, "scores", ordered)


@dataclass(frozen=True)
class ActivityMessage:
    type = "activity"
    modality: str
    score: float
    t: float


@dataclass(frozen=True)
class LandmarksMessage:
    type = "landmarks"
    kind: str
    points: Tuple[float, ...]  # flat x,y,z triples
    t: float

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(v) for v in self.points))


@dataclass(frozen=True)
class SamplesMessage:
    type = "samples"
    rate: float
    data: Tuple[float, ...]
    t: float

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(float(v) for v in self.data))


@dataclass(frozen=True)
class FusionMessage:
    type = "fusion"
    t: float
    p: float
    a: float
    d: float
    label: str
    point: Tuple[float, float, float]
    active: int

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))


WireMessage = Union[EventMessage, ActivityMessage, LandmarksMessage, SamplesMessage, FusionMessage]

MESSAGE_TYPES = ("event", "activity", "landmarks", "samples", "fusion")


def fusion_message(result: FusionResult) -> FusionMessage:
    return FusionMessage(
        t=result.at,
        p=result.pad.pleasure,
        a=result.pad.arousal,
        d=result.pad.dominance,
        label=result.label,
        point=result.fusion_point.as_tuple(),
        active=result.active_event_count,
    )


# -- validation helpers ------------------------------------------------------


def _require(obj: dict, key: str, kind: str):
    if key not in obj:
        raise WireSchemaError(f"{kind} message missing field {key!r}")
    return obj[key]


def _finite(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise WireSchemaError(f"{what} must be a number")
    try:
        value = float(value)
    except OverflowError:
        raise WireRangeError(f"{what} must be finite") from None
    if not math.isfinite(value):
        raise WireRangeError(f"{what} must be finite")
    return value


def _unit_range(value, what: str) -> float:
    value = _finite(value, what)
    if not -1.0 <= value <= 1.0:
        raise WireRangeError(f"{what} must lie in [-1, 1], got {value!r}")
    return value


# Characters no XML 1.0 document can carry (plus \r, which XML parsers
# normalize away, and lone surrogates, which utf-8 cannot encode). Text
# fields must avoid them so either format can carry any valid message.
_FORBIDDEN_TEXT = frozenset(
    chr(c) for c in range(0x20) if chr(c) not in ("\t", "\n")
) | {"\r", "￾", "￿"}


def _text(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise WireSchemaError(f"{what} must be a non-empty string")
    for ch in value:
        if ch in _FORBIDDEN_TEXT or "\ud800" <= ch <= "\udfff":
            raise WireSchemaError(f"{what} contains characters the wire formats cannot carry")
    return value


def validate_message(msg: WireMessage) -> WireMessage:
    """Full range/shape validation shared by encode and decode."""
    if isinstance(msg, EventMessage):
        _text(msg.modality, "event modality")
        if not msg.scores:
            raise WireSchemaError("event scores must carry at least one of p/a/d")
        for dim, value in msg.scores.items():
            if dim not in PAD_DIMS:
                raise WireSchemaError(f"unknown score dimension {dim!r}")
            _unit_range(value, f"event score {dim}")
        weight = _finite(msg.weight, "event weight")
        if weight < 0.0:
            raise WireRangeError(f"event weight must be >= 0, got {weight!r}")
        speed = _finite(msg.decay_speed, "event decay_speed")
        if speed <= 0.0:
            raise WireRangeError(f"event decay_speed must be > 0, got {speed!r}")
        _finite(msg.t, "event t")
    elif isinstance(msg, ActivityMessage):
        _text(msg.modality, "activity modality")
        score = _finite(msg.score, "activity score")
        if not 0.0 <= score <= 1.0:
            raise WireRangeError(f"activity score must lie in [0, 1], got {score!r}")
        _finite(msg.t, "activity t")
    elif isinstance(msg, LandmarksMessage):
        if msg.kind not in ("face", "pose"):
            raise WireSchemaError(f"landmarks kind must be face|pose, got {msg.kind!r}")
        if not msg.points:
            raise WireSchemaError("landmarks points must be non-empty")
        if len(msg.points) % 3 != 0:
            raise WireSchemaError("landmarks points must be flat x,y,z triples")
        for i, value in enumerate(msg.points):
            _finite(value, f"landmarks point[{i}]")
        _finite(msg.t, "landmarks t")
    elif isinstance(msg, SamplesMessage):
        rate = _finite(msg.rate, "samples rate")
        if rate <= 0.0:
            raise WireRangeError(f"samples rate must be > 0, got {rate!r}")
        if not msg.data:
            raise WireSchemaError("samples data must be non-empty")
        for i, value in enumerate(msg.data):
            _unit_range(value, f"samples data[{i}]")
        _finite(msg.t, "samples t")
    elif isinstance(msg, FusionMessage):
        _finite(msg.t, "fusion t")
        _unit_range(msg.p, "fusion p")
        _unit_range(msg.a, "fusion a")
        _unit_range(msg.d, "fusion d")
        _text(msg.label, "fusion label")
        if len(msg.point) != 3:
            raise WireSchemaError("fusion point must carry p, a and d")
        for dim, value in zip(PAD_DIMS, msg.point):
            _unit_range(value, f"fusion point {dim}")
        if isinstance(msg.active, bool) or not isinstance(msg.active, int) or msg.active < 0:
            raise WireSchemaError("fusion active must be an integer >= 0")
    else:
        raise WireSchemaError(f"unknown message object {type(msg).__name__}")
    return msg


# -- JSON --------------------------------------------------------------------


def _num(value: float) -> float:
    # json serializes python floats with repr(): shortest round-trip form
    return float(value)


def _json_obj(msg: WireMessage) -> dict:
    if isinstance(msg, EventMessage):
        return {
            "type": "event",
            "version": WIRE_VERSION,
            "modality": msg.modality,
            "scores": {dim: _num(v) for dim, v in msg.scores.items()},
            "weight": _num(msg.weight),
            "decay_speed": _num(msg.decay_speed),
            "t": _num(msg.t),
        }
    if isinstance(msg, ActivityMessage):
        return {
            "type": "activity",
            "version": WIRE_VERSION,
            "modality": msg.modality,
            "score": _num(msg.score),
            "t": _num(msg.t),
        }
    if isinstance(msg, LandmarksMessage):
        return {
            "type": "landmarks",
            "version": WIRE_VERSION,
            "kind": msg.kind,
            "points": [_num(v) for v in msg.points],
            "t": _num(msg.t),
        }
    if isinstance(msg, SamplesMessage):
        return {
            "type": "samples",
            "version": WIRE_VERSION,
            "rate": _num(msg.rate),
            "data": [_num(v) for v in msg.data],
            "t": _num(msg.t),
        }
    return {
        "type": "fusion",
        "version": WIRE_VERSION,
        "t": _num(msg.t),
        "p": _num(msg.p),
        "a": _num(msg.a),
        "d": _num(msg.d),
        "label": msg.label,
        "point": {dim: _num(v) for dim, v in zip(PAD_DIMS, msg.point)},
        "active": int(msg.active),
    }


def _xml_num(value: float) -> str:
    return repr(float(value))


def _xml_body(msg: WireMessage) -> str:
    if isinstance(msg, EventMessage):
        scores = "".join(f"<{d}>{_xml_num(v)}</{d}>" for d, v in msg.scores.items())
        return (
            f"<modality>{escape(msg.modality)}</modality>"
            f"<scores>{scores}</scores>"
            f"<weight>{_xml_num(msg.weight)}</weight>"
            f"<decay_speed>{_xml_num(msg.decay_speed)}</decay_speed>"
            f"<t>{_xml_num(msg.t)}</t>"
        )
    if isinstance(msg, ActivityMessage):
        return (
            f"<modality>{escape(msg.modality)}</modality>"
            f"<score>{_xml_num(msg.score)}</score>"
            f"<t>{_xml_num(msg.t)}</t>"
        )
    if isinstance(msg, LandmarksMessage):
        points = " ".join(_xml_num(v) for v in msg.points)
        return (
            f"<kind>{msg.kind}</kind>"
            f"<points>{points}</points>"
            f"<t>{_xml_num(msg.t)}</t>"
        )
    if isinstance(msg, SamplesMessage):
        data = " ".join(_xml_num(v) for v in msg.data)
        return (
            f"<rate>{_xml_num(msg.rate)}</rate>"
            f"<data>{data}</data>"
            f"<t>{_xml_num(msg.t)}</t>"
        )
    point = "".join(
        f"<{d}>{_xml_num(v)}</{d}>" for d, v in zip(PAD_DIMS, msg.point)
    )
    return (
        f"<t>{_xml_num(msg.t)}</t>"
        f"<p>{_xml_num(msg.p)}</p>"
        f"<a>{_xml_num(msg.a)}</a>"
        f"<d>{_xml_num(msg.d)}</d>"
        f"<label>{escape(msg.label)}</label>"
        f"<point>{point}</point>"
        f"<active>{int(msg.active)}</active>"
    )


def encode(msg: WireMessage, fmt: str = "json") -> bytes:
    """Encode a message for one datagram. Raises OversizeError past 60 KiB."""
    validate_message(msg)
    if fmt == "json":
        payload = json.dumps(
            _json_obj(msg), separators=(",", ":"), ensure_ascii=False
        ).encode("utf-8")
    elif fmt == "xml":
        payload = (
            f"<msg type={quoteattr(msg.type)} version=\"{WIRE_VERSION}\">"
            f"{_xml_body(msg)}</msg>"
        ).encode("utf-8")
    else:
        raise WireEncodeError(f"unknown format {fmt!r}")
    if len(payload) > MAX_DATAGRAM_BYTES:
        raise OversizeError(
            f"encoded message is {len(payload)} bytes, limit {MAX_DATAGRAM_BYTES}"
        )
    return payload


# -- decoding ----------------------------------------------------------------


def _reject_constant(name: str):
    raise WireRangeError(f"non-finite number {name!r}")


def _decode_json(data: bytes) -> dict:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireSyntaxError(f"invalid utf-8: {exc}") from None
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except WireDecodeError:
        raise
    except (ValueError, RecursionError) as exc:
        raise WireSyntaxError(f"invalid json: {exc}") from None
    if not isinstance(obj, dict):
        raise WireSchemaError("message must be a json object")
    return obj


def _xml_floats(text: Optional[str], what: str) -> List[float]:
    out = []
    for i, token in enumerate((text or "").split()):
        try:
            out.append(float(token))
        except ValueError:
            raise WireSchemaError(f"{what}[{i}] is not a number") from None
    return out


def _xml_float(elem: Optional[ET.Element], what: str) -> float:
    if elem is None or elem.text is None:
        raise WireSchemaError(f"missing field {what!r}")
    try:
        return float(elem.text.strip())
    except ValueError:
        raise WireSchemaError(f"{what} is not a number") from None


def _xml_text(elem: Optional[ET.Element], what: str) -> str:
    if elem is None or elem.text is None:
        raise WireSchemaError(f"missing field {what!r}")
    return elem.text


def _decode_xml(data: bytes) -> dict:
    """Lower an XML datagram into the same dict shape the JSON path uses."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireSyntaxError(f"invalid utf-8: {exc}") from None
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise WireSyntaxError(f"invalid xml: {exc}") from None
    if root.tag != "msg":
        raise WireSchemaError(f"root element must be <msg>, got <{root.tag}>")
    obj: dict = {
        "type": root.get("type"),
        "version": root.get("version"),
    }
    try:
        obj["version"] = int(obj["version"])
    except (TypeError, ValueError):
        pass  # left as-is; the schema check below reports it
    mtype = obj["type"]
    if mtype == "event":
        scores_elem = root.find("scores")
        scores = {}
        if scores_elem is not None:
            for child in scores_elem:
                scores[child.tag] = _xml_float(child, f"score {child.tag}")
        obj.update(
            modality=_xml_text(root.find("modality"), "modality"),
            scores=scores,
            weight=_xml_float(root.find("weight"), "weight"),
            decay_speed=_xml_float(root.find("decay_speed"), "decay_speed"),
            t=_xml_float(root.find("t"), "t"),
        )
    elif mtype == "activity":
        obj.update(
            modality=_xml_text(root.find("modality"), "modality"),
            score=_xml_float(root.find("score"), "score"),
            t=_xml_float(root.find("t"), "t"),
        )
    elif mtype == "landmarks":
        points_elem = root.find("points")
        if points_elem is None:
            raise WireSchemaError("missing field 'points'")
        obj.update(
            kind=_xml_text(root.find("kind"), "kind"),
            points=_xml_floats(points_elem.text, "points"),
            t=_xml_float(root.find("t"), "t"),
        )
    elif mtype == "samples":
        data_elem = root.find("data")
        if data_elem is None:
            raise WireSchemaError("missing field 'data'")
        obj.update(
            rate=_xml_float(root.find("rate"), "rate"),
            data=_xml_floats(data_elem.text, "data"),
            t=_xml_float(root.find("t"), "t"),
        )
    elif mtype == "fusion":
        point_elem = root.find("point")
        point = {}
        if point_elem is not None:
            for child in point_elem:
                point[child.tag] = _xml_float(child, f"point {child.tag}")
        active_text = _xml_text(root.find("active"), "active").strip()
        try:
            active = int(active_text)
        except ValueError:
            raise WireSchemaError("fusion active must be an integer") from None
        obj.update(
            t=_xml_float(root.find("t"), "t"),
            p=_xml_float(root.find("p"), "p"),
            a=_xml_float(root.find("a"), "a"),
            d=_xml_float(root.find("d"), "d"),
            label=_xml_text(root.find("label"), "label"),
            point=point,
            active=active,
        )
    # unknown types fall through to the shared version/type check
    return obj


def _message_from_obj(obj: dict) -> WireMessage:
    mtype = obj.get("type")
    if not isinstance(mtype, str):
        raise WireSchemaError("message missing 'type'")
    version = obj.get("version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise WireSchemaError("message missing integer 'version'")
    if mtype not in MESSAGE_TYPES or version > WIRE_VERSION:
        raise WireVersionError(f"unsupported type/version: {mtype!r} v{version}")
    if version < 1:
        raise WireSchemaError(f"version must be >= 1, got {version}")
    if mtype == "event":
        scores = _require(obj, "scores", "event")
        if not isinstance(scores, dict):
            raise WireSchemaError("event scores must be an object")
        # unknown score dimensions are extra fields: ignored for forward compat
        checked_scores = {
            dim: _finite(value, f"event score {dim}")
            for dim, value in scores.items()
            if dim in PAD_DIMS
        }
        msg: WireMessage = EventMessage(
            modality=_text(_require(obj, "modality", "event"), "event modality"),
            scores=checked_scores,
            weight=_finite(_require(obj, "weight", "event"), "event weight"),
            decay_speed=_finite(_require(obj, "decay_speed", "event"), "event decay_speed"),
            t=_finite(_require(obj, "t", "event"), "event t"),
        )
    elif mtype == "activity":
        msg = ActivityMessage(
            modality=_text(_require(obj, "modality", "activity"), "activity modality"),
            score=_finite(_require(obj, "score", "activity"), "activity score"),
            t=_finite(_require(obj, "t", "activity"), "activity t"),
        )
    elif mtype == "landmarks":
        points = _require(obj, "points", "landmarks")
        if not isinstance(points, (list, tuple)):
            raise WireSchemaError("landmarks points must be an array")
        msg = LandmarksMessage(
            kind=_text(_require(obj, "kind", "landmarks"), "landmarks kind"),
            points=tuple(_finite(v, f"landmarks point[{i}]") for i, v in enumerate(points)),
            t=_finite(_require(obj, "t", "landmarks"), "landmarks t"),
        )
    elif mtype == "samples":
        data = _require(obj, "data", "samples")
        if not isinstance(data, (list, tuple)):
            raise WireSchemaError("samples data must be an array")
        msg = SamplesMessage(
            rate=_finite(_require(obj, "rate", "samples"), "samples rate"),
            data=tuple(_finite(v, f"samples data[{i}]") for i, v in enumerate(data)),
            t=_finite(_require(obj, "t", "samples"), "samples t"),
        )
    else:
        point = _require(obj, "point", "fusion")
        if isinstance(point, dict):
            try:
                point_tuple = tuple(_finite(point[dim], f"fusion point {dim}") for dim in PAD_DIMS)
            except KeyError as exc:
                raise WireSchemaError(f"fusion point missing {exc.args[0]!r}") from None
        elif isinstance(point, (list, tuple)) and len(point) == 3:
            point_tuple = tuple(_finite(v, "fusion point") for v in point)
        else:
            raise WireSchemaError("fusion point must carry p, a and d")
        active = _require(obj, "active", "fusion")
        if isinstance(active, bool) or not isinstance(active, int):
            raise WireSchemaError("fusion active must be an integer")
        msg = FusionMessage(
            t=_finite(_require(obj, "t", "fusion"), "fusion t"),
            p=_finite(_require(obj, "p", "fusion"), "fusion p"),
            a=_finite(_require(obj, "a", "fusion"), "fusion a"),
            d=_finite(_require(obj, "d", "fusion"), "fusion d"),
            label=_text(_require(obj, "label", "fusion"), "fusion label"),
            point=point_tuple,
            active=active,
        )
    return validate_message(msg)


def decode(data: bytes, fmt: str = "json") -> WireMessage:
    """Decode one datagram; raises a WireDecodeError subclass on any failure."""
    if fmt == "json":
        obj = _decode_json(bytes(data))
    elif fmt == "xml":
        obj = _decode_xml(bytes(data))
    else:
        raise WireDecodeError(f"unknown format {fmt!r}")
    return _message_from_obj(obj)


# -- sockets -----------------------------------------------------------------


@dataclass
class IngestCounters:
    accepted: int = 0
    rejected: Dict[str, int] = field(
        default_factory=lambda: {"syntax": 0, "schema": 0, "range": 0, "version": 0}
    )

    def as_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": dict(self.rejected)}


class UdpIngest:
    """Non-blocking UDP receiver; a malformed datagram never interrupts it."""

    def __init__(self, host: str = "127.0.0.1", port: int = 9870, fmt: str = "json"):
        self.fmt = fmt
        self.counters = IngestCounters()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.setblocking(False)
        self.address = self._sock.getsockname()

    def poll(self, clock, max_datagrams: int = 256) -> List[Tuple[WireMessage, float]]:
        """Drain pending datagrams into decoded (message, receive_time) pairs."""
        out: List[Tuple[WireMessage, float]] = []
        for _ in range(max_datagrams):
            try:
                data, _addr = self._sock.recvfrom(MAX_DATAGRAM_BYTES + 1)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                break
            received_at = clock()
            try:
                msg = decode(data, self.fmt)
            except WireDecodeError as exc:
                self.counters.rejected[exc.category] = (
                    self.counters.rejected.get(exc.category, 0) + 1
                )
                continue
            self.counters.accepted += 1
            out.append((msg, received_at))
        return out

    def close(self) -> None:
        self._sock.close()


@dataclass
class BroadcastTarget:
    host: str
    port: int
    fmt: str = "json"


class UdpBroadcaster:
    """Sends each message to every configured target; failures are counted,
    never fatal."""

    def __init__(self, targets: Sequence[BroadcastTarget]):
        self.targets = list(targets)
        self.sent = 0
        self.send_errors = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._lock = threading.Lock()

    def send(self, msg: WireMessage) -> Dict[str, bytes]:
        """Encode once per format in use; returns the bytes per format."""
        encoded: Dict[str, bytes] = {}
        for target in self.targets:
            if target.fmt not in encoded:
                encoded[target.fmt] = encode(msg, target.fmt)
            try:
                with self._lock:
                    self._sock.sendto(encoded[target.fmt], (target.host, target.port))
                self.sent += 1
            except OSError:
                self.send_errors += 1
        if "json" not in encoded:
            encoded["json"] = encode(msg, "json")
        return encoded

    def close(self) -> None:
        self._sock.close()
