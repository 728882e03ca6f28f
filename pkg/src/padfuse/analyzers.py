"""Built-in desk-scale analyzers.

These stand in for heavyweight capture/ML stacks: an energy-based voice
activity detector with hangover, a landmark-asymmetry face activity
scorer, skeleton tilt/activation features with a rule-based dominance
score, a valence/arousal bridge for face events, and a scripted source
for tests and demos. All of them are deterministic functions of their
input windows; the only state is the declared sliding windows and the
VAD hangover timer.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence, Tuple

from .emotion import DominanceRule, va_to_dominance
from .fusion import AffectEvent

# BlazePose-style landmark indexing (pose frames carry exactly 33 points).
POSE_POINT_COUNT = 33
POSE_NOSE = 0
POSE_LEFT_EAR = 7
POSE_RIGHT_EAR = 8
POSE_LEFT_SHOULDER = 11
POSE_RIGHT_SHOULDER = 12
POSE_LEFT_HIP = 23
POSE_RIGHT_HIP = 24

# Canonical face landmark order: left eye outer corner, right eye outer
# corner, nose tip, chin, left mouth corner, right mouth corner.
FACE_LEFT_EYE = 0
FACE_RIGHT_EYE = 1
FACE_NOSE = 2
FACE_CHIN = 3
FACE_MOUTH_LEFT = 4
FACE_MOUTH_RIGHT = 5
FACE_MIN_POINTS = 6

# Image coordinates grow downward, so "up" is -y.
_UP = (0.0, -1.0, 0.0)


@dataclass
class RawSamples:
    """A window of audio samples in [-1, 1]."""

    samples: Sequence[float]
    sample_rate: float
    at: float

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("sample window must be non-empty")
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be > 0")


@dataclass
class LandmarkFrame:
    """A face or pose landmark frame in normalized coordinates."""

    kind: str
    points: Sequence[Tuple[float, float, float]]
    at: float
    source: str = ""

    def __post_init__(self):
        if self.kind not in ("face", "pose"):
            raise ValueError(f"unknown landmark kind {self.kind!r}")
        self.points = tuple((float(x), float(y), float(z)) for x, y, z in self.points)
        if self.kind == "pose" and len(self.points) != POSE_POINT_COUNT:
            raise ValueError(
                f"pose frames carry exactly {POSE_POINT_COUNT} points, got {len(self.points)}"
            )
        if self.kind == "face" and len(self.points) < FACE_MIN_POINTS:
            raise ValueError(
                f"face frames carry >= {FACE_MIN_POINTS} canonical points, got {len(self.points)}"
            )


@dataclass(frozen=True)
class PoseFeatures:
    head_tilt: float  # radians from vertical, [0, pi]
    body_tilt: float  # radians from vertical, [0, pi]
    activation: float  # mean per-point displacement per second, >= 0


# -- voice activity ---------------------------------------------------------


@dataclass(frozen=True)
class VadConfig:
    window_ms: float = 30.0
    rms_floor: float = 0.01
    rms_ceil: float = 0.2
    hangover_ms: float = 300.0

    def __post_init__(self):
        if not self.window_ms > 0.0:
            raise ValueError("window_ms must be > 0")
        if not 0.0 <= self.rms_floor < self.rms_ceil:
            raise ValueError("need 0 <= rms_floor < rms_ceil")
        if self.hangover_ms < 0.0:
            raise ValueError("hangover_ms must be >= 0")


def rms(samples: Sequence[float]) -> float:
    return math.sqrt(sum(s * s for s in samples) / len(samples))


class VoiceActivityDetector:
    """Energy-based VAD emitting a voice-presence probability in [0, 1].

    p = clamp((rms - floor) / (ceil - floor)); once p reaches 0.5 it is
    held at >= 0.5 for hangover_ms (keyed on window timestamps), bridging
    short intra-speech dips.
    """

    def __init__(self, config: Optional[VadConfig] = None):
        self.config = config if config is not None else VadConfig()
        self._hold_until: Optional[float] = None

    def reset(self) -> None:
        self._hold_until = None

    def probability(self, window: RawSamples) -> float:
        cfg = self.config
        need = max(1, int(round(window.sample_rate * cfg.window_ms / 1000.0)))
        if len(window.samples) < need:
            raise ValueError(
                f"window carries {len(window.samples)} samples, need >= {need}"
            )
        level = rms(window.samples[-need:])
        p = (level - cfg.rms_floor) / (cfg.rms_ceil - cfg.rms_floor)
        p = min(1.0, max(0.0, p))
        if p >= 0.5:
            hold = window.at + cfg.hangover_ms / 1000.0
            if self._hold_until is None or hold > self._hold_until:
                self._hold_until = hold
        elif self._hold_until is not None and window.at <= self._hold_until:
            p = 0.5
        return p


# -- face activity ----------------------------------------------------------


def face_activity(frame: LandmarkFrame, yaw_max: float = 0.5) -> float:
    """Facing-the-camera score in [0, 1] from eye/nose asymmetry.

    Symmetric eye-corner-to-nose-tip horizontal distances read as frontal
    (1.0); asymmetry at or beyond yaw_max reads as fully turned away (0.0).
    Built on distance ratios, so uniform scaling and translation of the
    landmark set do not change the score. Frame absence (no score at all
    for a period) is handled upstream by activity staleness.
    """
    if frame.kind != "face":
        raise ValueError("face_activity needs a face frame")
    if not yaw_max > 0.0:
        raise ValueError("yaw_max must be > 0")
    nose_x = frame.points[FACE_NOSE][0]
    left = abs(nose_x - frame.points[FACE_LEFT_EYE][0])
    right = abs(frame.points[FACE_RIGHT_EYE][0] - nose_x)
    span = left + right
    if span <= 0.0:
        return 0.0
    asymmetry = (left - right) / span
    return 1.0 - min(1.0, abs(asymmetry) / yaw_max)


# -- pose features ----------------------------------------------------------


def _midpoint(a: Tuple[float, float, float], b: Tuple[float, float, float]):
    return ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0)


def _tilt_from_vertical(vec: Tuple[float, float, float]) -> float:
    """Unsigned angle in [0, pi] between a vector and the upward direction."""
    norm = math.sqrt(vec[0] ** 2 + vec[1] ** 2 + vec[2] ** 2)
    if norm == 0.0:
        return 0.0
    cos = (vec[0] * _UP[0] + vec[1] * _UP[1] + vec[2] * _UP[2]) / norm
    return math.acos(min(1.0, max(-1.0, cos)))


def pose_features(history: Sequence[LandmarkFrame]) -> PoseFeatures:
    """Tilts from the newest frame plus activation over the window.

    head_tilt: angle of the ear-midpoint -> nose axis against vertical;
    body_tilt: angle of the hip-midpoint -> shoulder-midpoint axis against
    vertical; activation: mean per-landmark displacement per second across
    the window. Needs at least two frames spanning nonzero time.
    """
    if len(history) < 2:
        raise ValueError("pose_features needs at least 2 frames")
    for frame in history:
        if frame.kind != "pose":
            raise ValueError("pose_features needs pose frames")
    span = history[-1].at - history[0].at
    if not span > 0.0:
        raise ValueError("pose window must span > 0 seconds")

    latest = history[-1].points
    ear_mid = _midpoint(latest[POSE_LEFT_EAR], latest[POSE_RIGHT_EAR])
    nose = latest[POSE_NOSE]
    head_axis = (nose[0] - ear_mid[0], nose[1] - ear_mid[1], nose[2] - ear_mid[2])
    hip_mid = _midpoint(latest[POSE_LEFT_HIP], latest[POSE_RIGHT_HIP])
    shoulder_mid = _midpoint(latest[POSE_LEFT_SHOULDER], latest[POSE_RIGHT_SHOULDER])
    body_axis = (
        shoulder_mid[0] - hip_mid[0],
        shoulder_mid[1] - hip_mid[1],
        shoulder_mid[2] - hip_mid[2],
    )

    moved = 0.0
    for prev, cur in zip(history, history[1:]):
        step = 0.0
        for (x0, y0, z0), (x1, y1, z1) in zip(prev.points, cur.points):
            step += math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2 + (z1 - z0) ** 2)
        moved += step / len(cur.points)

    return PoseFeatures(
        head_tilt=_tilt_from_vertical(head_axis),
        body_tilt=_tilt_from_vertical(body_axis),
        activation=moved / span,
    )


@dataclass(frozen=True)
class PoseDominanceConfig:
    tilt_max: float = 0.6  # radians; lean at/beyond this reads as no uprightness
    act_ref: float = 0.5  # displacement units/s that saturate the activation term
    k_tilt: float = 1.0
    k_act: float = 1.0

    def __post_init__(self):
        for name in ("tilt_max", "act_ref", "k_tilt", "k_act"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")


def pose_dominance_score(features: PoseFeatures, cfg: Optional[PoseDominanceConfig] = None) -> float:
    """Perceived dominance in [-1, 1] from uprightness and activation.

    An upright, energetic posture scores high; a slumped, static one low.
    head_tilt is intentionally not part of the rule.
    """
    cfg = cfg if cfg is not None else PoseDominanceConfig()
    upright = 1.0 - abs(features.body_tilt) / cfg.tilt_max
    energy = min(features.activation / cfg.act_ref, 1.0)
    raw = cfg.k_tilt * upright + cfg.k_act * energy - (cfg.k_tilt + cfg.k_act) / 2.0
    return min(1.0, max(-1.0, raw))


def pose_dominance_event(
    features: PoseFeatures,
    cfg: Optional[PoseDominanceConfig] = None,
    weight: float = 1.0,
    decay_speed: float = 0.5,
) -> AffectEvent:
    """Wrap the rule-based dominance score as a pose-modality event."""
    return AffectEvent(
        modality="pose",
        scores={"d": pose_dominance_score(features, cfg)},
        weight=weight,
        decay_speed=decay_speed,
    )


# -- face event bridge -------------------------------------------------------


def face_event(
    valence: float,
    arousal: float,
    rule: DominanceRule = DominanceRule(),
    weight: float = 1.0,
    decay_speed: float = 0.5,
) -> AffectEvent:
    """Build a full P/A/D face event from a valence/arousal prediction."""
    return AffectEvent(
        modality="face",
        scores={
            "p": float(valence),
            "a": float(arousal),
            "d": va_to_dominance(valence, arousal, rule),
        },
        weight=weight,
        decay_speed=decay_speed,
    )


# -- pose sliding window ------------------------------------------------------


class PoseWindow:
    """Keeps recent pose frames and yields features once two frames span
    the window."""

    def __init__(self, window_seconds: float = 1.0):
        if not window_seconds > 0.0:
            raise ValueError("window_seconds must be > 0")
        self.window_seconds = window_seconds
        self._frames: Deque[LandmarkFrame] = deque()

    def add(self, frame: LandmarkFrame) -> Optional[PoseFeatures]:
        self._frames.append(frame)
        cutoff = frame.at - self.window_seconds
        while self._frames and self._frames[0].at < cutoff:
            self._frames.popleft()
        if len(self._frames) < 2 or not self._frames[-1].at > self._frames[0].at:
            return None
        return pose_features(list(self._frames))

    def reset(self) -> None:
        self._frames.clear()


# -- scripted source -----------------------------------------------------------


class ScriptedSource:
    """Replays a list of (offset_seconds, message) pairs against a clock.

    Offsets must be non-decreasing. With acceleration > 1 the script plays
    faster than real time; the messages themselves (and their embedded
    timestamps) are emitted unchanged.
    """

    def __init__(self, script: Sequence[Tuple[float, object]], acceleration: float = 1.0):
        if not acceleration > 0.0:
            raise ValueError("acceleration must be > 0")
        offsets = [float(offset) for offset, _ in script]
        for earlier, later in zip(offsets, offsets[1:]):
            if later < earlier:
                raise ValueError("script offsets must be non-decreasing")
        self.script = [(float(offset), message) for offset, message in script]
        self.acceleration = acceleration
        self._cursor = 0
        self._started_at: Optional[float] = None

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self.script)

    def due(self, now: float) -> List[Tuple[float, object]]:
        """All not-yet-emitted entries whose (scaled) offset has elapsed."""
        if self._started_at is None:
            self._started_at = now
        elapsed = (now - self._started_at) * self.acceleration
        out: List[Tuple[float, object]] = []
        while self._cursor < len(self.script) and self.script[self._cursor][0] <= elapsed:
            out.append(self.script[self._cursor])
            self._cursor += 1
        return out
