"""Daemon configuration: a JSON document with full defaulting.

A two-line config runs the daemon: every section and key falls back to a
documented default. Validation collects all failures at once, each naming
the offending key path. The config hash - a sha256 over the canonicalized
(fully defaulted, sorted-key, compact) document - stamps session logs so
replays can refuse a mismatched configuration.
"""

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .analyzers import PoseDominanceConfig, VadConfig
from .emotion import (
    DEFAULT_LABEL_PROTOTYPES,
    DominanceRule,
    EmotionConfigError,
    LabelPrototypeTable,
    PadVector,
)
from .fusion import FusionConfig
from .ingest import ModalityPolicy

DEFAULT_CONFIG: Dict[str, Any] = {
    "fusion": {
        "tick_interval": 0.02,
        "approach_speed": 1.0,
        "neutral_point": [0.0, 0.0, 0.0],
        "max_active_events": 1024,
    },
    "emotion": {
        "labels": [[label, list(coords)] for label, coords in DEFAULT_LABEL_PROTOTYPES],
        "dominance_rule": {"offset": 0.0, "pleasure_coef": 0.5, "arousal_coef": 0.25},
    },
    "gating": {
        "stale_after": 1.0,
        "modalities": {
            "face": {
                "enabled": True,
                "threshold": 0.2,
                "activity_source": "face",
                "weight_scale": 1.0,
                "decay_scale": 1.0,
                "event_weight": 1.0,
                "event_decay_speed": 0.5,
            },
            "voice": {
                "enabled": True,
                "threshold": 0.2,
                "activity_source": "voice",
                "weight_scale": 1.0,
                "decay_scale": 1.0,
                "event_weight": 1.0,
                "event_decay_speed": 0.5,
            },
            "sentiment": {
                "enabled": True,
                "threshold": 0.2,
                "activity_source": "voice",
                "weight_scale": 1.0,
                "decay_scale": 1.0,
                "event_weight": 1.0,
                "event_decay_speed": 0.3,
            },
            "pose": {
                "enabled": True,
                "threshold": 0.0,
                "activity_source": None,
                "weight_scale": 1.0,
                "decay_scale": 1.0,
                "event_weight": 0.5,
                "event_decay_speed": 0.5,
            },
        },
    },
    "analyzers": {
        "vad": {"window_ms": 30.0, "rms_floor": 0.01, "rms_ceil": 0.2, "hangover_ms": 300.0},
        "face": {"yaw_max": 0.5},
        "pose": {
            "tilt_max": 0.6,
            "act_ref": 0.5,
            "k_tilt": 1.0,
            "k_act": 1.0,
            "window_seconds": 1.0,
        },
    },
    "pipeline": {
        "queue_capacity": 256,
        "drain_grace": 2.0,
        "rates": {
            "ingest": 100.0,
            "vad": 50.0,
            "face_activity": 30.0,
            "pose_features": 30.0,
            "recorder": 20.0,
        },
    },
    "wire": {
        "ingest_host": "127.0.0.1",
        "ingest_port": 9870,
        "broadcast_period": 0.1,
        "broadcast_targets": [{"host": "127.0.0.1", "port": 9871, "format": "json"}],
    },
    "control": {"host": "127.0.0.1", "port": 9872},
    "session": {"record_path": None},
}


class ConfigError(ValueError):
    """Carries every validation failure, each naming its key path."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _merge(base: Dict[str, Any], override: Dict[str, Any], path: str, warnings: List[str]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            # forward compatibility: unknown keys warn but are kept
            warnings.append(f"unknown key {here}")
            merged[key] = copy.deepcopy(value)
        elif isinstance(base[key], dict) and isinstance(value, dict) and key != "modalities" and key != "rates":
            merged[key] = _merge(base[key], value, here, warnings)
        elif key in ("modalities", "rates"):
            # keyed maps: entries merge against the default entry shape
            if not isinstance(value, dict):
                merged[key] = copy.deepcopy(value)
                continue
            out = copy.deepcopy(base[key])
            template = (
                copy.deepcopy(base[key].get("face"))
                if key == "modalities" and isinstance(base[key].get("face"), dict)
                else None
            )
            for sub, subval in value.items():
                if key == "modalities" and isinstance(subval, dict):
                    entry_base = base[key].get(sub) or {
                        "enabled": True,
                        "threshold": 0.0,
                        "activity_source": None,
                        "weight_scale": 1.0,
                        "decay_scale": 1.0,
                        "event_weight": 1.0,
                        "event_decay_speed": 0.5,
                    }
                    out[sub] = _merge(entry_base, subval, f"{here}.{sub}", warnings)
                else:
                    out[sub] = copy.deepcopy(subval)
            merged[key] = out
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def canonical_json(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(doc: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def _num(doc, path, errors, minimum=None, exclusive=True, maximum=None) -> Optional[float]:
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            errors.append(f"{path}: missing")
            return None
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(float(node)):
        errors.append(f"{path}: must be a finite number")
        return None
    value = float(node)
    if minimum is not None:
        if exclusive and not value > minimum:
            errors.append(f"{path}: must be > {minimum}")
            return None
        if not exclusive and not value >= minimum:
            errors.append(f"{path}: must be >= {minimum}")
            return None
    if maximum is not None and value > maximum:
        errors.append(f"{path}: must be <= {maximum}")
        return None
    return value


@dataclass
class WireConfig:
    ingest_host: str
    ingest_port: int
    broadcast_period: float
    broadcast_targets: List[Dict[str, Any]]


@dataclass
class PipelineConfig:
    queue_capacity: int
    drain_grace: float
    rates: Dict[str, float]


@dataclass
class DaemonConfig:
    """Validated, fully defaulted daemon configuration."""

    doc: Dict[str, Any]
    config_hash: str
    fusion: FusionConfig
    label_table: LabelPrototypeTable
    dominance_rule: DominanceRule
    stale_after: float
    policies: Dict[str, ModalityPolicy]
    vad: VadConfig
    face_yaw_max: float
    pose_rule: PoseDominanceConfig
    pose_window_seconds: float
    pipeline: PipelineConfig
    wire: WireConfig
    control_host: str
    control_port: int
    record_path: Optional[str]
    warnings: List[str] = field(default_factory=list)

    def fresh_policies(self) -> Dict[str, ModalityPolicy]:
        """Mutable copies for a live daemon or replay run."""
        return {name: copy.deepcopy(policy) for name, policy in self.policies.items()}


def config_from_dict(user: Optional[Dict[str, Any]] = None) -> DaemonConfig:
    warnings: List[str] = []
    doc = _merge(DEFAULT_CONFIG, user or {}, "", warnings)
    errors: List[str] = []

    tick = _num(doc, "fusion.tick_interval", errors, minimum=0.0)
    speed = _num(doc, "fusion.approach_speed", errors, minimum=0.0)
    max_events = _num(doc, "fusion.max_active_events", errors, minimum=1.0, exclusive=False)
    neutral = doc["fusion"].get("neutral_point")
    neutral_vec = None
    if not (isinstance(neutral, (list, tuple)) and len(neutral) == 3):
        errors.append("fusion.neutral_point: must be a [p, a, d] triple")
    else:
        try:
            neutral_vec = PadVector(*neutral)
        except ValueError as exc:
            errors.append(f"fusion.neutral_point: {exc}")

    label_table = None
    labels = doc["emotion"].get("labels")
    if not isinstance(labels, list) or not labels:
        errors.append("emotion.labels: must be a non-empty list of [label, [p, a, d]]")
    else:
        try:
            label_table = LabelPrototypeTable.from_pairs(
                (entry[0], entry[1]) for entry in labels
            )
        except (EmotionConfigError, ValueError, TypeError, IndexError) as exc:
            errors.append(f"emotion.labels: {exc}")

    rule = None
    try:
        rule = DominanceRule(
            offset=float(doc["emotion"]["dominance_rule"]["offset"]),
            pleasure_coef=float(doc["emotion"]["dominance_rule"]["pleasure_coef"]),
            arousal_coef=float(doc["emotion"]["dominance_rule"]["arousal_coef"]),
        )
    except (EmotionConfigError, ValueError, TypeError, KeyError) as exc:
        errors.append(f"emotion.dominance_rule: {exc}")

    stale_after = _num(doc, "gating.stale_after", errors, minimum=0.0)

    policies: Dict[str, ModalityPolicy] = {}
    modalities = doc["gating"].get("modalities")
    if not isinstance(modalities, dict):
        errors.append("gating.modalities: must be a mapping")
    else:
        for name, entry in modalities.items():
            if not isinstance(entry, dict):
                errors.append(f"gating.modalities.{name}: must be a mapping")
                continue
            base = f"gating.modalities.{name}"
            threshold = _num(doc, f"{base}.threshold", errors, minimum=0.0, exclusive=False, maximum=1.0)
            weight_scale = _num(doc, f"{base}.weight_scale", errors, minimum=0.0, exclusive=False)
            decay_scale = _num(doc, f"{base}.decay_scale", errors, minimum=0.0)
            event_weight = _num(doc, f"{base}.event_weight", errors, minimum=0.0, exclusive=False)
            event_decay = _num(doc, f"{base}.event_decay_speed", errors, minimum=0.0)
            source = entry.get("activity_source")
            if source is not None and not isinstance(source, str):
                errors.append(f"{base}.activity_source: must be a modality name or null")
                source = None
            if None in (threshold, weight_scale, decay_scale, event_weight, event_decay):
                continue
            policies[name] = ModalityPolicy(
                modality=name,
                enabled=bool(entry.get("enabled", True)),
                threshold=threshold,
                activity_source=source,
                weight_scale=weight_scale,
                decay_scale=decay_scale,
                event_weight=event_weight,
                event_decay_speed=event_decay,
            )

    vad_cfg = None
    try:
        vad_cfg = VadConfig(
            window_ms=float(doc["analyzers"]["vad"]["window_ms"]),
            rms_floor=float(doc["analyzers"]["vad"]["rms_floor"]),
            rms_ceil=float(doc["analyzers"]["vad"]["rms_ceil"]),
            hangover_ms=float(doc["analyzers"]["vad"]["hangover_ms"]),
        )
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"analyzers.vad: {exc}")

    yaw_max = _num(doc, "analyzers.face.yaw_max", errors, minimum=0.0)

    pose_rule = None
    try:
        pose_rule = PoseDominanceConfig(
            tilt_max=float(doc["analyzers"]["pose"]["tilt_max"]),
            act_ref=float(doc["analyzers"]["pose"]["act_ref"]),
            k_tilt=float(doc["analyzers"]["pose"]["k_tilt"]),
            k_act=float(doc["analyzers"]["pose"]["k_act"]),
        )
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"analyzers.pose: {exc}")
    pose_window = _num(doc, "analyzers.pose.window_seconds", errors, minimum=0.0)

    capacity = _num(doc, "pipeline.queue_capacity", errors, minimum=1.0, exclusive=False)
    grace = _num(doc, "pipeline.drain_grace", errors, minimum=0.0, exclusive=False)
    rates: Dict[str, float] = {}
    rates_doc = doc["pipeline"].get("rates")
    if not isinstance(rates_doc, dict):
        errors.append("pipeline.rates: must be a mapping")
    else:
        for name in rates_doc:
            value = _num(doc, f"pipeline.rates.{name}", errors, minimum=0.0)
            if value is not None:
                rates[name] = value

    period = _num(doc, "wire.broadcast_period", errors, minimum=0.0)
    port = _num(doc, "wire.ingest_port", errors, minimum=0.0, exclusive=False, maximum=65535.0)
    targets = doc["wire"].get("broadcast_targets")
    checked_targets: List[Dict[str, Any]] = []
    if not isinstance(targets, list):
        errors.append("wire.broadcast_targets: must be a list")
    else:
        for i, target in enumerate(targets):
            base = f"wire.broadcast_targets[{i}]"
            if not isinstance(target, dict) or "host" not in target or "port" not in target:
                errors.append(f"{base}: must carry host and port")
                continue
            fmt = target.get("format", "json")
            if fmt not in ("json", "xml"):
                errors.append(f"{base}.format: must be json or xml")
                continue
            checked_targets.append(
                {"host": str(target["host"]), "port": int(target["port"]), "format": fmt}
            )

    control_port = _num(doc, "control.port", errors, minimum=0.0, exclusive=False, maximum=65535.0)

    record_path = doc["session"].get("record_path")
    if record_path is not None and not isinstance(record_path, str):
        errors.append("session.record_path: must be a path or null")

    if errors:
        raise ConfigError(errors)

    fusion_cfg = FusionConfig(
        tick_interval=tick,
        approach_speed=speed,
        neutral_point=neutral_vec,
        max_active_events=int(max_events),
    )
    return DaemonConfig(
        doc=doc,
        config_hash=config_hash(doc),
        fusion=fusion_cfg,
        label_table=label_table,
        dominance_rule=rule,
        stale_after=stale_after,
        policies=policies,
        vad=vad_cfg,
        face_yaw_max=yaw_max,
        pose_rule=pose_rule,
        pose_window_seconds=pose_window,
        pipeline=PipelineConfig(
            queue_capacity=int(capacity), drain_grace=grace, rates=rates
        ),
        wire=WireConfig(
            ingest_host=str(doc["wire"]["ingest_host"]),
            ingest_port=int(port),
            broadcast_period=period,
            broadcast_targets=checked_targets,
        ),
        control_host=str(doc["control"]["host"]),
        control_port=int(control_port),
        record_path=record_path,
        warnings=warnings,
    )


def load_config(path: Optional[str]) -> DaemonConfig:
    """Load and validate a config file; None loads pure defaults."""
    if path is None:
        return config_from_dict({})
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid json: {exc}"]) from None
    if not isinstance(user, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return config_from_dict(user)
