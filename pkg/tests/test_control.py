"""Live daemon + control API: status, toggles, patches, stream, UDP edge."""

import json
import socket
import time
import urllib.request

import pytest

from padfuse.config import config_from_dict
from padfuse.control import ControlServer
from padfuse.daemon import AffectDaemon
from padfuse.wire import ActivityMessage, EventMessage, decode, encode


def make_daemon(tmp_path=None, record=False, **overrides):
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    sink.settimeout(2.0)
    doc = {
        "wire": {
            "ingest_port": 0,
            "broadcast_period": 0.05,
            "broadcast_targets": [
                {"host": "127.0.0.1", "port": sink.getsockname()[1], "format": "json"}
            ],
        },
        "control": {"port": 0},
        "pipeline": {"rates": {"ingest": 200.0}},
    }
    if record:
        doc["session"] = {"record_path": str(tmp_path / "session.jsonl")}
    doc.update(overrides)
    config = config_from_dict(doc)
    daemon = AffectDaemon(config)
    return daemon, sink


@pytest.fixture
def live():
    daemon, sink = make_daemon()
    daemon.start()
    server = ControlServer(daemon)
    server.start()
    base = f"http://127.0.0.1:{server.address[1]}"
    try:
        yield daemon, sink, base
    finally:
        server.stop()
        daemon.stop()
        sink.close()


def http(method, url, body=None):
    req = urllib.request.Request(url, method=method)
    data = None
    if body is not None:
        data = json.dumps(body).encode()
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, data=data, timeout=3.0) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


class TestStatus:
    def test_snapshot_shape(self, live):
        _, _, base = live
        status_code, status = http("GET", f"{base}/status")
        assert status_code == 200
        names = {c["name"] for c in status["components"]}
        assert {"ingest", "vad", "face_activity", "pose_features", "fusion", "broadcast"} <= names
        assert set(status["modalities"]) >= {"face", "voice", "pose", "sentiment"}
        assert status["fusion"]["type"] == "fusion"
        assert status["running"] is True

    def test_broadcast_emits_without_traffic(self, live):
        _, sink, _ = live
        data, _ = sink.recvfrom(65536)
        msg = decode(data, "json")
        # neutral state: nothing has been ingested
        assert msg.active == 0
        assert (msg.p, msg.a, msg.d) == (0.0, 0.0, 0.0)


class TestUdpIngest:
    def test_event_datagram_reaches_engine(self, live):
        daemon, sink, base = live
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        port = daemon.ingest.address[1]
        # pose is ungated by default: no activity needed
        payload = encode(
            EventMessage(modality="pose", scores={"d": 0.8}, weight=1.0, decay_speed=0.05, t=0.0)
        )
        out.sendto(payload, ("127.0.0.1", port))
        deadline = time.time() + 3.0
        while time.time() < deadline:
            if daemon.engine.latest.active_event_count > 0:
                break
            time.sleep(0.02)
        assert daemon.engine.latest.active_event_count == 1
        _, status = http("GET", f"{base}/status")
        assert status["wire"]["ingest"]["accepted"] == 1
        out.close()

    def test_malformed_datagram_counted_not_fatal(self, live):
        daemon, _, base = live
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        port = daemon.ingest.address[1]
        out.sendto(b"not json at all", ("127.0.0.1", port))
        out.sendto(b'{"type":"event","version":1}', ("127.0.0.1", port))
        deadline = time.time() + 3.0
        rejected = {}
        while time.time() < deadline:
            _, status = http("GET", f"{base}/status")
            rejected = status["wire"]["ingest"]["rejected"]
            if rejected["syntax"] >= 1 and rejected["schema"] >= 1:
                break
            time.sleep(0.05)
        assert rejected["syntax"] >= 1
        assert rejected["schema"] >= 1
        assert status["running"] is True
        out.close()


class TestToggles:
    def test_disable_is_read_your_writes(self, live):
        _, _, base = live
        code, ack = http("POST", f"{base}/modality/voice/disable")
        assert code == 200 and ack == {"modality": "voice", "enabled": False}
        _, status = http("GET", f"{base}/status")
        assert status["modalities"]["voice"]["enabled"] is False
        vad = next(c for c in status["components"] if c["name"] == "vad")
        assert vad["enabled"] is False
        code, _ = http("POST", f"{base}/modality/voice/enable")
        _, status = http("GET", f"{base}/status")
        assert status["modalities"]["voice"]["enabled"] is True

    def test_unknown_modality_is_404(self, live):
        _, _, base = live
        code, body = http("POST", f"{base}/modality/telepathy/disable")
        assert code == 404

    def test_disabled_modality_registers_no_events(self, live):
        daemon, _, base = live
        http("POST", f"{base}/modality/pose/disable")
        daemon.inject(
            EventMessage(modality="pose", scores={"d": 0.8}, weight=1.0, decay_speed=0.05, t=0.0)
        )
        time.sleep(0.3)
        assert daemon.engine.latest.active_event_count == 0
        assert daemon.route_counters.dropped_disabled >= 1


class TestParams:
    def test_patch_applies_and_acks_effective_values(self, live):
        _, _, base = live
        code, effective = http(
            "PATCH",
            f"{base}/params",
            {"approach_speed": 2.5, "thresholds": {"voice": 0.4}},
        )
        assert code == 200
        assert effective["approach_speed"] == 2.5
        assert effective["thresholds"]["voice"] == 0.4
        _, status = http("GET", f"{base}/status")
        assert status["approach_speed"] == 2.5

    def test_invalid_patch_rejected_atomically(self, live):
        _, _, base = live
        code, body = http(
            "PATCH",
            f"{base}/params",
            {"approach_speed": 3.0, "thresholds": {"voice": -1.0}},
        )
        assert code == 400
        assert any("thresholds.voice" in d for d in body["details"])
        _, status = http("GET", f"{base}/status")
        # nothing applied, including the valid part
        assert status["approach_speed"] == 1.0

    def test_negative_approach_speed_rejected(self, live):
        _, _, base = live
        code, body = http("PATCH", f"{base}/params", {"approach_speed": -1})
        assert code == 400
        _, status = http("GET", f"{base}/status")
        assert status["approach_speed"] == 1.0

    def test_unknown_parameter_rejected(self, live):
        _, _, base = live
        code, body = http("PATCH", f"{base}/params", {"warp_factor": 9})
        assert code == 400


class TestStream:
    def read_frames(self, base, n, timeout=5.0):
        req = urllib.request.Request(f"{base}/stream")
        frames = []
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            buffer = b""
            deadline = time.time() + timeout
            while len(frames) < n and time.time() < deadline:
                chunk = resp.read1(65536)
                if not chunk:
                    break
                buffer += chunk
                while b"\n\n" in buffer:
                    frame, buffer = buffer.split(b"\n\n", 1)
                    if frame.startswith(b"data: "):
                        frames.append(frame[len(b"data: ") :])
        return frames

    def test_stream_bodies_match_wire_broadcast(self, live):
        daemon, sink, base = live
        frames = self.read_frames(base, 5)
        assert len(frames) >= 3
        datagrams = []
        for _ in range(10):
            data, _ = sink.recvfrom(65536)
            datagrams.append(data)
        # same results must encode to identical bytes on both channels
        stream_by_t = {json.loads(f)["t"]: f for f in frames if json.loads(f)["type"] == "fusion"}
        wire_by_t = {json.loads(d)["t"]: d for d in datagrams}
        shared = set(stream_by_t) & set(wire_by_t)
        assert shared
        for t in shared:
            assert stream_by_t[t] == wire_by_t[t]

    def test_stream_carries_activity_updates(self, live):
        daemon, _, base = live
        daemon.inject(ActivityMessage(modality="face", score=0.75, t=0.0))
        frames = self.read_frames(base, 8)
        kinds = {json.loads(f)["type"] for f in frames}
        assert "fusion" in kinds


class TestRecording:
    def test_session_file_written(self, tmp_path):
        daemon, sink = make_daemon(tmp_path, record=True)
        daemon.start()
        try:
            daemon.inject(
                EventMessage(modality="pose", scores={"d": 0.5}, weight=1.0, decay_speed=0.2, t=0.0)
            )
            time.sleep(0.8)
        finally:
            daemon.stop()
            sink.close()
        from padfuse.session import read_session

        header, records = read_session(str(tmp_path / "session.jsonl"))
        assert header["config_hash"] == daemon.config.config_hash
        types = {type(r.message).__name__ for r in records}
        assert "EventMessage" in types
        assert "FusionMessage" in types
        offsets = [r.offset for r in records]
        assert offsets == sorted(offsets)


class TestGatingLive:
    def test_voice_events_gated_by_activity(self, live):
        daemon, _, base = live
        daemon.inject(ActivityMessage(modality="voice", score=0.8, t=0.0))
        time.sleep(0.2)
        daemon.inject(
            EventMessage(modality="voice", scores={"a": 0.5}, weight=1.0, decay_speed=0.05, t=0.0)
        )
        deadline = time.time() + 3.0
        while time.time() < deadline and daemon.engine.latest.active_event_count == 0:
            time.sleep(0.02)
        active = daemon.engine.active_events()
        assert len(active) == 1
        assert active[0].event.weight == pytest.approx(0.8, abs=1e-12)
