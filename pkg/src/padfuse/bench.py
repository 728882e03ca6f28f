"""Synthetic-load benchmarks for the performance budget: tick latency with
a full active set, and broadcast period jitter under that load."""

import random
import socket
import threading
import time
from typing import Dict, List

from .fusion import AffectEvent, FusionConfig, FusionEngine
from .wire import BroadcastTarget, UdpBroadcaster, fusion_message


def _percentile(values: List[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, int(round(q * (len(ordered) - 1))))
    return ordered[idx]


def _loaded_engine(events: int, seed: int = 7) -> FusionEngine:
    rng = random.Random(seed)
    engine = FusionEngine(FusionConfig(max_active_events=max(events, 1)))
    for _ in range(events):
        dims = rng.sample(["p", "a", "d"], rng.randint(1, 3))
        scores = {d: rng.uniform(-1.0, 1.0) for d in dims}
        if all(v == 0.0 for v in scores.values()):
            scores[dims[0]] = 0.5
        engine.register(
            AffectEvent(
                modality="bench",
                scores=scores,
                weight=rng.uniform(0.1, 2.0),
                decay_speed=1e-6,  # effectively immortal for the run
            ),
            now=0.0,
        )
    return engine


def bench_ticks(events: int = 1000, ticks: int = 1000, tick_interval: float = 0.01) -> Dict[str, float]:
    """Tick an engine holding `events` active events `ticks` times on a
    simulated clock; returns latency stats in milliseconds."""
    engine = _loaded_engine(events)
    latencies: List[float] = []
    now = 0.0
    for _ in range(ticks):
        now += tick_interval
        start = time.perf_counter()
        result = engine.tick(now)
        latencies.append((time.perf_counter() - start) * 1000.0)
    return {
        "events": events,
        "ticks": ticks,
        "active_at_end": result.active_event_count,
        "median_ms": _percentile(latencies, 0.5),
        "p95_ms": _percentile(latencies, 0.95),
        "p99_ms": _percentile(latencies, 0.99),
        "max_ms": max(latencies),
    }


def bench_broadcast_jitter(
    seconds: float = 5.0,
    period: float = 0.1,
    events: int = 1000,
    tick_hz: float = 100.0,
) -> Dict[str, float]:
    """Broadcast at `period` while the engine ticks at tick_hz on the wall
    clock; returns period jitter stats in milliseconds."""
    engine = _loaded_engine(events)
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    sink.setblocking(False)
    broadcaster = UdpBroadcaster([BroadcastTarget("127.0.0.1", sink.getsockname()[1], "json")])

    stop = threading.Event()

    def _ticker():
        t0 = time.monotonic()
        interval = 1.0 / tick_hz
        due = t0
        while not stop.is_set():
            now = time.monotonic()
            if now >= due:
                engine.tick(now - t0)
                due += interval
                if due < time.monotonic():
                    due = time.monotonic() + interval
            time.sleep(max(0.0, min(0.002, due - time.monotonic())))

    ticker = threading.Thread(target=_ticker, daemon=True)
    ticker.start()
    send_times: List[float] = []
    deadline = time.monotonic() + seconds
    due = time.monotonic()
    try:
        while time.monotonic() < deadline:
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            broadcaster.send(fusion_message(engine.latest))
            send_times.append(time.monotonic())
            due += period
    finally:
        stop.set()
        ticker.join(timeout=1.0)
        broadcaster.close()
        sink.close()
    jitter = [
        abs((later - earlier) - period) * 1000.0
        for earlier, later in zip(send_times, send_times[1:])
    ]
    return {
        "sends": len(send_times),
        "period_ms": period * 1000.0,
        "jitter_median_ms": _percentile(jitter, 0.5),
        "jitter_p99_ms": _percentile(jitter, 0.99),
        "jitter_max_ms": max(jitter) if jitter else 0.0,
    }
