"""Fusion engine: decay law, weighted center of mass, smoothing vector.

The brute-force oracle here recomputes the fusion point from scratch with
math.fsum over raw event data; it shares no code with the engine path.
"""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from padfuse.emotion import PAD_DIMS, PadVector
from padfuse.fusion import (
    AffectEvent,
    ClockRegressionError,
    DecayedEvent,
    EventValidationError,
    FusionConfig,
    FusionEngine,
    compute_fusion_point,
    decay_event,
)


def oracle_point(raw_events, at, neutral=(0.0, 0.0, 0.0)):
    """Independent recomputation over the full event registry.

    raw_events: (scores dict, weight, decay_speed, registered_at) tuples.
    """
    out = []
    for i, dim in enumerate(PAD_DIMS):
        terms, weights = [], []
        for scores, weight, speed, reg in raw_events:
            if dim not in scores or weight <= 0.0:
                continue
            norm0 = math.sqrt(math.fsum(v * v for v in scores.values()))
            remaining = norm0 - (at - reg) * speed
            if remaining <= 0.0:
                continue
            terms.append(scores[dim] * (remaining / norm0) * weight)
            weights.append(weight)
        out.append(math.fsum(terms) / math.fsum(weights) if weights else neutral[i])
    return out


def event(scores, weight=1.0, speed=0.5, modality="test"):
    return AffectEvent(modality=modality, scores=scores, weight=weight, decay_speed=speed)


class TestDecayEvent:
    def test_direct_application(self):
        d = decay_event(DecayedEvent.fresh(event({"p": 1.0}, speed=0.5)), 1.0)
        assert d.current_norm == pytest.approx(0.5, abs=1e-12)
        assert d.decayed_scores["p"] == pytest.approx(0.5, abs=1e-12)

    def test_discard_at_exactly_zero(self):
        assert decay_event(DecayedEvent.fresh(event({"p": 1.0}, speed=0.5)), 2.0) is None

    def test_zero_dt_is_identity(self):
        fresh = DecayedEvent.fresh(event({"p": 0.7, "a": -0.1}))
        again = decay_event(fresh, 0.0)
        assert again == fresh

    def test_negative_dt_rejected(self):
        with pytest.raises(ValueError):
            decay_event(DecayedEvent.fresh(event({"p": 1.0})), -0.1)

    def test_scores_rescale_uniformly(self):
        d = decay_event(DecayedEvent.fresh(event({"p": 0.6, "a": 0.8}, speed=0.25)), 2.0)
        # norm 1.0 -> 0.5, both scores halve
        assert d.decayed_scores == pytest.approx({"p": 0.3, "a": 0.4}, abs=1e-12)

    @given(
        st.floats(0.05, 1.0),
        st.floats(0.01, 2.0),
        st.floats(0.0, 3.0),
        st.floats(0.0, 1.0),
    )
    def test_split_interval_equals_one_shot(self, norm_target, speed, dt, split_frac):
        ev = event({"p": norm_target}, speed=speed)
        fresh = DecayedEvent.fresh(ev)
        one_shot = decay_event(fresh, dt)
        first = decay_event(fresh, dt * split_frac)
        if first is None:
            assert one_shot is None or one_shot.current_norm <= first_norm_bound(fresh, dt * split_frac)
            return
        second = decay_event(first, dt - dt * split_frac)
        if one_shot is None:
            assert second is None
        else:
            assert second is not None
            assert second.current_norm == pytest.approx(one_shot.current_norm, abs=1e-9)
            assert second.decayed_scores["p"] == pytest.approx(
                one_shot.decayed_scores["p"], abs=1e-9
            )


def first_norm_bound(fresh, dt):
    return fresh.initial_norm - dt * fresh.event.decay_speed


class TestEventValidation:
    def test_negative_weight_rejected(self):
        with pytest.raises(EventValidationError):
            event({"p": 1.0}, weight=-1.0)

    def test_zero_decay_speed_rejected(self):
        with pytest.raises(EventValidationError):
            event({"p": 1.0}, speed=0.0)

    def test_empty_scores_rejected(self):
        with pytest.raises(EventValidationError):
            event({})

    def test_unknown_dimension_rejected(self):
        with pytest.raises(EventValidationError):
            event({"x": 0.5})

    def test_out_of_range_score_rejected(self):
        with pytest.raises(EventValidationError):
            event({"p": 1.5})

    def test_two_axis_norm(self):
        assert event({"p": 0.6, "a": 0.8}).norm() == pytest.approx(1.0, abs=1e-12)


class TestComputeFusionPoint:
    def decayed(self, scores, weight=1.0, speed=0.5):
        return DecayedEvent.fresh(event(scores, weight=weight, speed=speed))

    def test_empty_is_neutral(self):
        assert compute_fusion_point([]) == PadVector(0, 0, 0)

    def test_single_event_is_itself(self):
        point = compute_fusion_point([self.decayed({"p": 0.5}, weight=2.0)])
        assert point == PadVector(0.5, 0.0, 0.0)

    def test_antipodal_events_neutralize(self):
        point = compute_fusion_point(
            [self.decayed({"p": 0.8}), self.decayed({"p": -0.8})]
        )
        assert point.pleasure == 0.0

    def test_weighted_mean(self):
        # (0.6*1 + 0.9*3) / 4 = 0.825
        point = compute_fusion_point(
            [self.decayed({"p": 0.6}, weight=1.0), self.decayed({"p": 0.9}, weight=3.0)]
        )
        assert point.pleasure == pytest.approx(0.825, abs=1e-12)

    def test_zero_weight_contributes_nothing(self):
        with_zero = compute_fusion_point(
            [self.decayed({"p": 0.5}), self.decayed({"p": -1.0}, weight=0.0)]
        )
        assert with_zero == compute_fusion_point([self.decayed({"p": 0.5})])

    def test_uncovered_dimension_resolves_to_neutral(self):
        neutral = PadVector(0.0, 0.1, 0.0)
        point = compute_fusion_point([self.decayed({"p": 0.5})], neutral)
        assert point.arousal == 0.1
        assert point.dominance == 0.0


class TestEngineRegister:
    def test_single_axis_unit_norm(self):
        engine = FusionEngine()
        engine.register(event({"p": 1.0}), now=0.0)
        active = engine.active_events(0.0)
        assert len(active) == 1
        assert active[0].initial_norm == 1.0
        assert active[0].lifetime == 0.0

    def test_zero_norm_event_never_activates(self):
        engine = FusionEngine()
        engine.register(event({"p": 0.0}), now=0.0)
        assert engine.active_events(0.0) == []

    def test_ids_are_unique_and_sequential(self):
        engine = FusionEngine()
        first = engine.register(event({"p": 0.5}), now=0.0)
        second = engine.register(event({"a": 0.5}), now=0.0)
        assert (first.id, second.id) == (1, 2)

    def test_eviction_drops_smallest_current_norm(self):
        engine = FusionEngine(FusionConfig(max_active_events=2))
        engine.register(event({"p": 0.9}, speed=0.1), now=0.0)  # big, slow
        engine.register(event({"a": 0.2}, speed=1.0), now=0.0)  # small, fast
        engine.register(event({"d": 0.5}), now=0.1)
        active = engine.active_events(0.1)
        assert len(active) == 2
        dims = {tuple(e.event.scores) for e in active}
        assert ("a",) not in dims  # the weakest vector was evicted


class TestEngineTick:
    def test_straight_line_motion(self):
        engine = FusionEngine(FusionConfig(approach_speed=1.0))
        engine.register(event({"p": 1.0}, weight=1.0, speed=1e-9), now=0.0)
        result = engine.tick(0.5)
        assert result.pad.pleasure == pytest.approx(0.5, abs=1e-9)
        assert result.pad.arousal == 0.0

    def test_no_overshoot(self):
        engine = FusionEngine(FusionConfig(approach_speed=1.0))
        engine.register(event({"p": 1.0}, speed=1e-12), now=0.0)
        engine.tick(0.9)
        result = engine.tick(1.4)  # 0.5 s more at distance ~0.1: capped at target
        assert result.pad.pleasure == pytest.approx(1.0, abs=1e-9)

    def test_distance_to_fixed_point_non_increasing(self):
        engine = FusionEngine(FusionConfig(approach_speed=0.3))
        engine.register(event({"p": 1.0, "a": -0.5}, speed=1e-12), now=0.0)
        target = None
        last_distance = None
        for t in (0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0):
            result = engine.tick(t)
            target = result.fusion_point
            distance = result.pad.distance_to(target)
            if last_distance is not None:
                assert distance <= last_distance + 1e-12
            last_distance = distance

    def test_clock_regression_rejected_state_unchanged(self):
        engine = FusionEngine()
        engine.tick(1.0)
        before = engine.latest
        with pytest.raises(ClockRegressionError):
            engine.tick(0.5)
        assert engine.latest == before

    def test_neutral_convergence_after_last_event_expires(self):
        cfg = FusionConfig(approach_speed=0.2, tick_interval=0.02)
        engine = FusionEngine(cfg)
        engine.register(event({"p": 0.5}, speed=0.5), now=0.0)  # expires at 1.0 s
        t = 0.0
        while t < 1.0:
            t = round(t + cfg.tick_interval, 10)
            engine.tick(t)
        assert engine.latest.active_event_count == 0
        start = engine.latest.pad.magnitude()
        assert start > 1e-3  # the vector was pulled away from neutral
        deadline = t + start / cfg.approach_speed + 2 * cfg.tick_interval
        while t < deadline:
            t = round(t + cfg.tick_interval, 10)
            engine.tick(t)
        assert engine.latest.pad.magnitude() <= 1e-3

    def test_result_counts_active_events(self):
        engine = FusionEngine()
        engine.register(event({"p": 0.5}, speed=0.1), now=0.0)
        engine.register(event({"a": 0.5}, weight=0.0, speed=0.1), now=0.0)
        result = engine.tick(0.1)
        # zero-weight events stay active (they decay) but pull nothing
        assert result.active_event_count == 2
        assert result.fusion_point.arousal == 0.0

    def test_monotone_influence_of_single_event(self):
        engine = FusionEngine(FusionConfig(approach_speed=100.0))
        engine.register(event({"p": 0.8}, speed=0.2), now=0.0)
        magnitudes = []
        for t in (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
            result = engine.tick(t)
            magnitudes.append(abs(result.fusion_point.pleasure))
        assert magnitudes == sorted(magnitudes, reverse=True)


class TestCurrentResult:
    def test_equals_tick_at_same_time(self):
        engine = FusionEngine()
        engine.register(event({"p": 0.5, "d": -0.25}), now=0.0)
        ticked = engine.tick(0.3)
        assert engine.current_result(0.3) == ticked

    def test_pure_query_does_not_mutate(self):
        engine = FusionEngine()
        engine.register(event({"p": 0.5}), now=0.0)
        engine.tick(0.1)
        before = engine.latest
        engine.current_result(5.0)
        assert engine.latest == before
        assert engine.tick(0.2).at == 0.2

    def test_fresh_state_is_neutral(self):
        engine = FusionEngine()
        result = engine.current_result(0.0)
        assert result.pad == PadVector(0, 0, 0)
        assert result.active_event_count == 0

    def test_sees_events_registered_after_last_tick(self):
        engine = FusionEngine()
        engine.tick(0.0)
        engine.register(event({"p": 0.5}), now=0.1)
        assert engine.current_result(0.1).active_event_count == 1

    def test_earlier_than_last_tick_answers_as_of_last_tick(self):
        engine = FusionEngine()
        engine.register(event({"p": 0.5}), now=0.0)
        ticked = engine.tick(1.0)
        assert engine.current_result(0.2) == ticked


class TestOracleEquivalence:
    def test_random_states_match_brute_force(self):
        rng = random.Random(1234)
        for _ in range(100):
            engine = FusionEngine(FusionConfig(max_active_events=512))
            raw = []
            for _ in range(rng.randint(1, 40)):
                dims = rng.sample(PAD_DIMS, rng.randint(1, 3))
                scores = {d: rng.uniform(-1, 1) for d in dims}
                weight = rng.choice([0.0, rng.uniform(0.01, 3.0)])
                speed = rng.uniform(0.05, 2.0)
                reg = rng.uniform(0.0, 1.0)
                raw.append((scores, weight, speed, reg))
            for scores, weight, speed, reg in raw:
                engine.register(event(scores, weight=weight, speed=speed), now=reg)
            at = rng.uniform(1.0, 3.0)
            result = engine.tick(at)
            expected = oracle_point(raw, at)
            got = result.fusion_point.as_tuple()
            for dim_index in range(3):
                assert got[dim_index] == pytest.approx(expected[dim_index], abs=1e-9)


class TestDeterminism:
    def run_stream(self):
        engine = FusionEngine()
        results = []
        rng = random.Random(99)
        t = 0.0
        for _ in range(200):
            t = round(t + 0.02, 10)
            if rng.random() < 0.3:
                dims = rng.sample(PAD_DIMS, rng.randint(1, 3))
                engine.register(
                    event(
                        {d: rng.uniform(-1, 1) for d in dims},
                        weight=rng.uniform(0, 2),
                        speed=rng.uniform(0.1, 1.0),
                    ),
                    now=t,
                )
            results.append(engine.tick(t))
        return results

    def test_identical_streams_produce_identical_results(self):
        first = self.run_stream()
        second = self.run_stream()
        assert first == second
        assert [repr(r) for r in first] == [repr(r) for r in second]


class TestAttenuation:
    def test_antipodal_pairs_cancel_exactly(self):
        engine = FusionEngine()
        rng = random.Random(5)
        for _ in range(50):
            dims = tuple(rng.sample(PAD_DIMS, rng.randint(1, 3)))
            scores = {d: rng.uniform(-1, 1) for d in dims}
            if all(v == 0.0 for v in scores.values()):
                continue
            weight = rng.uniform(0.1, 2.0)
            speed = rng.uniform(0.1, 1.0)
            engine.register(event(scores, weight=weight, speed=speed), now=0.0)
            engine.register(
                event({d: -v for d, v in scores.items()}, weight=weight, speed=speed),
                now=0.0,
            )
        result = engine.tick(0.25)
        for component in result.fusion_point.as_tuple():
            assert abs(component) <= 1e-12


class TestConvexHull:
    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_point_within_contributing_score_hull(self, data):
        n = data.draw(st.integers(1, 12))
        engine = FusionEngine()
        raw = []
        for i in range(n):
            dims = data.draw(
                st.lists(st.sampled_from(PAD_DIMS), min_size=1, max_size=3, unique=True)
            )
            scores = {
                d: data.draw(st.floats(-1, 1, allow_nan=False)) for d in dims
            }
            weight = data.draw(st.floats(0.01, 5.0, allow_nan=False))
            raw.append((scores, weight))
            engine.register(event(scores, weight=weight, speed=0.2), now=0.0)
        at = data.draw(st.floats(0.0, 2.0, allow_nan=False))
        result = engine.tick(at)
        active = engine.active_events(at)
        for i, dim in enumerate(PAD_DIMS):
            contributing = [
                entry.decayed_scores[dim]
                for entry in active
                if dim in entry.decayed_scores and entry.event.weight > 0
            ]
            value = result.fusion_point.as_tuple()[i]
            if contributing:
                assert min(contributing) - 1e-9 <= value <= max(contributing) + 1e-9
            else:
                assert value == 0.0
