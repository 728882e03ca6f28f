"""PAD vector space, label lookup and the valence/arousal->dominance rule."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from padfuse.emotion import (
    DominanceRule,
    EmotionConfigError,
    LabelPrototypeTable,
    PadVector,
    clamp_pad,
    default_label_table,
    pad_to_label,
    va_to_dominance,
)

unit = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestClampPad:
    def test_identity(self):
        assert clamp_pad((0, 0, 0)) == PadVector(0.0, 0.0, 0.0)

    def test_clamps_out_of_range(self):
        assert clamp_pad((1.5, -2.0, 0.3)) == PadVector(1.0, -1.0, 0.3)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            clamp_pad((float("nan"), 0, 0))

    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            clamp_pad((0, float("inf"), 0))

    def test_rejects_wrong_arity(self):
        with pytest.raises(ValueError):
            clamp_pad((0, 0))

    @given(finite, finite, finite)
    def test_always_in_range(self, p, a, d):
        v = clamp_pad((p, a, d))
        for c in v.as_tuple():
            assert -1.0 <= c <= 1.0


class TestPadVector:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            PadVector(1.1, 0, 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            PadVector(float("nan"), 0, 0)

    def test_neutral_is_origin(self):
        assert PadVector().as_tuple() == (0.0, 0.0, 0.0)


class TestPadToLabel:
    def ab_table(self):
        return LabelPrototypeTable.from_pairs([("A", (1, 0, 0)), ("B", (-1, 0, 0))])

    def test_exact_prototype_match(self):
        table = default_label_table()
        for label, proto in table.entries:
            got, dist = pad_to_label(proto, table)
            assert got == label
            assert dist == 0.0

    def test_nearest_wins(self):
        # hand-computed: |0.2 - 1| = 0.8 vs |0.2 + 1| = 1.2
        label, dist = pad_to_label(PadVector(0.2, 0, 0), self.ab_table())
        assert label == "A"
        assert dist == pytest.approx(0.8, abs=1e-12)

    def test_tie_breaks_to_first_listed(self):
        # equidistant between A and B: first listed wins
        label, dist = pad_to_label(PadVector(0, 0, 0), self.ab_table())
        assert label == "A"
        assert dist == pytest.approx(1.0, abs=1e-12)

    def test_invariant_under_non_winner_permutation(self):
        base = [("A", (1, 0, 0)), ("B", (-1, 0, 0)), ("C", (0, 1, 0))]
        p = PadVector(0.9, 0, 0)
        expected = pad_to_label(p, LabelPrototypeTable.from_pairs(base))
        shuffled = [base[0], base[2], base[1]]
        assert pad_to_label(p, LabelPrototypeTable.from_pairs(shuffled)) == expected

    def test_empty_table_is_config_error(self):
        with pytest.raises(EmotionConfigError):
            LabelPrototypeTable(())

    def test_duplicate_labels_rejected(self):
        with pytest.raises(EmotionConfigError):
            LabelPrototypeTable.from_pairs([("A", (1, 0, 0)), ("A", (0, 1, 0))])

    @given(unit, unit, unit)
    def test_default_table_total(self, p, a, d):
        label, dist = pad_to_label(PadVector(p, a, d), default_label_table())
        assert label in default_label_table().labels
        assert dist >= 0.0


class TestVaToDominance:
    def test_zero_case(self):
        assert va_to_dominance(0.0, 0.0, DominanceRule(offset=0.0)) == 0.0

    def test_affine_evaluation(self):
        rule = DominanceRule(offset=0.0, pleasure_coef=0.5, arousal_coef=0.25)
        assert va_to_dominance(1.0, 1.0, rule) == pytest.approx(0.75, abs=1e-12)

    def test_sign_symmetry(self):
        rule = DominanceRule(offset=0.0, pleasure_coef=0.5, arousal_coef=0.25)
        assert va_to_dominance(-1.0, -1.0, rule) == pytest.approx(-0.75, abs=1e-12)

    def test_rejects_out_of_range_input(self):
        with pytest.raises(ValueError):
            va_to_dominance(1.5, 0.0)

    def test_rejects_non_finite_rule(self):
        with pytest.raises(EmotionConfigError):
            DominanceRule(offset=float("inf"))

    @given(unit, unit, finite, finite, finite)
    def test_output_always_in_range(self, v, a, c0, c1, c2):
        rule = DominanceRule(offset=c0, pleasure_coef=c1, arousal_coef=c2)
        assert -1.0 <= va_to_dominance(v, a, rule) <= 1.0

    @given(unit, unit, finite, finite)
    def test_odd_symmetry_without_offset(self, v, a, c1, c2):
        rule = DominanceRule(offset=0.0, pleasure_coef=c1, arousal_coef=c2)
        lhs = va_to_dominance(-v, -a, rule)
        rhs = -va_to_dominance(v, a, rule)
        # odd symmetry holds exactly until clamping saturates both sides
        assert lhs == pytest.approx(rhs, abs=1e-12)
