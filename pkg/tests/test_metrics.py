import math

import numpy as np
import pytest

from dbtmask.engine import DenseMask
from dbtmask.errors import ValidationError
from dbtmask.metrics import (
    BoxplotStats,
    DiceRecord,
    DiceScope,
    boxplot_stats,
    dice,
    patient_dice,
    slice_eval,
    stratify,
)
from dbtmask.volume import VadCategory, View


def quantile_linear(sorted_vals, q):
    """Order-statistic interpolation at rank (n-1)q, straight from the data."""
    h = (len(sorted_vals) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


class TestDice:
    def test_identical_masks(self):
        m = np.array([[True, False], [True, True]])
        assert dice(m, m) == 1.0

    def test_disjoint_masks(self):
        a = np.array([[True, False]])
        b = np.array([[False, True]])
        assert dice(a, b) == 0.0

    def test_both_empty_is_perfect(self):
        z = np.zeros((3, 3), dtype=bool)
        assert dice(z, z) == 1.0

    def test_one_empty(self):
        a = np.zeros((2, 2), dtype=bool)
        b = np.ones((2, 2), dtype=bool)
        assert dice(a, b) == 0.0

    def test_partial_overlap(self):
        a = np.array([[True, False, False]])
        b = np.array([[True, True, False]])
        assert dice(a, b) == pytest.approx(2 / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            dice(np.zeros((2, 2), dtype=bool), np.zeros((2, 3), dtype=bool))

    def test_dtype_checked(self):
        with pytest.raises(ValidationError):
            dice(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 2), dtype=bool))

    def test_symmetry(self):
        rng = np.random.default_rng(61)
        for _ in range(20):
            a = rng.uniform(size=(6, 6)) < 0.4
            b = rng.uniform(size=(6, 6)) < 0.4
            assert dice(a, b) == dice(b, a)


class TestPatientDice:
    def test_four_view_fixture(self):
        assert abs(patient_dice([0.14, 0.46, 0.76, 0.73]) - 0.5225) <= 1e-12

    def test_single_value(self):
        assert patient_dice([0.9]) == 0.9

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            patient_dice([])


class TestDiceRecord:
    def test_range_checked(self):
        with pytest.raises(ValidationError):
            DiceRecord("p", View.RCC, DiceScope.VOLUME, 1.2)

    def test_coercion(self):
        r = DiceRecord("p", "RCC", "VOLUME", 0.5)
        assert r.view is View.RCC and r.scope is DiceScope.VOLUME


class TestBoxplotStats:
    def test_quartiles_of_one_to_four(self):
        st = boxplot_stats([1, 2, 3, 4])
        assert (st.q1, st.median, st.q3) == (1.75, 2.5, 3.25)
        assert st.n == 4
        assert st.mean == 2.5

    def test_single_point(self):
        st = boxplot_stats([0.7])
        assert st.q1 == st.median == st.q3 == 0.7
        assert st.whisker_low == st.whisker_high == 0.7
        assert st.outliers == ()
        assert math.isnan(st.sd)

    def test_far_point_is_outlier(self):
        st = boxplot_stats(list(range(10)) + [100])
        assert st.outliers == (100.0,)
        assert st.whisker_high == 9.0

    def test_whisker_clamped_to_quartile(self):
        # No data point lies between the low fence and q1, so the whisker
        # stops at q1 instead of running past it.
        st = boxplot_stats([0, 100, 101, 102])
        assert st.q1 == 75.0
        assert st.whisker_low == 75.0
        assert st.outliers == (0.0,)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            boxplot_stats([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            boxplot_stats([0.1, float("nan")])

    def test_matches_sorted_order_oracle(self):
        rng = np.random.default_rng(67)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            data = rng.uniform(-5, 5, size=n).tolist()
            st = boxplot_stats(data)
            s = sorted(data)
            for got, q in ((st.q1, 0.25), (st.median, 0.5), (st.q3, 0.75)):
                assert abs(got - quantile_linear(s, q)) <= 1e-12
            # whisker/outlier partition, recomputed from first principles
            lo_fence = st.q1 - 1.5 * (st.q3 - st.q1)
            hi_fence = st.q3 + 1.5 * (st.q3 - st.q1)
            in_lo = [v for v in s if v >= lo_fence]
            in_hi = [v for v in s if v <= hi_fence]
            assert st.whisker_low == (min(min(in_lo), st.q1) if in_lo else st.q1)
            assert st.whisker_high == (max(max(in_hi), st.q3) if in_hi else st.q3)
            expected_out = tuple(
                v for v in s if v < st.whisker_low or v > st.whisker_high
            )
            assert st.outliers == expected_out
            assert st.mean == pytest.approx(sum(data) / n, abs=1e-12)
            if n > 1:
                var = sum((v - sum(data) / n) ** 2 for v in data) / (n - 1)
                assert st.sd == pytest.approx(math.sqrt(var), rel=1e-9)

    def test_stats_invariants_enforced(self):
        with pytest.raises(ValidationError):
            BoxplotStats(
                q1=2.0, median=1.0, q3=3.0, whisker_low=0.0, whisker_high=4.0,
                outliers=(), mean=2.0, sd=1.0, n=3,
            )


class TestStratify:
    def records(self):
        return [
            DiceRecord("p1", View.RCC, DiceScope.VOLUME, 0.8),
            DiceRecord("p1", View.LCC, DiceScope.VOLUME, 0.9),
            DiceRecord("p2", View.RCC, DiceScope.VOLUME, 0.6),
            DiceRecord("p3", View.RMLO, DiceScope.VOLUME, 0.7),
        ]

    def test_groups_by_category(self):
        vad = {
            "p1": VadCategory("0-25"),
            "p2": VadCategory("0-25"),
            "p3": VadCategory("51-75"),
        }
        strat = stratify(self.records(), vad)
        assert set(strat.per_category) == {VadCategory("0-25"), VadCategory("51-75")}
        low = strat.per_category[VadCategory("0-25")]
        assert low.n == 2  # p1 averaged into one value first
        assert low.median == pytest.approx((0.85 + 0.6) / 2)
        assert strat.overall.n == 3

    def test_missing_category_names_patient(self):
        vad = {"p1": VadCategory("0-25"), "p3": VadCategory("51-75")}
        with pytest.raises(ValidationError, match="p2"):
            stratify(self.records(), vad)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            stratify([], {})


class TestSliceEval:
    def make_mask(self, n_slices=10):
        slices = np.zeros((n_slices, 4, 4), dtype=bool)
        slices[:, 1, 1] = True
        return DenseMask(
            slices=slices,
            slice_thresholds=(0.5,) * n_slices,
            slice_areas_px=(1,) * n_slices,
        )

    def test_scope_mapping(self):
        mask = self.make_mask()
        manual = np.zeros((4, 4), dtype=bool)
        manual[1, 1] = True
        rec = slice_eval(manual, mask, 0.2, "p9", View.LMLO)
        assert rec.scope is DiceScope.SLICE_P20
        assert rec.dice == 1.0
        rec = slice_eval(manual, mask, 0.8, "p9", View.LMLO)
        assert rec.scope is DiceScope.SLICE_P80

    def test_compares_correct_slice(self):
        slices = np.zeros((10, 4, 4), dtype=bool)
        slices[2, 1, 1] = True  # p=0.2 of 10 slices -> index 2
        mask = DenseMask(
            slices=slices,
            slice_thresholds=(0.5,) * 10,
            slice_areas_px=tuple(int(slices[s].sum()) for s in range(10)),
        )
        manual = np.zeros((4, 4), dtype=bool)
        manual[1, 1] = True
        assert slice_eval(manual, mask, 0.2, "p", View.RCC).dice == 1.0
        assert slice_eval(manual, mask, 0.8, "p", View.RCC).dice == 0.0

    def test_depth_restricted(self):
        with pytest.raises(ValidationError):
            slice_eval(np.zeros((4, 4), dtype=bool), self.make_mask(), 0.5, "p", View.RCC)

    def test_shape_checked(self):
        with pytest.raises(ValidationError):
            slice_eval(np.zeros((5, 5), dtype=bool), self.make_mask(), 0.2, "p", View.RCC)
