"""Containers, design construction, and CSV round trips."""

import math

import numpy as np
import pytest

from ldpdsurv.data import (
    CensoringInterval,
    CsvSchema,
    DataError,
    Dataset,
    IntervalObservation,
    build_design,
    export_csv,
    feasible_point,
    ingest_csv,
)


def make_unit(unit_id="u1", onset=(1.0, 2.0), event=(2.5, 4.0), x=(1.0, 0.0)):
    return IntervalObservation(
        unit_id=unit_id,
        present=[True],
        onset=[CensoringInterval(*onset)],
        event=[CensoringInterval(*event)],
        onset_covariates=[list(x)],
        event_covariates=[list(x)],
    )


class TestCensoringInterval:
    def test_contains_is_half_open(self):
        iv = CensoringInterval(1.0, 2.0)
        assert not iv.contains(1.0)
        assert iv.contains(1.5)
        assert iv.contains(2.0)
        assert not iv.contains(2.1)

    def test_censoring_flags(self):
        assert CensoringInterval(0.0, 3.0).is_left_censored
        assert CensoringInterval(3.0, math.inf).is_right_censored
        assert not CensoringInterval(1.0, 3.0).is_left_censored

    def test_log_bounds(self):
        lo, hi = CensoringInterval(0.0, math.inf).log_bounds()
        assert lo == -math.inf and hi == math.inf
        lo, hi = CensoringInterval(1.0, math.e).log_bounds()
        assert lo == 0.0
        assert hi == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "lo,hi",
        [(2.0, 1.0), (1.0, 1.0), (-1.0, 2.0), (math.inf, math.inf), (math.nan, 1.0)],
    )
    def test_rejects_bad_bounds(self, lo, hi):
        with pytest.raises(DataError):
            CensoringInterval(lo, hi)


class TestFeasiblePoint:
    @pytest.mark.parametrize(
        "onset,event",
        [
            ((1.0, 2.0), (2.5, 4.0)),
            ((0.0, 7.0), (7.0, 8.0)),
            ((3.0, math.inf), (5.0, math.inf)),
            ((0.0, math.inf), (0.5, 1.0)),
            ((1.0, 5.0), (2.0, 3.0)),
        ],
    )
    def test_point_satisfies_both_intervals(self, onset, event):
        o_iv = CensoringInterval(*onset)
        e_iv = CensoringInterval(*event)
        t_onset, t_gap = feasible_point(o_iv, e_iv)
        assert t_gap > 0.0
        assert o_iv.contains(t_onset)
        assert e_iv.contains(t_onset + t_gap)

    def test_raises_when_region_empty(self):
        with pytest.raises(DataError):
            feasible_point(CensoringInterval(5.0, 6.0), CensoringInterval(1.0, 5.0))


class TestBuildDesign:
    def test_single_item_layout(self):
        design = build_design([[1.0, 3.0]], [[1.0, 3.0, 2.0]])
        expected = np.array(
            [
                [1.0, 3.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 3.0, 2.0],
            ]
        )
        np.testing.assert_array_equal(design, expected)

    def test_two_items_block_diagonal(self):
        design = build_design([[1.0], [2.0]], [[3.0], [4.0]])
        expected = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 2.0, 0.0, 0.0],
                [0.0, 0.0, 3.0, 0.0],
                [0.0, 0.0, 0.0, 4.0],
            ]
        )
        np.testing.assert_array_equal(design, expected)

    def test_row_count_mismatch(self):
        with pytest.raises(DataError):
            build_design([[1.0]], [[1.0], [2.0]])


class TestIntervalObservation:
    def test_absent_item_must_not_carry_intervals(self):
        with pytest.raises(DataError):
            IntervalObservation(
                unit_id="u",
                present=[False],
                onset=[CensoringInterval(1.0, 2.0)],
                event=[None],
                onset_covariates=[[1.0]],
                event_covariates=[[1.0]],
            )

    def test_present_item_needs_both_intervals(self):
        with pytest.raises(DataError):
            IntervalObservation(
                unit_id="u",
                present=[True],
                onset=[CensoringInterval(1.0, 2.0)],
                event=[None],
                onset_covariates=[[1.0]],
                event_covariates=[[1.0]],
            )

    def test_infeasible_pair_rejected(self):
        with pytest.raises(DataError):
            IntervalObservation(
                unit_id="u",
                present=[True],
                onset=[CensoringInterval(5.0, 6.0)],
                event=[CensoringInterval(1.0, 4.0)],
                onset_covariates=[[1.0]],
                event_covariates=[[1.0]],
            )

    def test_nonfinite_covariates_rejected(self):
        with pytest.raises(DataError):
            make_unit(x=(1.0, math.inf))


class TestDataset:
    def test_duplicate_unit_ids_rejected(self):
        with pytest.raises(DataError):
            Dataset(units=[make_unit("a"), make_unit("a")], n_items=1)

    def test_dimension_properties(self):
        ds = Dataset(units=[make_unit()], n_items=1)
        assert ds.n_units == 1
        assert ds.n_onset_covariates == 2
        assert ds.n_event_covariates == 2
        assert ds.coefficient_dim == 4
        assert ds.design_tensor().shape == (1, 2, 4)

    def test_interval_arrays_vacuous_for_absent(self):
        obs = IntervalObservation(
            unit_id="u",
            present=[True, False],
            onset=[CensoringInterval(1.0, 2.0), None],
            event=[CensoringInterval(2.0, 3.0), None],
            onset_covariates=[[1.0], [0.0]],
            event_covariates=[[1.0], [0.0]],
        )
        ds = Dataset(units=[obs], n_items=2)
        arrays = ds.interval_arrays()
        assert arrays["present"][0, 0] and not arrays["present"][0, 1]
        assert arrays["onset_lo"][0, 1] == 0.0
        assert arrays["onset_hi"][0, 1] == math.inf

    def test_feasible_times_inside_intervals(self):
        ds = Dataset(units=[make_unit()], n_items=1)
        pts = ds.feasible_times()
        assert pts.shape == (1, 1, 2)
        assert 1.0 < pts[0, 0, 0] <= 2.0
        assert 2.5 < pts[0, 0, 0] + pts[0, 0, 1] <= 4.0


CSV_TEXT = """unit_id,item,onset_lo,onset_hi,event_lo,event_hi,x0,x1
s1,1,0,7,7,8,1,0
s1,2,2,3,3.5,inf,1,0
s2,1,1.5,2.5,2.5,,1,1
"""


class TestCsvIngestion:
    def write(self, tmp_path, text=CSV_TEXT, name="d.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    def schema(self):
        return CsvSchema(onset_covariates=["x0", "x1"], event_covariates=["x0", "x1"])

    def test_reads_shapes_and_bounds(self, tmp_path):
        ds = ingest_csv(self.write(tmp_path), self.schema())
        assert ds.n_units == 2
        assert ds.n_items == 2
        u1, u2 = ds.units
        assert u1.onset[0].is_left_censored
        assert u1.event[1].is_right_censored
        # empty upper bound also means right censored
        assert u2.event[0].is_right_censored
        assert not u2.present[1]

    def test_round_trip_through_export(self, tmp_path):
        ds = ingest_csv(self.write(tmp_path), self.schema())
        out = tmp_path / "copy.csv"
        export_csv(ds, out)
        again = ingest_csv(out, self.schema())
        assert again.n_units == ds.n_units
        for a, b in zip(again.units, ds.units):
            assert a.unit_id == b.unit_id
            np.testing.assert_array_equal(a.present, b.present)
            for j in range(ds.n_items):
                if a.present[j]:
                    assert a.onset[j] == b.onset[j]
                    assert a.event[j] == b.event[j]
            np.testing.assert_array_equal(a.onset_covariates, b.onset_covariates)

    def test_missing_column_rejected(self, tmp_path):
        path = self.write(tmp_path, CSV_TEXT.replace(",x1", ",z1"))
        with pytest.raises(DataError, match="missing columns"):
            ingest_csv(path, self.schema())

    def test_duplicate_item_row_rejected(self, tmp_path):
        text = CSV_TEXT + "s2,1,1.5,2.5,2.5,inf,1,1\n"
        with pytest.raises(DataError, match="duplicate"):
            ingest_csv(self.write(tmp_path, text), self.schema())

    def test_infeasible_row_rejected(self, tmp_path):
        # onset interval starts exactly where the event interval ends, so no
        # positive gap fits
        text = (
            "unit_id,item,onset_lo,onset_hi,event_lo,event_hi,x0,x1\n"
            "bad,1,5,7,2,5,1,0\n"
        )
        with pytest.raises(DataError, match="no feasible"):
            ingest_csv(self.write(tmp_path, text), self.schema())

    def test_disjoint_backwards_intervals_rejected(self, tmp_path):
        text = (
            "unit_id,item,onset_lo,onset_hi,event_lo,event_hi,x0,x1\n"
            "bad,1,6,7,2,5,1,0\n"
        )
        with pytest.raises(DataError, match="ends\nbefore|ends before"):
            ingest_csv(self.write(tmp_path, text), self.schema())

    def test_unparseable_number_rejected(self, tmp_path):
        text = CSV_TEXT.replace("0,7,7,8", "zero,7,7,8")
        with pytest.raises(DataError, match="cannot parse"):
            ingest_csv(self.write(tmp_path, text), self.schema())

    def test_item_index_above_n_items_rejected(self, tmp_path):
        with pytest.raises(DataError, match="exceeds"):
            ingest_csv(self.write(tmp_path), self.schema(), n_items=1)

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(self.write(tmp_path, "unit_id,item\n"), self.schema())
