import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoadoa.metrics import (
    CSV_HEADER,
    DEFAULT_SNR_EDGES,
    BoxStats,
    EvalRecord,
    ZeroMeanWarning,
    accuracy_curve,
    aggregate_prediction,
    bin_records,
    box_stats,
    records_csv,
    snr_binned_stats,
    write_evaluation,
)
from hoadoa.sh import Direction


def sorted_quantile(values, q):
    """Linear interpolation between order statistics at rank q (n - 1)."""
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def oracle_box(values):
    q1, med, q3 = (sorted_quantile(values, q) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    inside = [v for v in values if q1 - 1.5 * iqr <= v <= q3 + 1.5 * iqr]
    return q1, med, q3, min(min(inside), q1), max(max(inside), q3)


def record(i, err_dir, snr):
    return EvalRecord.create(f"s{i}", err_dir, Direction(0.0, 0.0), snr)


class TestBoxStats:
    def test_constant(self):
        b = box_stats([5, 5, 5, 5])
        assert (b.q1, b.median, b.q3, b.whisker_low, b.whisker_high) == (5, 5, 5, 5, 5)

    def test_one_to_five(self):
        assert box_stats([1, 2, 3, 4, 5]) == BoxStats(2, 3, 4, 1, 5, 5)

    def test_outliers_excluded_from_whiskers(self):
        b = box_stats([1, 2, 3, 4, 5, 100])
        assert b.whisker_high == 5

    def test_whiskers_never_inside_box(self):
        b = box_stats([0, 100, 100, 100])
        assert b.whisker_low <= b.q1 <= b.median <= b.q3 <= b.whisker_high

    def test_matches_sort_oracle(self, rng):
        for dist in (rng.exponential(5, 10_000), rng.uniform(0, 180, 10_000), rng.standard_cauchy(10_000) ** 2):
            b = box_stats(dist)
            got = (b.q1, b.median, b.q3, b.whisker_low, b.whisker_high)
            assert np.allclose(got, oracle_box(dist.tolist()), rtol=0, atol=1e-12)

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 180), min_size=1, max_size=40))
    def test_ordering(self, values):
        b = box_stats(values)
        assert b.whisker_low <= b.q1 <= b.median <= b.q3 <= b.whisker_high
        assert b.count == len(values)

    def test_empty(self):
        with pytest.raises(ValueError):
            box_stats([])


class TestAccuracy:
    def test_examples(self):
        assert accuracy_curve([0, 0, 0], [0.5]).tolist() == [1.0]
        assert accuracy_curve([0, 1, 2], [0.0]).tolist() == [0.0]
        assert accuracy_curve([0, 90, 180], [180.1]).tolist() == [1.0]
        assert accuracy_curve([1, 2, 3, 4], [2, 2.5]).tolist() == [0.25, 0.5]

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 180), min_size=1, max_size=50))
    def test_monotone_and_bounded(self, errors):
        acc = accuracy_curve(errors, np.linspace(0, 181, 200))
        assert np.all(np.diff(acc) >= 0) and acc[0] == 0.0 and acc[-1] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy_curve([], [1.0])


class TestSnrBinning:
    def test_uniform_fills_five_bins(self, rng):
        recs = [record(i, Direction(0.0, 0.1), s) for i, s in enumerate(rng.uniform(0, 20, 500))]
        assert len(snr_binned_stats(recs, DEFAULT_SNR_EDGES)) == 5

    def test_single_record(self):
        r = record(0, Direction(0.2, 0.0), 7.0)
        stats = snr_binned_stats([r], DEFAULT_SNR_EDGES)
        assert list(stats) == [(4.0, 8.0)]
        b = stats[(4.0, 8.0)]
        assert b.q1 == b.median == b.q3 == b.whisker_low == b.whisker_high == r.angular_error

    def test_partition(self, rng):
        recs = [record(i, Direction(0.0, 0.0), s) for i, s in enumerate(rng.uniform(0, 20, 300))]
        recs.append(record(999, Direction(0.0, 0.0), 20.0))
        members = [r for _, _, m in bin_records(recs, DEFAULT_SNR_EDGES) for r in m]
        assert sorted(r.scene_id for r in members) == sorted(r.scene_id for r in recs)

    def test_edges_half_open(self):
        recs = [record(0, Direction(0, 0), 4.0)]
        assert list(snr_binned_stats(recs, [0, 4, 8])) == [(4.0, 8.0)]

    @pytest.mark.parametrize("edges", [[0], [0, 0, 1], [5, 4]])
    def test_invalid_edges(self, edges):
        with pytest.raises(ValueError):
            snr_binned_stats([], edges)


class TestAggregate:
    def test_constant_frames(self):
        u = Direction(0.3, 1.1)
        d = aggregate_prediction(np.tile(u.to_vector(), (50, 1)))
        assert np.allclose(d.to_vector(), u.to_vector(), atol=1e-12)

    def test_cancelling_frames_warn(self):
        u = Direction(0.3, 1.1).to_vector()
        with pytest.warns(ZeroMeanWarning):
            d = aggregate_prediction(np.vstack([np.tile(u, (25, 1)), np.tile(-u, (25, 1))]))
        assert d == Direction(math.pi / 2, 0.0)

    def test_matches_oracle(self, rng):
        v = rng.standard_normal((50, 3))
        m = v.mean(axis=0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            d = aggregate_prediction(v)
        assert np.allclose(d.to_vector(), m / np.linalg.norm(m), atol=1e-12)

    def test_shape(self):
        with pytest.raises(ValueError):
            aggregate_prediction(np.zeros((0, 3)))


def test_record_error_in_degrees():
    r = EvalRecord.create("a", Direction(0.0, math.pi / 2), Direction(0.0, 0.0), 3.0)
    assert r.angular_error == pytest.approx(90.0)


def test_csv_format():
    r = EvalRecord.create("a", Direction(0.0, 1e-9), Direction.from_degrees(10.0, -20.0), 3.14159)
    lines = records_csv([r]).splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].split(",")[:2] == ["a", "0.0000"]
    assert lines[1].split(",")[3:5] == ["-20.0000", "10.0000"]
    assert lines[1].endswith(",3.1416")


def test_write_evaluation(tmp_path, rng):
    recs = [record(i, Direction(0.01 * i, 0.0), s) for i, s in enumerate(rng.uniform(0, 20, 40))]
    summary = write_evaluation(tmp_path, "pi", recs)
    assert json.loads((tmp_path / "pi_summary.json").read_text()) == summary
    overall = summary["estimators"]["pi"]["overall"]
    assert overall["count"] == 40
    acc = (tmp_path / "pi_accuracy.csv").read_text().splitlines()
    assert acc[0] == "tolerance_deg,accuracy" and len(acc) == 32
    assert len((tmp_path / "pi.csv").read_text().splitlines()) == 41
