import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dacad.core import (
    EPS_STD,
    ChannelStats,
    SeriesError,
    TimeSeries,
    WindowLabel,
    destandardize,
    label_window,
    make_windows,
    standardize,
    window_count,
)


def series(length, dims=1, labels=None):
    return TimeSeries("e", np.arange(length * dims, dtype=float).reshape(length, dims), labels)


class TestTimeSeries:
    def test_rejects_non_finite(self):
        with pytest.raises(SeriesError):
            TimeSeries("e", np.array([[0.0], [np.nan]]))

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(SeriesError):
            TimeSeries("e", np.zeros((3, 1)), np.zeros(2))

    def test_rejects_non_binary_labels(self):
        with pytest.raises(SeriesError):
            TimeSeries("e", np.zeros((3, 1)), np.array([0, 2, 0]))

    def test_rejects_bad_split(self):
        with pytest.raises(SeriesError):
            TimeSeries("e", np.zeros((3, 1)), split="valid")


class TestMakeWindows:
    def test_l5_ws3(self):
        ws = make_windows(series(5), 3)
        assert [w.start for w in ws] == [0, 1, 2]

    def test_single_window(self):
        assert len(make_windows(series(100), 100)) == 1

    def test_msl_train_length(self):
        assert window_count(58317, 100, 1) == 58218

    def test_too_short(self):
        with pytest.raises(SeriesError, match="series shorter than window"):
            make_windows(series(4), 5)

    def test_values_are_slices(self):
        s = series(10, 2)
        for w in make_windows(s, 4, 3):
            np.testing.assert_array_equal(w.values, s.values[w.start : w.start + 4])
            assert w.provenance == "original"

    def test_labels(self):
        labels = np.zeros(10, dtype=int)
        labels[6] = 1
        ws = make_windows(series(10, labels=labels), 3)
        got = [w.label for w in ws]
        assert got[:4] == [WindowLabel.NORMAL] * 4
        assert got[4:7] == [WindowLabel.ANOMALOUS] * 3
        assert got[7] == WindowLabel.NORMAL

    def test_unlabelled_parent(self):
        assert {w.label for w in make_windows(series(6), 3)} == {WindowLabel.UNKNOWN}

    @settings(max_examples=100, deadline=None)
    @given(length=st.integers(1, 200), ws=st.integers(1, 200), stride=st.integers(1, 20))
    def test_count_law(self, length, ws, stride):
        if ws > length:
            with pytest.raises(SeriesError):
                make_windows(series(length), ws, stride)
            return
        windows = make_windows(series(length), ws, stride)
        assert len(windows) == (length - ws) // stride + 1
        assert [w.start for w in windows] == list(range(0, len(windows) * stride, stride))
        assert all(w.start + ws <= length for w in windows)

    @settings(max_examples=50, deadline=None)
    @given(labels=st.lists(st.integers(0, 1), min_size=8, max_size=40), extra=st.integers(0, 39), ws=st.integers(1, 8))
    def test_labelling_monotone(self, labels, extra, ws):
        labels = np.array(labels)
        before = make_windows(series(len(labels), labels=labels), ws)
        bumped = labels.copy()
        bumped[extra % len(labels)] = 1
        after = make_windows(series(len(labels), labels=bumped), ws)
        for a, b in zip(before, after):
            if a.label == WindowLabel.ANOMALOUS:
                assert b.label == WindowLabel.ANOMALOUS


class TestLabelWindow:
    def test_all_zero(self):
        assert label_window(np.array([0, 0, 0])) == WindowLabel.NORMAL

    def test_any_one(self):
        assert label_window(np.array([0, 1, 0])) == WindowLabel.ANOMALOUS

    def test_unlabelled(self):
        assert label_window(None) == WindowLabel.UNKNOWN


class TestStandardize:
    def test_constant_channel_floored(self):
        s = TimeSeries("e", np.full((4, 1), 5.0))
        out = standardize(s, ChannelStats(np.array([5.0]), np.array([EPS_STD])))
        np.testing.assert_array_equal(out.values, 0.0)

    def test_arithmetic(self):
        s = TimeSeries("e", np.array([[0.0], [2.0]]))
        out = standardize(s, ChannelStats(np.array([1.0]), np.array([1.0])))
        np.testing.assert_array_equal(out.values[:, 0], [-1.0, 1.0])

    def test_identity(self):
        s = series(5, 3)
        np.testing.assert_array_equal(standardize(s, ChannelStats.identity(3)).values, s.values)

    def test_dimension_mismatch(self):
        with pytest.raises(SeriesError):
            standardize(series(5, 3), ChannelStats.identity(2))

    def test_std_below_floor_rejected(self):
        with pytest.raises(SeriesError):
            ChannelStats(np.zeros(1), np.array([1e-6]))

    def test_metadata_kept(self):
        labels = np.array([0, 1, 0])
        s = TimeSeries("x", np.ones((3, 1)), labels, "test")
        out = standardize(s, ChannelStats.identity(1))
        assert out.entity_id == "x" and out.split == "test"
        np.testing.assert_array_equal(out.labels, labels)

    @settings(max_examples=100, deadline=None)
    @given(
        values=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30),
        mean=st.floats(-1e3, 1e3),
        std=st.floats(1e-3, 1e3),
    )
    def test_round_trip(self, values, mean, std):
        s = TimeSeries("e", np.array(values)[:, None])
        stats = ChannelStats(np.array([mean]), np.array([std]))
        back = destandardize(standardize(s, stats), stats).values
        scale = np.maximum(np.abs(s.values), 1.0)
        assert np.all(np.abs(back - s.values) / scale <= 1e-9)
