import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dacad.core import TimeSeries, WindowLabel, make_windows
from dacad.sampling import SamplingError, build_source_triplets, build_target_triplets, split_source


def windows(n=60, ws=16, labels=None, seed=0):
    rng = np.random.default_rng(seed)
    return make_windows(TimeSeries("e", rng.standard_normal((n + ws - 1, 2)), labels), ws)


@pytest.fixture
def source_split():
    labels = np.zeros(75, dtype=int)
    labels[40:42] = 1
    return split_source(windows(labels=labels))


class TestSourceTriplets:
    def test_invariants(self, source_split):
        s_norm, s_anom = source_split
        for t in build_source_triplets(s_norm, s_anom, 64, 0.5, seed=3):
            assert t.domain == "source"
            assert t.anchor.label == WindowLabel.NORMAL and t.positive.label == WindowLabel.NORMAL
            assert t.positive is not t.anchor
            assert t.negative.label == WindowLabel.ANOMALOUS

    def test_no_real_anomalies_all_injected(self, source_split):
        s_norm, _ = source_split
        assert all(t.negative.injected for t in build_source_triplets(s_norm, [], 50, 0.5))

    def test_p_one_all_real(self, source_split):
        s_norm, s_anom = source_split
        assert not any(t.negative.injected for t in build_source_triplets(s_norm, s_anom, 50, 1.0))

    def test_injected_fraction(self, source_split):
        s_norm, s_anom = source_split
        trips = build_source_triplets(s_norm, s_anom, 10000, 0.5, seed=1)
        frac = np.mean([t.negative.injected for t in trips])
        assert abs(frac - 0.5) <= 0.02

    def test_injected_negative_is_anchor_copy(self, source_split):
        s_norm, s_anom = source_split
        for t in build_source_triplets(s_norm, s_anom, 40, 0.0):
            assert t.negative.start == t.anchor.start

    def test_too_few_normals(self):
        w = windows(n=5)
        with pytest.raises(SamplingError, match="cannot form positive pair"):
            build_source_triplets(w[:1], [], 4)

    def test_no_injection_needs_real(self, source_split):
        with pytest.raises(SamplingError):
            build_source_triplets(source_split[0], [], 4, injection=False)

    def test_deterministic(self, source_split):
        s_norm, s_anom = source_split
        a = build_source_triplets(s_norm, s_anom, 30, 0.5, seed=9)
        b = build_source_triplets(s_norm, s_anom, 30, 0.5, seed=9)
        key = lambda ts: [(t.anchor.start, t.positive.start, t.negative.start, t.negative.values.tobytes()) for t in ts]  # noqa: E731
        assert key(a) == key(b)

    def test_unknown_labels_rejected(self):
        with pytest.raises(SamplingError):
            split_source(windows())


class TestTargetTriplets:
    def test_k1_adjacent(self):
        for t in build_target_triplets(windows(), 1, 100, seed=0):
            assert abs(t.positive.start - t.anchor.start) == 1

    def test_boundary_clipping(self):
        w = windows()
        seen = set()
        for seed in range(400):
            for t in build_target_triplets(w, 5, 20, seed=seed):
                if t.anchor.start == 0:
                    seen.add(t.positive.start)
        assert seen and seen <= {1, 2, 3, 4, 5}

    def test_negatives_injected(self):
        for t in build_target_triplets(windows(), 5, 64, seed=2):
            assert t.negative.injected and t.domain == "target"
            assert t.negative.start == t.anchor.start

    def test_far_negatives(self):
        w = windows(n=200)
        for t in build_target_triplets(w, 5, 64, seed=2, far_negative_gap=50):
            assert not t.negative.injected
            assert abs(t.negative.start - t.anchor.start) >= 50

    def test_no_neighbour(self):
        w = windows(n=40)[::10]
        with pytest.raises(SamplingError):
            build_target_triplets(w, 5, 4)

    def test_sparse_anchors_resampled(self):
        w = windows(n=40)
        sub = [w[0], w[20], w[22]]
        for t in build_target_triplets(sub, 5, 30, seed=1):
            assert t.anchor.start in (20, 22)

    def test_unordered_rejected(self):
        with pytest.raises(SamplingError):
            build_target_triplets(windows()[::-1], 5, 4)

    @settings(max_examples=40, deadline=None)
    @given(k=st.integers(1, 10), seed=st.integers(0, 2**32), stride=st.integers(1, 4))
    def test_proximity_and_determinism(self, k, seed, stride):
        w = windows(n=80)[::stride]
        if not any(0 < abs(a.start - b.start) <= k for a in w for b in w):
            return
        a = build_target_triplets(w, k, 16, seed=seed)
        b = build_target_triplets(w, k, 16, seed=seed)
        for x, y in zip(a, b):
            assert 0 < abs(x.positive.start - x.anchor.start) <= k
            assert (x.anchor.start, x.positive.start) == (y.anchor.start, y.positive.start)
            assert x.negative.values.tobytes() == y.negative.values.tobytes()
