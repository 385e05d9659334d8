import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slknn.evaluation import brute_force_reference
from slknn.types import LabelOrigin, LearnerConfig, Sample, WindowEntry
from slknn.window import SlidingWindow

GT, SL = LabelOrigin.GROUND_TRUTH, LabelOrigin.SELF_LABELED
UNWEIGHTED = LearnerConfig(use_age_weight=False, use_gt_weight=False)


def entry(x, label=0, origin=GT, at=0):
    return WindowEntry(Sample(x, at), label, origin, at)


def filled(points, labels=None, origins=None, capacity=100):
    w = SlidingWindow(capacity)
    for i, p in enumerate(points):
        w.insert(entry(p, 0 if labels is None else labels[i], GT if origins is None else origins[i], i))
    return w


def test_insert_below_capacity():
    w = SlidingWindow(3)
    e1 = entry([0.0], at=0)
    w.insert(e1)
    assert w.entries == [e1]


def test_insert_evicts_oldest():
    w = SlidingWindow(3)
    es = [entry([float(i)], at=i) for i in range(4)]
    for e in es:
        w.insert(e)
    assert w.entries == es[1:]
    assert w.step_counter == 4


def test_150_inserts_keep_last_100():
    w = SlidingWindow(100)
    for i in range(1, 151):
        w.insert(entry([float(i)], at=i))
    stamps = [e.inserted_at for e in w.entries]
    assert stamps == list(range(51, 151))


@settings(max_examples=50, deadline=None)
@given(cap=st.integers(1, 20), n=st.integers(0, 60))
def test_size_never_exceeds_capacity(cap, n):
    w = SlidingWindow(cap)
    for i in range(n):
        w.insert(entry([float(i)], at=i))
        assert len(w) == min(i + 1, cap)
    stamps = [e.inserted_at for e in w.entries]
    assert stamps == sorted(stamps)


def test_insert_rejects_dimension_mismatch():
    w = filled([[0.0, 0.0]])
    with pytest.raises(ValueError, match="dimension"):
        w.insert(entry([1.0, 2.0, 3.0], at=5))


def test_insert_rejects_non_increasing_stamp():
    w = filled([[0.0]])
    with pytest.raises(ValueError):
        w.insert(entry([1.0], at=0))


def test_nearest_of_two():
    w = filled([[0.0, 0.0], [5.0, 5.0]])
    (nb,) = w.neighbors(Sample([1.0, 1.0]), 1)
    assert nb.entry.sample == Sample([0.0, 0.0], 0)
    assert nb.distance == pytest.approx(math.sqrt(2))


def test_exact_duplicate_comes_first():
    w = filled([[3.0, 3.0], [1.0, 1.0], [2.0, 2.0]])
    nbs = w.neighbors(Sample([1.0, 1.0]), 3)
    assert nbs[0].entry.inserted_at == 1 and nbs[0].distance == 0.0


def test_equal_distance_prefers_newer():
    w = filled([[1.0], [-1.0], [1.0]])
    assert [nb.entry.inserted_at for nb in w.neighbors(Sample([0.0]), 3)] == [2, 1, 0]


def test_neighbors_match_exhaustive_sort():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(100, 2))
    w = filled(pts)
    for _ in range(20):
        x = rng.normal(size=2)
        expected = sorted(range(100), key=lambda i: (np.linalg.norm(pts[i] - x), -i))[:5]
        got = [nb.entry.inserted_at for nb in w.neighbors(Sample(x), 5)]
        assert got == expected


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 30), k=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_neighbors_oracle_property(n, k, seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(-3, 4, size=(n, 2)).astype(float)  # lattice points force ties
    w = filled(pts, capacity=30)
    x = rng.integers(-3, 4, size=2).astype(float)
    expected = sorted(range(n), key=lambda i: (np.linalg.norm(pts[i] - x), -i))[: min(k, n)]
    assert [nb.entry.inserted_at for nb in w.neighbors(Sample(x), k)] == expected


def test_neighbors_of_empty_window():
    with pytest.raises(ValueError, match="empty"):
        SlidingWindow(3).neighbors(Sample([0.0]), 1)


def test_age_weight_endpoints_and_midpoint():
    cfg = LearnerConfig()
    w = filled([[0.0], [1.0], [2.0]], capacity=3)
    newest, middle, oldest = w.entries[2], w.entries[1], w.entries[0]
    assert w.age_weight(newest, cfg) == 1.0
    assert w.age_weight(oldest, cfg) == pytest.approx(0.9)
    assert w.age_weight(middle, cfg) == pytest.approx(0.95)


def test_age_weight_full_window_after_wraparound():
    cfg = LearnerConfig()
    w = filled([[float(i)] for i in range(130)], capacity=100)
    es = w.entries
    assert w.age_weight(es[-1], cfg) == 1.0
    assert w.age_weight(es[0], cfg) == pytest.approx(0.9)


def test_age_weight_single_entry_and_disabled():
    w = filled([[0.0]])
    assert w.age_weight(w.entries[0], LearnerConfig()) == 1.0
    w = filled([[0.0], [1.0]])
    assert w.age_weight(w.entries[0], UNWEIGHTED) == 1.0


def test_age_weight_of_foreign_entry():
    w = filled([[0.0]])
    with pytest.raises(KeyError):
        w.age_weight(entry([0.0], at=99), LearnerConfig())


def test_gt_weight_values():
    w = filled([[0.0], [1.0]], origins=[GT, SL])
    gt, sl = w.entries
    cfg = LearnerConfig(use_gt_weight=True)
    assert w.gt_weight(gt, cfg) == 1.0
    assert w.gt_weight(sl, cfg) == 0.5
    assert w.gt_weight(sl, cfg.replace(use_gt_weight=False)) == 1.0


def test_normalizers_uniform_weights():
    w = filled([[float(i)] for i in range(10)])
    assert w.normalizers(5, UNWEIGHTED) == (1.0, 1.0)


def test_normalizers_full_window_top5_age():
    w = filled([[float(i)] for i in range(100)])
    # top-5 ranks 99..95 of 0..99, linear on [0.9, 1]
    expected = sum(0.9 + 0.1 * r / 99 for r in range(95, 100)) / 5
    age, gt = w.normalizers(5, LearnerConfig())
    assert age == pytest.approx(expected, abs=1e-12)
    assert age == pytest.approx(0.998, abs=5e-4)
    assert gt == 1.0


def test_normalizers_fewer_entries_than_k():
    cfg = LearnerConfig(use_gt_weight=True)
    w = filled([[0.0], [1.0], [2.0]], origins=[SL, SL, GT], capacity=10)
    age, gt = w.normalizers(5, cfg)
    assert age == pytest.approx((0.9 + 0.95 + 1.0) / 3)
    assert gt == pytest.approx((0.5 + 0.5 + 1.0) / 3)


def test_predict_single_entry_is_certain():
    w = filled([[4.0, 4.0]], labels=[1])
    p = w.predict(Sample([0.0, 0.0]), LearnerConfig(use_gt_weight=True))
    assert p.label == 1 and p.certainty == 1.0


def test_predict_unweighted_vote_fraction():
    # five points at distance 1 from the origin
    pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [0.6, 0.8]]
    w = filled(pts, labels=[0, 0, 0, 1, 1])
    p = w.predict(Sample([0.0, 0.0]), UNWEIGHTED)
    assert p.label == 0 and p.certainty == pytest.approx(0.6)


def test_predict_tie_goes_to_smallest_label():
    w = filled([[1.0], [-1.0]], labels=[1, 0])
    assert w.predict(Sample([0.0]), UNWEIGHTED).label == 0


def test_predict_duplicate_dominates():
    w = filled([[0.0], [0.1], [0.1], [0.1], [0.1]], labels=[1, 0, 0, 0, 0])
    p = w.predict(Sample([0.0]), UNWEIGHTED)
    assert p.label == 1 and p.certainty == pytest.approx(1.0)


def test_predict_empty_window():
    with pytest.raises(ValueError, match="empty"):
        SlidingWindow(3).predict(Sample([0.0]), LearnerConfig())


def random_window(rng, cfg_flags, n=None, capacity=40):
    n = n or int(rng.integers(1, capacity + 30))
    w = SlidingWindow(capacity)
    pts = rng.integers(-4, 5, size=(n, 2)).astype(float) / 2
    for i in range(n):
        w.insert(entry(pts[i], int(rng.integers(0, 3)), GT if rng.random() < 0.5 else SL, i * 2 + 1))
    return w


@pytest.mark.parametrize("age,gt", [(True, True), (True, False), (False, True), (False, False)])
def test_predict_matches_brute_force(age, gt):
    rng = np.random.default_rng(int(age) * 2 + int(gt))
    cfg = LearnerConfig(k=int(rng.integers(1, 8)), use_age_weight=age, use_gt_weight=gt)
    for _ in range(50):
        w = random_window(rng, cfg)
        x = Sample(rng.integers(-4, 5, size=2).astype(float) / 2)
        fast, ref = w.predict(x, cfg), brute_force_reference(w.entries, x, cfg)
        assert fast.label == ref.label
        assert fast.certainty == pytest.approx(ref.certainty, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100.0))
def test_argmax_invariant_under_weight_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    cfg = LearnerConfig(use_gt_weight=True, gt_weight=1.0, sl_weight=0.5)
    scaled = cfg.replace(gt_weight=cfg.gt_weight * scale, sl_weight=cfg.sl_weight * scale)
    w = random_window(rng, cfg)
    x = Sample(rng.normal(size=2))
    assert w.predict(x, cfg).label == w.predict(x, scaled).label


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_certainty_in_unit_interval_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    cfg = LearnerConfig(use_gt_weight=bool(seed % 2))
    w = random_window(rng, cfg)
    x = Sample(rng.normal(size=2))
    p = w.predict(x, cfg)
    assert 0.0 <= p.certainty <= 1.0
    assert w.predict(x, cfg) == p


def test_unanimous_unweighted_is_exactly_certain():
    rng = np.random.default_rng(3)
    w = filled(rng.normal(size=(30, 3)), labels=[2] * 30)
    assert w.predict(Sample(rng.normal(size=3)), UNWEIGHTED).certainty == 1.0
