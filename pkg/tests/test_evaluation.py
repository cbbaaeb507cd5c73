import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rotation, random_transform
from mireg.evaluation import (
    AggregateMetrics, SuccessThresholds, aggregate, f1_score, rotation_error, score_scene,
    translation_error,
)
from mireg.exceptions import EmptyBenchmark
from mireg.geom import RigidTransform, rotation_about_axis


def test_re_te_examples(rng):
    r = random_rotation(rng)
    assert rotation_error(r, r) == pytest.approx(0.0, abs=1e-6)
    flip = rotation_about_axis(rng.normal(size=3), np.pi)
    assert rotation_error(flip @ r, r) == pytest.approx(180.0, abs=1e-6)
    assert translation_error([0, 0, 0], [3, 4, 0]) == 5.0


def test_re_clamps_rounding(rng):
    r = random_rotation(rng)
    assert np.isfinite(rotation_error(r, r * (1 + 1e-15)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_re_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = random_rotation(rng), random_rotation(rng)
    e = rotation_error(a, b)
    assert 0 <= e <= 180 and e == pytest.approx(rotation_error(b, a), abs=1e-9)


def _near(t, deg, dt=0.0):
    r = rotation_about_axis([0, 0, 1], np.radians(deg)) @ t.rotation
    return RigidTransform(r, t.translation + [dt, 0, 0])


def test_three_gt_four_preds_two_good(rng):
    gts = [random_transform(rng) for _ in range(3)]
    preds = [_near(gts[0], 1), _near(gts[1], 2), _near(gts[2], 40), random_transform(rng)]
    m = score_scene(preds, gts)
    assert m.recall == pytest.approx(2 / 3) and m.precision == pytest.approx(0.5)
    assert m.f1 == pytest.approx(4 / 7)


def test_identical_preds(rng):
    gts = [random_transform(rng) for _ in range(4)]
    m = score_scene(list(gts), gts)
    assert (m.recall, m.precision, m.f1) == (1.0, 1.0, 1.0)


def test_duplicate_preds_one_to_one(rng):
    g = random_transform(rng)
    m = score_scene([_near(g, 1), _near(g, 2)], [g])
    assert len(m.matches) == 1 and m.precision == 0.5 and m.matches[0][0] == 0


def test_greedy_by_rotation_error(rng):
    g1 = random_transform(rng)
    g2 = RigidTransform(rotation_about_axis([0, 0, 1], np.radians(10)) @ g1.rotation, g1.translation)
    # pred close to both; the better-RE pair is taken first
    p = _near(g1, 9)
    m = score_scene([p], [g1, g2])
    assert m.matches[0][1] == 1


def test_thresholds_inclusive_and_te(rng):
    g = random_transform(rng)
    th = SuccessThresholds(15.0, 0.1)
    assert score_scene([_near(g, 0, 0.0999)], [g], th).recall == 1.0
    assert score_scene([_near(g, 0, 0.1001)], [g], th).recall == 0.0
    with pytest.raises(ValueError):
        SuccessThresholds(0, 0.1)


def test_empty_cases(rng):
    g = random_transform(rng)
    m = score_scene([], [g])
    assert (m.recall, m.precision, m.f1) == (0.0, 0.0, 0.0)
    m = score_scene([g], [])
    assert (m.recall, m.precision) == (1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_order_invariance_and_bounds(seed):
    rng = np.random.default_rng(seed)
    gts = [random_transform(rng, 0.2) for _ in range(int(rng.integers(1, 5)))]
    preds = [_near(gts[int(rng.integers(len(gts)))], rng.uniform(0, 20), rng.uniform(0, 0.12))
             for _ in range(int(rng.integers(1, 6)))]
    a = score_scene(preds, gts)
    b = score_scene(preds[::-1], gts[::-1])
    assert (a.recall, a.precision) == (b.recall, b.precision)
    assert len(a.matches) <= min(len(gts), len(preds))
    assert a.f1 <= 2 * min(a.precision, a.recall) + 1e-12


def test_f1_and_aggregate(rng):
    assert f1_score(0.0, 1.0) == 0.0
    g = random_transform(rng)
    good, bad = score_scene([g], [g]), score_scene([], [g])
    agg = aggregate([good, bad])
    assert isinstance(agg, AggregateMetrics) and agg.mf == 0.5
    single = aggregate([good])
    assert (single.mr, single.mp, single.mf) == (1.0, 1.0, 1.0)
    with pytest.raises(EmptyBenchmark):
        aggregate([])


def test_mf_is_mean_of_f1_not_harmonic_of_means(rng):
    gts = [random_transform(rng) for _ in range(2)]
    s1 = score_scene([gts[0]], gts)  # r .5 p 1
    s2 = score_scene([gts[0], gts[1], random_transform(rng), random_transform(rng)], gts)  # r 1 p .5
    agg = aggregate([s1, s2])
    assert agg.mf == pytest.approx((s1.f1 + s2.f1) / 2)
    assert agg.mf != pytest.approx(f1_score(agg.mp, agg.mr))
