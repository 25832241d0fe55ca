import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from reproto.geometry import (Metric, clamp_domain, distance, distance_gradient,
                              pairwise_distances, project_ball)

from conftest import METRICS, central_difference

vec3 = arrays(np.float64, 3, elements=st.floats(-100, 100))


def test_distance_examples():
    assert distance([0, 0], [3, 4], Metric.L2) == 5.0
    assert distance([1, 2], [4, 0], Metric.LINF) == 3.0
    assert distance([1.5, -2.0], [1.5, -2.0], "l2") == 0.0
    assert distance([1.5, -2.0], [1.5, -2.0], "linf") == 0.0


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        distance([1, 2], [1, 2, 3], Metric.L2)
    with pytest.raises(ValueError):
        project_ball([1, 2], [0, 0, 0], 1.0, Metric.L2)


def test_metric_parse():
    assert Metric.parse("L2") is Metric.L2
    assert Metric.parse("chebyshev") is Metric.LINF
    with pytest.raises(ValueError):
        Metric.parse("l1")


@pytest.mark.parametrize("metric", METRICS)
def test_metric_axioms_random_triples(metric, rng):
    a, b, c = rng.normal(size=(3, 1000, 4)) * rng.uniform(0.1, 10, size=(3, 1000, 1))
    dab, dba = distance(a, b, metric), distance(b, a, metric)
    assert np.all(dab >= 0)
    assert np.array_equal(dab, dba)
    assert np.all(distance(a, c, metric) <= dab + distance(b, c, metric) + 1e-12)
    assert np.all(distance(a, a, metric) == 0)
    assert np.all(dab[np.any(a != b, axis=1)] > 0)


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3, st.sampled_from(METRICS))
def test_triangle_inequality_property(a, b, c, metric):
    assert distance(a, c, metric) <= distance(a, b, metric) + distance(b, c, metric) + 1e-9


def test_gradient_examples():
    g, singular = distance_gradient([3, 4], [0, 0], Metric.L2)
    np.testing.assert_allclose(g, [0.6, 0.8])
    assert not singular
    g, _ = distance_gradient([1, 2], [4, 0], Metric.LINF)
    np.testing.assert_array_equal(g, [-1, 0])


def test_linf_gradient_picks_max_coordinate():
    # |1-4| = 3 dominates |2-0| = 2: index 0 with sign of (1 - 4)
    g, _ = distance_gradient([1, 2], [4, 0], Metric.LINF)
    assert g.tolist() == [-1.0, 0.0]
    # ties: lowest index wins
    g, _ = distance_gradient([2, -2], [0, 0], Metric.LINF)
    assert g.tolist() == [1.0, 0.0]
    g, _ = distance_gradient([1, 3], [0, 0], Metric.LINF)
    assert g.tolist() == [0.0, 1.0]


@pytest.mark.parametrize("metric", METRICS)
def test_gradient_singularity(metric):
    g, singular = distance_gradient([1.0, 2.0], [1.0, 2.0], metric)
    assert singular
    assert np.array_equal(g, [0.0, 0.0])


@pytest.mark.parametrize("metric", METRICS)
def test_gradient_matches_finite_differences(metric, rng):
    worst = 0.0
    for _ in range(100):
        a, b = rng.normal(size=(2, 5))
        g, _ = distance_gradient(a, b, metric)
        num = central_difference(lambda v: distance(v, b, metric), a, h=1e-6)
        worst = max(worst, np.max(np.abs(g - num)) / max(np.max(np.abs(num)), 1e-12))
    assert worst < 1e-6


def test_batched_gradient_matches_single(rng):
    a, b = rng.normal(size=(2, 7, 3))
    for metric in METRICS:
        g, s = distance_gradient(a, b, metric)
        for i in range(7):
            gi, si = distance_gradient(a[i], b[i], metric)
            assert np.array_equal(g[i], gi) and s[i] == si


def test_project_examples():
    np.testing.assert_allclose(project_ball([6, 8], [0, 0], 5, Metric.L2), [3, 4])
    np.testing.assert_array_equal(project_ball([2, 0], [0, 0], 1, Metric.LINF), [1, 0])
    inside = np.array([0.1, -0.2])
    for m in METRICS:
        np.testing.assert_array_equal(project_ball(inside, [0, 0], 1.0, m), inside)
    with pytest.raises(ValueError):
        project_ball([1, 1], [0, 0], -1.0, Metric.L2)


@pytest.mark.parametrize("metric", METRICS)
def test_projection_properties(metric, rng):
    x = rng.normal(size=(500, 4)) * 3
    c = rng.normal(size=(500, 4))
    eps = rng.uniform(0, 2, size=(500, 1))
    for i in range(500):
        p = project_ball(x[i], c[i], float(eps[i, 0]), metric)
        assert distance(p, c[i], metric) <= eps[i, 0] + 1e-9
        assert distance(p, c[i], metric) <= distance(x[i], c[i], metric) + 1e-12
        np.testing.assert_array_equal(project_ball(p, c[i], float(eps[i, 0]), metric), p)


def test_clamp_domain():
    np.testing.assert_array_equal(clamp_domain([-0.1, 0.5, 1.3], 0, 1), [0, 0.5, 1])
    v = np.array([0.2, 0.3])
    np.testing.assert_array_equal(clamp_domain(v, 0, 1), v)
    once = clamp_domain([-3, 0.5, 7], 0, 1)
    np.testing.assert_array_equal(clamp_domain(once, 0, 1), once)
    with pytest.raises(ValueError):
        clamp_domain([0.5], 1, 0)


def test_pairwise_matches_scan(rng):
    A, B = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    for m in METRICS:
        D = pairwise_distances(A, B, m)
        for i in range(6):
            for j in range(4):
                assert D[i, j] == distance(A[i], B[j], m)
