import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spp.errors import InvalidArgumentError, UnsupportedError
from spp.geometry import (ENTROPY, EUCLIDEAN, UNBOUNDED, BregmanGeometry, bregman_div, diameter_D,
                          project, project_simplex, prox_map, set_radius)
from spp.problem import ball, box, free, linear_simple, simplex, zero_simple

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def bisect_simplex(v, iters=200):
    """Independent projection: find tau with sum max(v - tau, 0) = 1 by bisection."""
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0)


def test_bregman_examples():
    assert bregman_div(EUCLIDEAN, [1.0, 2.0], [1.0, 2.0]) == 0.0
    assert bregman_div(EUCLIDEAN, [1.0, 0.0], [0.0, 0.0]) == 0.5
    u = np.array([0.5, 0.5])
    assert bregman_div(ENTROPY, np.array([1.0, 0.0]), u) == pytest.approx(math.log(2), abs=1e-14)


def test_bregman_errors():
    with pytest.raises(InvalidArgumentError):
        bregman_div(EUCLIDEAN, [1.0], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        bregman_div(ENTROPY, np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    with pytest.raises(InvalidArgumentError):
        BregmanGeometry("l1")


@given(arrays(float, 6, elements=finite), arrays(float, 6, elements=finite))
def test_euclidean_strong_convexity(x, u):
    # V(x, u) >= alpha/2 ||x - u||^2 with alpha = 1, equality for the Euclidean case
    assert bregman_div(EUCLIDEAN, x, u) >= 0.5 * np.sum((x - u) ** 2) - 1e-9 * (1 + np.sum((x - u) ** 2))


@given(arrays(float, 5, elements=st.floats(0.01, 10)), arrays(float, 5, elements=st.floats(0.01, 10)))
def test_entropy_strong_convexity_l1(a, b):
    x, u = a / a.sum(), b / b.sum()
    # Pinsker: KL(x || u) >= ||x - u||_1^2 / 2
    assert bregman_div(ENTROPY, x, u) >= 0.5 * np.sum(np.abs(x - u)) ** 2 - 1e-12


@given(arrays(float, st.integers(1, 12), elements=finite))
def test_simplex_projection_matches_bisection(v):
    w = project_simplex(v)
    assert abs(w.sum() - 1) < 1e-12 and w.min() >= 0
    np.testing.assert_allclose(w, bisect_simplex(v), atol=1e-9)


@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite),
       st.floats(0.01, 10))
def test_euclidean_prox_is_projection(center, g, step):
    B = box(-np.ones(4), np.ones(4))
    c = np.clip(center, -1, 1)
    w = prox_map(EUCLIDEAN, B, g, zero_simple(4), c, step)
    np.testing.assert_allclose(w, np.clip(c - step * g, -1, 1), atol=1e-12)


@settings(max_examples=60)
@given(arrays(float, 5, elements=finite), arrays(float, 5, elements=finite), st.floats(0.01, 10),
       st.sampled_from(["box", "ball", "simplex", "free"]))
def test_euclidean_prox_optimality(center, g, step, kind):
    # variational inequality <g + (w - c)/step, u - w> >= 0 for all u in the set
    S = {"box": box(-np.ones(5), np.ones(5)), "ball": ball(np.zeros(5), 2.0),
         "simplex": simplex(5), "free": free(5)}[kind]
    c = project(S, center)
    w = prox_map(EUCLIDEAN, S, g, zero_simple(5), c, step)
    assert S.contains(w)
    grad = g + (w - c) / step
    if kind == "free":
        assert np.linalg.norm(grad) <= 1e-10 * (1 + np.linalg.norm(g) + np.linalg.norm(c) / step)
        return
    # the minimum over the set of <grad, u> is attained at the support point
    lo = -S.support(-grad)
    assert lo - grad @ w >= -1e-9 * (1 + np.abs(grad).sum() * (1 + np.abs(w).sum()))


@given(arrays(float, 4, elements=st.floats(-5, 5)), st.floats(0.01, 5),
       arrays(float, 4, elements=st.floats(0.05, 1)))
def test_entropy_prox_optimality(g, step, c):
    c = c / c.sum()
    w = prox_map(ENTROPY, simplex(4), g, zero_simple(4), c, step)
    assert abs(w.sum() - 1) < 1e-12 and w.min() > 0
    assume(w.min() > 1e-10)  # clipped outputs are not stationary by design
    # stationarity: g + (log w - log c)/step is constant across coordinates
    s = g + (np.log(w) - np.log(c)) / step
    assert np.ptp(s) < 1e-8 * (1 + np.abs(s).max())


def test_prox_examples():
    w = prox_map(EUCLIDEAN, free(2), [1.0, 1.0], zero_simple(2), [1.0, 0.0], 0.5)
    np.testing.assert_allclose(w, [0.5, -0.5])
    w = prox_map(EUCLIDEAN, free(2), [1.0, 1.0], linear_simple([1.0, -1.0]), [0.0, 0.0], 1.0)
    np.testing.assert_allclose(w, [-2.0, 0.0])
    w = prox_map(ENTROPY, simplex(2), [0.0, 0.0], zero_simple(2), np.array([0.5, 0.5]), 1.0)
    np.testing.assert_allclose(w, [0.5, 0.5])


def test_entropy_floor():
    w = prox_map(ENTROPY, simplex(3), [1e4, 0.0, 0.0], zero_simple(3), np.ones(3) / 3, 10.0)
    assert w.min() >= 1e-12 * 0.999 and abs(w.sum() - 1) < 1e-12


def test_prox_unsupported():
    with pytest.raises(UnsupportedError):
        prox_map(ENTROPY, box([0.0], [1.0]), [1.0], zero_simple(1), [0.5], 1.0)
    with pytest.raises(InvalidArgumentError):
        prox_map(EUCLIDEAN, free(1), [1.0], zero_simple(1), [0.0], 0.0)


def test_set_radius():
    assert set_radius(EUCLIDEAN, ball(np.zeros(3), 1.0)) == 2.0
    assert set_radius(EUCLIDEAN, box(np.zeros(2), np.ones(2))) == 1.0
    assert set_radius(EUCLIDEAN, free(2)) == UNBOUNDED
    assert set_radius(ENTROPY, simplex(4)) == pytest.approx(math.log(1e12) + math.log(4))
    assert diameter_D(EUCLIDEAN, ball(np.zeros(3), 1.0)) == pytest.approx(2.0)
    with pytest.raises(UnsupportedError):
        set_radius(ENTROPY, box(np.zeros(2), np.ones(2)))


def test_simplex_radius_is_sup_over_vertices():
    # V = ||x - u||^2 / 2 is convex in each argument, so the sup sits at a pair of vertices
    n = 4
    E = np.eye(n)
    best = max(bregman_div(EUCLIDEAN, E[i], E[j]) for i in range(n) for j in range(n))
    assert set_radius(EUCLIDEAN, simplex(n)) == best
