import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from queuelearn.exceptions import DimensionMismatch
from queuelearn.geometry import (
    Box, HalfSpace, NonpositiveOrthant, Singleton, project, supporting_halfspace,
)

coords = st.floats(-20, 20, allow_nan=False)


def vec(n):
    return arrays(float, n, elements=coords)


def grid_distance(x, lo, hi):
    """Distance to a product set, minimizing each coordinate over refined grids.

    Squared distance separates over coordinates, so each axis is searched
    independently: a coarse grid, then repeatedly a finer one around the best
    point.
    """
    total = 0.0
    for xi, a, b in zip(x, lo, hi):
        left, right = max(a, -60.0), min(b, 60.0)
        best = None
        for _ in range(12):
            g = np.linspace(left, right, 201)
            k = int(np.argmin((g - xi) ** 2))
            best = g[k]
            h = (right - left) / 200
            left, right = max(left, best - 2 * h), min(right, best + 2 * h)
        total += (best - xi) ** 2
    return np.sqrt(total)


def test_projection_examples():
    p, d = project([-1, -2], NonpositiveOrthant(2))
    assert np.array_equal(p, [-1, -2]) and d == 0
    p, d = project([1, 2], NonpositiveOrthant(2))
    assert np.array_equal(p, [0, 0]) and d == pytest.approx(np.sqrt(5), abs=1e-15)
    p, d = project([3, 1], HalfSpace([1, 0], 1))
    assert np.allclose(p, [1, 1]) and d == pytest.approx(2)


def test_supporting_halfspace_examples():
    h = supporting_halfspace([1, 1], Singleton.origin(2))
    assert np.array_equal(h.normal, [1, 1]) and h.offset == 0
    assert supporting_halfspace([-1, -1], NonpositiveOrthant(2)) is None
    h = supporting_halfspace([2, -1], NonpositiveOrthant(2))
    assert np.array_equal(h.normal, [2, 0]) and h.offset == 0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        project([1, 2, 3], NonpositiveOrthant(2))
    with pytest.raises(DimensionMismatch):
        supporting_halfspace([1.0], Singleton.origin(2))


def test_invalid_sets():
    with pytest.raises(ValueError):
        HalfSpace([0, 0], 1)
    with pytest.raises(ValueError):
        Box([1, 0], [0, 0])


def _sets(draw, n):
    kind = draw(st.sampled_from(["singleton", "halfspace", "orthant", "box"]))
    if kind == "singleton":
        return Singleton(draw(vec(n)))
    if kind == "halfspace":
        normal = draw(vec(n).filter(lambda v: np.linalg.norm(v) > 1e-3))
        return HalfSpace(normal, draw(coords))
    if kind == "orthant":
        return NonpositiveOrthant(n)
    a, b = draw(vec(n)), draw(vec(n))
    return Box(np.minimum(a, b), np.maximum(a, b))


@st.composite
def set_and_point(draw):
    n = draw(st.integers(1, 4))
    return _sets(draw, n), draw(vec(n)), draw(st.integers(0, 2**31))


@settings(max_examples=200, deadline=None)
@given(set_and_point())
def test_projection_properties(case):
    Z, x, seed = case
    rng = np.random.default_rng(seed)
    p, d = project(x, Z)
    assert Z.contains(p, tol=1e-9)
    assert d == pytest.approx(np.linalg.norm(x - p))
    p2, _ = project(p, Z)
    assert np.allclose(p2, p, atol=1e-12, rtol=0)
    z = Z.sample(rng, 50)
    # obtuse angle between x - p and every z - p
    assert np.all((z - p) @ (x - p) <= 1e-9 * max(1.0, np.abs(x).max() ** 2))
    h = supporting_halfspace(x, Z)
    if h is not None:
        scale = 1e-9 * max(1.0, np.abs(z).max() * np.abs(h.normal).max())
        assert np.all(z @ h.normal <= h.offset + scale)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(vec(n), vec(n), vec(n), st.booleans())))
def test_distance_matches_grid_oracle(case):
    x, a, b, orthant = case
    if orthant:
        Z = NonpositiveOrthant(x.size)
        lo, hi = np.full(x.size, -np.inf), np.zeros(x.size)
    else:
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        Z = Box(lo, hi)
    _, d = project(x, Z)
    assert abs(d - grid_distance(x, lo, hi)) <= 1e-6
