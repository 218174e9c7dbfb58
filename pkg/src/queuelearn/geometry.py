"""Closed convex target sets with closed-form Euclidean projections.

Each target set can also be flattened to ``(kind, a, b, offset)`` so the
numba kernels in :mod:`queuelearn.blackwell` can project without touching
Python objects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DimensionMismatch

INSIDE_TOL = 1e-12

SINGLETON, HALFSPACE, ORTHANT, BOX = 0, 1, 2, 3


def _vec(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {x.shape}")
    return x


class TargetSet:
    """Base class; use one of the concrete variants below."""

    kind: int
    dim: int

    def encode(self):
        raise NotImplementedError

    def contains(self, x, tol=1e-9):
        _, dist = project(x, self)
        return dist <= tol

    def sample(self, rng, size):
        """Draw ``size`` points of the set (used for containment checks)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Singleton(TargetSet):
    point: np.ndarray
    kind = SINGLETON

    def __post_init__(self):
        object.__setattr__(self, "point", _vec(self.point, "point"))

    @classmethod
    def origin(cls, dim):
        return cls(np.zeros(dim))

    @property
    def dim(self):
        return self.point.size

    def encode(self):
        return self.kind, self.point, self.point, 0.0

    def sample(self, rng, size):
        return np.tile(self.point, (size, 1))


@dataclass(frozen=True, eq=False)
class HalfSpace(TargetSet):
    """``{r : normal . r <= offset}``."""

    normal: np.ndarray
    offset: float
    kind = HALFSPACE

    def __post_init__(self):
        normal = _vec(self.normal, "normal")
        if not np.any(normal):
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.size

    def encode(self):
        return self.kind, self.normal, self.normal, self.offset

    def sample(self, rng, size):
        z = rng.normal(scale=3.0, size=(size, self.dim))
        excess = z @ self.normal - self.offset
        shift = np.maximum(excess, 0.0) + rng.exponential(size=size)
        return z - np.outer(shift / (self.normal @ self.normal), self.normal)


@dataclass(frozen=True, eq=False)
class NonpositiveOrthant(TargetSet):
    dim: int
    kind = ORTHANT

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def encode(self):
        zeros = np.zeros(self.dim)
        return self.kind, zeros, zeros, 0.0

    def sample(self, rng, size):
        pts = -rng.exponential(scale=2.0, size=(size, self.dim))
        # include faces, where the obtuse-angle inequality is tight
        pts[rng.random(pts.shape) < 0.3] = 0.0
        return pts


@dataclass(frozen=True, eq=False)
class Box(TargetSet):
    lo: np.ndarray
    hi: np.ndarray
    kind = BOX

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi must have the same length")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def encode(self):
        return self.kind, self.lo, self.hi, 0.0

    def sample(self, rng, size):
        u = rng.random((size, self.dim))
        u[u < 0.15] = 0.0
        u[u > 0.85] = 1.0
        return self.lo + u * (self.hi - self.lo)


@dataclass(frozen=True)
class Hyperplane:
    """The half-space ``{r : normal . r <= offset}`` supporting a target set."""

    normal: np.ndarray
    offset: float

    def contains(self, r, tol=1e-9):
        return float(np.dot(self.normal, r)) <= self.offset + tol


@njit(cache=True)
def project_kernel(kind, a, b, offset, x):
    if kind == SINGLETON:
        return a.copy()
    if kind == HALFSPACE:
        excess = np.dot(a, x) - offset
        if excess <= 0.0:
            return x.copy()
        return x - (excess / np.dot(a, a)) * a
    if kind == ORTHANT:
        return np.minimum(x, 0.0)
    return np.minimum(np.maximum(x, a), b)


def project(x, Z: TargetSet):
    """Euclidean projection of ``x`` onto ``Z``; returns ``(point, distance)``."""
    x = _vec(x)
    if x.size != Z.dim:
        raise DimensionMismatch(f"point has dimension {x.size}, target set has {Z.dim}")
    kind, a, b, offset = Z.encode()
    p = project_kernel(kind, a, b, offset, x)
    return p, float(np.linalg.norm(x - p))


def supporting_halfspace(qbar, Z: TargetSet):
    """Half-space through the projection of ``qbar`` with normal ``qbar - P``.

    Returns ``None`` when ``qbar`` already lies in ``Z`` (distance below
    ``INSIDE_TOL``), since the normal would vanish.
    """
    p, dist = project(qbar, Z)
    if dist < INSIDE_TOL:
        return None
    normal = np.asarray(qbar, dtype=float) - p
    return Hyperplane(normal, float(p @ normal))
