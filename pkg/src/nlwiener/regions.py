"""Geometric predicates used to carve node sets out of a grid.

Every region answers ``contains(points)`` for an ``(N, n)`` array of points
and composes with ``|`` (union), ``&`` (intersection), ``~`` (complement)
and ``-`` (difference).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


class Region:
    """Base class for point-membership predicates."""

    def contains(self, points) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        return self.contains(points)

    def __or__(self, other: "Region") -> "Region":
        return Union((self, other))

    def __and__(self, other: "Region") -> "Region":
        return Intersection((self, other))

    def __invert__(self) -> "Region":
        return Complement(self)

    def __sub__(self, other: "Region") -> "Region":
        return Intersection((self, Complement(other)))


@dataclass(frozen=True)
class Empty(Region):
    def contains(self, points):
        return np.zeros(len(_as_points(points)), dtype=bool)


@dataclass(frozen=True)
class Everything(Region):
    def contains(self, points):
        return np.ones(len(_as_points(points)), dtype=bool)


@dataclass(frozen=True)
class Ball(Region):
    """Euclidean ball; open unless ``closed=True``."""

    center: tuple
    radius: float
    closed: bool = False

    def contains(self, points):
        pts = _as_points(points)
        d = np.linalg.norm(pts - np.asarray(self.center, dtype=float), axis=1)
        return d <= self.radius if self.closed else d < self.radius


@dataclass(frozen=True)
class Box(Region):
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple
    hi: tuple

    def contains(self, points):
        pts = _as_points(points)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(frozen=True)
class HalfSpace(Region):
    """Open half-space ``{x : (x - point) . normal > 0}``."""

    point: tuple
    normal: tuple

    def contains(self, points):
        pts = _as_points(points)
        nrm = np.asarray(self.normal, dtype=float)
        return (pts - np.asarray(self.point, dtype=float)) @ nrm > 0


@dataclass(frozen=True)
class Cone(Region):
    """Closed circular cone with vertex, axis direction and full opening angle.

    In 1D an aperture below pi is the closed half-line along ``axis``; an
    aperture of pi or more is the whole line.
    """

    vertex: tuple
    axis: tuple
    aperture: float

    def contains(self, points):
        pts = _as_points(points)
        rel = pts - np.asarray(self.vertex, dtype=float)
        ax = np.asarray(self.axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        r = np.linalg.norm(rel, axis=1)
        cos_half = np.cos(0.5 * self.aperture)
        proj = rel @ ax
        # small slack keeps lattice points exactly on the cone surface inside
        return (r == 0) | (proj >= cos_half * r - 1e-12 * r)


@dataclass(frozen=True)
class Cusp(Region):
    """Closed power cusp ``{t >= 0, |lateral| <= scale * t**exponent}``.

    ``t`` is the coordinate along ``axis`` measured from the vertex; for
    ``exponent > 1`` the set is thinner than any cone at the vertex. Two
    dimensional only.
    """

    vertex: tuple
    axis: tuple
    exponent: float
    scale: float = 1.0

    def contains(self, points):
        pts = _as_points(points)
        if pts.shape[1] != 2:
            raise ValueError("Cusp is defined in two dimensions only")
        rel = pts - np.asarray(self.vertex, dtype=float)
        ax = np.asarray(self.axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        perp = np.array([-ax[1], ax[0]])
        t = rel @ ax
        lat = np.abs(rel @ perp)
        return (t >= 0) & (lat <= self.scale * np.abs(t) ** self.exponent)


@dataclass(frozen=True)
class DyadicComb(Region):
    """Self-similar exterior set with density ``fraction`` in every ball.

    Points ``x != vertex`` belong to the set when the fractional part of
    ``log2|x - vertex|`` is at least ``1 - fraction``, i.e. a fixed share of
    every dyadic shell. Dilations by powers of two map the set onto itself.
    The vertex itself is included.
    """

    vertex: tuple
    fraction: float

    def contains(self, points):
        pts = _as_points(points)
        r = np.linalg.norm(pts - np.asarray(self.vertex, dtype=float), axis=1)
        out = r == 0
        pos = ~out
        frac = np.mod(np.log2(r[pos]), 1.0)
        out[pos] = frac >= 1.0 - self.fraction
        return out


@dataclass(frozen=True)
class Complement(Region):
    inner: Region

    def contains(self, points):
        return ~self.inner.contains(points)


@dataclass(frozen=True)
class Union(Region):
    parts: tuple

    def contains(self, points):
        pts = _as_points(points)
        out = np.zeros(len(pts), dtype=bool)
        for part in self.parts:
            out |= part.contains(pts)
        return out


@dataclass(frozen=True)
class Intersection(Region):
    parts: tuple

    def contains(self, points):
        pts = _as_points(points)
        out = np.ones(len(pts), dtype=bool)
        for part in self.parts:
            out &= part.contains(pts)
        return out
