"""Uniform cell-centred grids, node sets and singular-kernel pair weights.

The pair weight ``w_ij`` approximates the double integral of the kernel over
the cells ``C_i x C_j``:

* well separated pairs use the midpoint rule ``k(x_i, x_j) h^(2n)``;
* pairs within ``near_band`` cells (Chebyshev distance) use
  ``|x_i - x_j|^(-p) * integral_{C_i x C_j} |x - y|^p k(x, y)``, which is
  finite for every ``s in (0, 1)`` because ``p > sp``;
* the self-cell term is dropped (consistency error ``O(h^(p - sp))``).

For the standard kernel the weight depends only on the integer offset
between the two cells, so it is stored as a stencil and applied with FFT
convolutions on large grids.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.special

from .regions import Region

#: Largest grid (in nodes) for which a dense ``N x N`` weight matrix is built.
DENSE_LIMIT = 6000

_FFT_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    """Number of threads used by FFT convolutions (schedule independent)."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(workers))


@dataclass(frozen=True)
class Params:
    """The quadruple ``(n, s, p, lam)``; ``lam`` is the ellipticity constant."""

    n: int
    s: float
    p: float
    lam: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension n must be 1 or 2, got {self.n}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.lam >= 1.0:
            raise ValueError(f"lam must be at least 1, got {self.lam}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def kappa(self) -> float:
        """Homogeneity exponent ``n - sp`` of capacities and weights."""
        return self.n - self.s * self.p


@dataclass(frozen=True)
class Grid:
    """Uniform grid of cell centres over the box ``[lo, hi]``.

    Nodes are ordered lexicographically with the first axis slowest.
    """

    lo: tuple
    hi: tuple
    shape: tuple

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / self.shape[0]

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def axis(self, k: int) -> np.ndarray:
        return self.lo[k] + (np.arange(self.shape[k]) + 0.5) * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        axes = [self.axis(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def multi_index(self) -> np.ndarray:
        idx = np.stack(np.unravel_index(np.arange(self.n_nodes), self.shape), axis=1)
        idx.setflags(write=False)
        return idx

    def boundary_layer(self) -> np.ndarray:
        """Mask of nodes in the outermost layer of cells."""
        mi = self.multi_index
        shape = np.asarray(self.shape)
        return np.any((mi == 0) | (mi == shape - 1), axis=1)

    def distance_to_box(self, x0) -> float:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        gap = np.maximum(lo - x0, 0.0) + np.maximum(x0 - hi, 0.0)
        return float(np.linalg.norm(gap))

    def scaled(self, factor: float, center=None) -> "Grid":
        """Dilate the box (and spacing) by ``factor`` about ``center``."""
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        lo = tuple(float(c[k] + factor * (self.lo[k] - c[k])) for k in range(self.dim))
        hi = tuple(float(c[k] + factor * (self.hi[k] - c[k])) for k in range(self.dim))
        return Grid(lo, hi, self.shape)


def build_grid(box, cells_per_axis: Sequence[int]) -> Grid:
    """Build a uniform cell-centred grid.

    Parameters
    ----------
    box : sequence of ``(lo, hi)`` pairs, one per axis (a single pair is
        accepted in 1D).
    cells_per_axis : number of cells along each axis.

    All axes must share one spacing.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    cells = [int(c) for c in np.atleast_1d(cells_per_axis)]
    dim = box.shape[0]
    if dim not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {dim}")
    if len(cells) != dim:
        raise ValueError("cells_per_axis must have one entry per axis")
    if any(c <= 0 for c in cells):
        raise ValueError("every axis needs at least one cell")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box is degenerate")
    spacings = (box[:, 1] - box[:, 0]) / np.asarray(cells)
    if not np.allclose(spacings, spacings[0], rtol=1e-9, atol=0.0):
        raise ValueError(f"axes must share one spacing, got {spacings}")
    return Grid(tuple(box[:, 0].tolist()), tuple(box[:, 1].tolist()), tuple(cells))


def local_grid(center, half_width: float, h: float, dim: int, align: str = "corner") -> Grid:
    """Grid of spacing ``h`` covering ``center +- half_width`` (rounded up).

    ``align="corner"`` puts ``center`` on a cell vertex, ``align="center"`` on
    a node.
    """
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    if align == "corner":
        k = int(np.ceil(half_width / h - 1e-9))
        lo = c - k * h
        cells = 2 * k
    elif align == "center":
        k = int(np.ceil(half_width / h - 0.5 - 1e-9))
        lo = c - (k + 0.5) * h
        cells = 2 * k + 1
    else:
        raise ValueError(f"unknown alignment {align!r}")
    hi = lo + cells * h
    return Grid(tuple(lo.tolist()), tuple(hi.tolist()), (cells,) * dim)


@dataclass(frozen=True)
class NodeSet:
    """Membership mask over the nodes of one grid."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def empty(cls, n_nodes: int) -> "NodeSet":
        return cls(np.zeros(n_nodes, dtype=bool))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def __len__(self) -> int:
        return self.count

    def _check(self, other: "NodeSet"):
        if other.mask.shape != self.mask.shape:
            raise ValueError("node sets belong to different grids")

    def __or__(self, other):
        self._check(other)
        return NodeSet(self.mask | other.mask)

    def __and__(self, other):
        self._check(other)
        return NodeSet(self.mask & other.mask)

    def __sub__(self, other):
        self._check(other)
        return NodeSet(self.mask & ~other.mask)

    def __invert__(self):
        return NodeSet(~self.mask)

    def issubset(self, other: "NodeSet") -> bool:
        self._check(other)
        return not np.any(self.mask & ~other.mask)


def node_set(grid: Grid, region: Optional[Region]) -> NodeSet:
    """Nodes whose cell centre satisfies ``region`` (``None`` is empty)."""
    if region is None:
        return NodeSet.empty(grid.n_nodes)
    return NodeSet(region.contains(grid.nodes))


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class StandardKernel:
    """``k(x, y) = |x - y|^(-n - sp)``."""

    variant = "standard"


@dataclass(frozen=True)
class CoefficientKernel:
    """``k(x, y) = a(x, y) |x - y|^(-n - sp)`` with ``a`` in ``[1/lam, lam]``.

    ``coefficient(x, y)`` receives broadcastable arrays of points of shape
    ``(..., n)`` and must be symmetric in its arguments. Near-field pairs use
    a kernel-weighted average of ``a`` over the two cells, computed with a
    tensor Gauss rule of ``order`` points and ``subdivisions`` pieces per
    axis (defaults 8/4 in 1D, 3/2 in 2D).
    """

    coefficient: Callable
    order: Optional[int] = None
    subdivisions: Optional[int] = None

    variant = "coefficient"


def constant_coefficient(value: float = 1.0) -> Callable:
    def a(x, y):
        return np.full(np.broadcast_shapes(x.shape, y.shape)[:-1], float(value))

    return a


def oscillating_coefficient(lam: float, frequency: float = 3.0) -> Callable:
    """Smooth symmetric coefficient sweeping the full range ``[1/lam, lam]``."""

    def a(x, y):
        ssum = np.sum(x + y, axis=-1)
        dist = np.sqrt(np.sum((x - y) ** 2, axis=-1))
        return lam ** (np.cos(frequency * ssum) * np.cos(frequency * dist))

    return a


def random_cell_coefficient(grid: Grid, lam: float, seed: int = 0) -> Callable:
    """Piecewise constant coefficient ``lam^((xi(x) + xi(y)) / 2)``.

    ``xi`` takes an independent uniform value in ``[-1, 1]`` on each grid
    cell, so ``a`` is measurable, symmetric and valued in ``[1/lam, lam]``.
    """
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=grid.shape)
    lo = np.asarray(grid.lo)
    shape = np.asarray(grid.shape)

    def lookup(z):
        k = np.floor((z - lo) / grid.h).astype(int)
        k = np.clip(k, 0, shape - 1)
        return xi[tuple(np.moveaxis(k, -1, 0))]

    def a(x, y):
        return lam ** (0.5 * (lookup(x) + lookup(y)))

    return a


# --------------------------------------------------------------------------
# standard-kernel stencil


def _gauss(order: int, subdivisions: int, lo: float = 0.0, hi: float = 1.0):
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, subdivisions + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@functools.lru_cache(maxsize=None)
def near_integral_1d(m: int, alpha: float) -> float:
    """``integral_{[0,1] x [m, m+1]} |x - y|^alpha`` for integer ``m >= 1``.

    Closed form: the second difference of ``|t|^(alpha+2) / ((alpha+1)(alpha+2))``.
    """
    m = abs(int(m))

    def G(t):
        return t ** (alpha + 2) / ((alpha + 1) * (alpha + 2))

    return G(m + 1) - 2.0 * G(m) + G(m - 1)


def _corner_square_integral(A1, B1, A2, B2, alpha, v, wv):
    """Integral of ``(A1 + B1 e1)(A2 + B2 e2) |e|^alpha`` over ``[0,1]^2``.

    Duffy split into the two triangles; the radial variable is integrated
    exactly, the angular one with Gauss-Legendre.
    """
    c2, c3, c4 = 1.0 / (alpha + 2), 1.0 / (alpha + 3), 1.0 / (alpha + 4)
    ang = (1.0 + v * v) ** (alpha / 2)
    t1 = A1 * A2 * c2 + (B1 * A2 + A1 * B2 * v) * c3 + B1 * B2 * v * c4
    t2 = A1 * A2 * c2 + (B2 * A1 + A2 * B1 * v) * c3 + B1 * B2 * v * c4
    return float(np.sum(wv * ang * (t1 + t2)))


@functools.lru_cache(maxsize=None)
def near_integral_2d(m1: int, m2: int, alpha: float, order: int = 8, subdivisions: int = 4) -> float:
    """``integral_{C_0 x C_m} |x - y|^alpha`` for unit cells, offset ``m``.

    The four-dimensional integral is reduced to the difference variable
    ``z = y - x`` weighted by the tent function (the autocorrelation of the
    unit cell). Unit squares with a corner at the origin are handled by a
    Duffy transform; the others by composite tensor Gauss quadrature.
    """
    v, wv = _gauss(32, 1)
    total = 0.0
    for a1 in (m1 - 1, m1):
        for a2 in (m2 - 1, m2):
            # tent factor on [a, a+1] along each axis: 1 - |z - m|
            def tent_coeffs(a, m):
                # returns (c0, c1) with T(z) = c0 + c1 z on [a, a + 1]
                return (1.0 - m, 1.0) if a == m - 1 else (1.0 + m, -1.0)

            c01, c11 = tent_coeffs(a1, m1)
            c02, c12 = tent_coeffs(a2, m2)
            corner = a1 in (-1, 0) and a2 in (-1, 0)
            if corner:
                s1 = 1.0 if a1 == 0 else -1.0
                s2 = 1.0 if a2 == 0 else -1.0
                # z_k = s_k e_k, e_k in [0, 1]
                A1, B1 = c01, c11 * s1
                A2, B2 = c02, c12 * s2
                total += _corner_square_integral(A1, B1, A2, B2, alpha, v, wv)
            else:
                z1, w1 = _gauss(order, subdivisions, a1, a1 + 1)
                z2, w2 = _gauss(order, subdivisions, a2, a2 + 1)
                Z1, Z2 = np.meshgrid(z1, z2, indexing="ij")
                f = (c01 + c11 * Z1) * (c02 + c12 * Z2) * np.hypot(Z1, Z2) ** alpha
                total += float(w1 @ f @ w2)
    return total


def standard_stencil(shape: Sequence[int], params: Params, near_band: int = 2) -> np.ndarray:
    """Unit-spacing standard-kernel weights indexed by cell offset.

    Entry ``[m + shape - 1]`` holds the weight between cells whose index
    differs by ``m``; multiply by ``h^(n - sp)`` for spacing ``h``.
    """
    n, sp, p = params.n, params.sp, params.p
    shape = tuple(int(c) for c in shape)
    axes = [np.arange(-(c - 1), c) for c in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    dist = np.sqrt(sum(m.astype(float) ** 2 for m in mesh))
    with np.errstate(divide="ignore"):
        st = dist ** (-(n + sp))
    center = tuple(c - 1 for c in shape)
    st[center] = 0.0
    band = np.max(np.abs(np.stack(mesh)), axis=0)
    near = (band > 0) & (band <= near_band)
    if n == 1:
        alpha = p - 1 - sp
        for idx in np.flatnonzero(near):
            m = int(mesh[0].ravel()[idx])
            st.ravel()[idx] = abs(m) ** (-p) * near_integral_1d(abs(m), alpha)
    else:
        alpha = p - 2 - sp
        for idx in zip(*np.nonzero(near)):
            m1, m2 = int(mesh[0][idx]), int(mesh[1][idx])
            # the integral is invariant under axis reflections and swaps
            key = tuple(sorted((abs(m1), abs(m2))))
            st[idx] = np.hypot(m1, m2) ** (-p) * near_integral_2d(key[0], key[1], alpha)
    return st


# --------------------------------------------------------------------------
# pair weights


def _phi(t: np.ndarray, p: float) -> np.ndarray:
    """``|t|^(p-2) t``, continuous at zero."""
    return np.sign(t) * np.abs(t) ** (p - 1)


def _offset_slices(m, shape):
    a, b = [], []
    for mk, sk in zip(m, shape):
        if mk >= 0:
            a.append(slice(0, sk - mk))
            b.append(slice(mk, sk))
        else:
            a.append(slice(-mk, sk))
            b.append(slice(0, sk + mk))
    return tuple(a), tuple(b)


class PairWeightMatrix:
    """Symmetric nonnegative pair weights with a zero diagonal.

    Holds either an offset stencil (standard kernel) or an explicit dense
    matrix (coefficient kernels). All pair sums are evaluated in a fixed
    order so results do not depend on scheduling.

    ``exterior`` optionally holds, per node, the weight ``c_i`` of the
    interaction with all of ``R^n`` outside the box, where functions are
    taken to vanish. It enters every form as a pair with a zero partner.
    """

    def __init__(self, grid: Grid, params: Params, kernel, near_band: int,
                 stencil: Optional[np.ndarray] = None, matrix: Optional[np.ndarray] = None,
                 exterior: Optional[np.ndarray] = None):
        if stencil is None and matrix is None:
            raise ValueError("need a stencil or a matrix")
        self.grid = grid
        self.params = params
        self.kernel = kernel
        self.near_band = near_band
        self.stencil = stencil
        self._matrix = matrix
        self.exterior = exterior
        for arr in (stencil, matrix, exterior):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def has_exterior(self) -> bool:
        return self.exterior is not None

    @property
    def exterior_weights(self) -> np.ndarray:
        return self.exterior if self.exterior is not None else np.zeros(self.n_nodes)

    @cached_property
    def total_degree(self) -> np.ndarray:
        """``deg_i + c_i``: row sums including the exterior interaction."""
        return self.degree + self.exterior_weights

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    @property
    def has_dense(self) -> bool:
        return self._matrix is not None or self.n_nodes <= DENSE_LIMIT

    def dense(self) -> np.ndarray:
        """The full ``N x N`` matrix (built from the stencil on first use)."""
        if self._matrix is None:
            if self.n_nodes > DENSE_LIMIT:
                raise MemoryError(
                    f"{self.n_nodes} nodes exceeds the dense limit of {DENSE_LIMIT}")
            mi = self.grid.multi_index
            off = np.asarray(self.grid.shape) - 1
            W = np.empty((self.n_nodes, self.n_nodes))
            for start in range(0, self.n_nodes, 512):
                rows = mi[start:start + 512]
                diff = rows[:, None, :] - mi[None, :, :] + off
                W[start:start + 512] = self.stencil[tuple(np.moveaxis(diff, -1, 0))]
            W.setflags(write=False)
            self._matrix = W
        return self._matrix

    @cached_property
    def degree(self) -> np.ndarray:
        """Row sums ``sum_j w_ij``."""
        if self._matrix is not None or self.stencil is None:
            return self.dense().sum(axis=1)
        return self.apply(np.ones(self.n_nodes))

    @cached_property
    def _stencil_fft(self):
        shape = self.grid.shape
        full = tuple(3 * c - 2 for c in shape)
        fshape = tuple(scipy.fft.next_fast_len(c, real=True) for c in full)
        return fshape, scipy.fft.rfftn(self.stencil, fshape, workers=_FFT_WORKERS)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``(W v)_i = sum_j w_ij v_j``."""
        v = np.asarray(v, dtype=float)
        if self._matrix is not None or self.stencil is None:
            return self.dense() @ v
        shape = self.grid.shape
        fshape, sf = self._stencil_fft
        vf = scipy.fft.rfftn(v.reshape(shape), fshape, workers=_FFT_WORKERS)
        conv = scipy.fft.irfftn(vf * sf, fshape, workers=_FFT_WORKERS)
        sl = tuple(slice(c - 1, 2 * c - 1) for c in shape)
        return conv[sl].ravel()

    def _half_offsets(self):
        st = self.stencil
        shape = self.grid.shape
        for idx in zip(*np.nonzero(st)):
            m = tuple(int(i) - (c - 1) for i, c in zip(idx, shape))
            if m > (0,) * len(m):
                yield m, float(st[idx])

    def flux(self, u: np.ndarray, p: Optional[float] = None) -> np.ndarray:
        """``F_i = sum_j w_ij |u_i - u_j|^(p-2) (u_i - u_j)`` (plus ``c_i phi(u_i)``)."""
        p = self.params.p if p is None else p
        u = np.asarray(u, dtype=float)
        out = self._pair_flux(u, p)
        if self.exterior is not None:
            out = out + self.exterior * _phi(u, p)
        return out

    def _pair_flux(self, u: np.ndarray, p: float) -> np.ndarray:
        if p == 2 and self.stencil is not None and self._matrix is None and not self.has_dense:
            return self.degree * u - self.apply(u)
        if self.has_dense:
            W = self.dense()
            out = np.empty(self.n_nodes)
            for start in range(0, self.n_nodes, 1024):
                sl = slice(start, start + 1024)
                out[sl] = np.sum(W[sl] * _phi(u[sl, None] - u[None, :], p), axis=1)
            return out
        shape = self.grid.shape
        U = u.reshape(shape)
        F = np.zeros(shape)
        for m, w in self._half_offsets():
            a, b = _offset_slices(m, shape)
            f = w * _phi(U[a] - U[b], p)
            F[a] += f
            F[b] -= f
        return F.ravel()

    def pair_energy(self, u: np.ndarray, v: np.ndarray, p: Optional[float] = None) -> float:
        """``sum_{i != j} w_ij |u_i - u_j|^(p-2) (u_i - u_j)(v_i - v_j)``.

        With exterior weights, ``2 sum_i c_i |u_i|^(p-2) u_i v_i`` is added.
        """
        p = self.params.p if p is None else p
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        total = self._pair_energy(u, v, p)
        if self.exterior is not None:
            total += 2.0 * float(np.sum(self.exterior * _phi(u, p) * v))
        return total

    def _pair_energy(self, u: np.ndarray, v: np.ndarray, p: float) -> float:
        if self.has_dense:
            W = self.dense()
            total = 0.0
            for start in range(0, self.n_nodes, 1024):
                sl = slice(start, start + 1024)
                du = u[sl, None] - u[None, :]
                dv = v[sl, None] - v[None, :]
                total += float(np.sum(W[sl] * _phi(du, p) * dv))
            return total
        if p == 2:
            return float(2.0 * (v @ (self.degree * u - self.apply(u))))
        shape = self.grid.shape
        U, V = u.reshape(shape), v.reshape(shape)
        total = 0.0
        for m, w in self._half_offsets():
            a, b = _offset_slices(m, shape)
            total += 2.0 * w * float(np.sum(_phi(U[a] - U[b], p) * (V[a] - V[b])))
        return total

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.dense()[np.ix_(rows, cols)]

    def triples(self) -> Iterator[tuple]:
        """``(i, j, w_ij)`` for ``i < j`` in lexicographic order."""
        W = self.dense()
        for i in range(self.n_nodes):
            for j in range(i + 1, self.n_nodes):
                yield i, j, float(W[i, j])


def _cos_power_integral(theta, a):
    """``integral_0^theta cos(t)^a dt`` for ``|theta| <= pi/2``."""
    b = 0.5 * (a + 1)
    full = 0.5 * scipy.special.beta(0.5, b)
    return np.sign(theta) * full * scipy.special.betainc(0.5, b, np.sin(theta) ** 2)


def exterior_weights(grid: Grid, params: Params) -> np.ndarray:
    """``c_i = h^n integral_{R^n minus box} |x_i - y|^(-n-sp) dy`` in closed form."""
    sp, n = params.sp, grid.dim
    X = grid.nodes
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
    if n == 1:
        x = X[:, 0]
        c = ((hi[0] - x) ** -sp + (x - lo[0]) ** -sp) / sp
    else:
        c = np.zeros(len(X))
        # each side seen from x: distance d along its normal, lateral offsets
        for axis in (0, 1):
            other = 1 - axis
            for d, sign in ((hi[axis] - X[:, axis], 1.0), (X[:, axis] - lo[axis], -1.0)):
                a = np.arctan2(lo[other] - X[:, other], d)
                b = np.arctan2(hi[other] - X[:, other], d)
                ang = _cos_power_integral(b, sp) - _cos_power_integral(a, sp)
                c += d ** -sp * ang / sp
    return c * grid.cell_volume


def assemble_weights(grid: Grid, kernel=None, params: Params = None, near_band: int = 2,
                     exterior: bool = False) -> PairWeightMatrix:
    """Assemble the pair weights of ``kernel`` on ``grid``.

    Parameters
    ----------
    grid : Grid
    kernel : StandardKernel or CoefficientKernel (default standard)
    params : Params; ``params.n`` must match ``grid.dim``
    near_band : Chebyshev cell distance up to which near-field integrals
        replace the midpoint rule.
    exterior : add the exact interaction of every node with ``R^n`` outside
        the box (functions vanishing there); standard kernel only.
    """
    if params is None:
        raise ValueError("params are required")
    if params.n != grid.dim:
        raise ValueError(f"params.n={params.n} but grid has dimension {grid.dim}")
    if near_band < 0:
        raise ValueError("near_band must be nonnegative")
    kernel = StandardKernel() if kernel is None else kernel
    scale = grid.h ** params.kappa
    stencil = standard_stencil(grid.shape, params, near_band) * scale
    if isinstance(kernel, StandardKernel):
        ext = exterior_weights(grid, params) if exterior else None
        return PairWeightMatrix(grid, params, kernel, near_band, stencil=stencil, exterior=ext)
    if exterior:
        raise ValueError("exterior completion is available for the standard kernel only")
    if not isinstance(kernel, CoefficientKernel):
        raise TypeError(f"unsupported kernel {kernel!r}")
    base = PairWeightMatrix(grid, params, StandardKernel(), near_band, stencil=stencil)
    W0 = base.dense()
    abar = _coefficient_average(grid, kernel, params, near_band)
    W = W0 * abar
    np.fill_diagonal(W, 0.0)
    return PairWeightMatrix(grid, params, kernel, near_band, stencil=None, matrix=W)


def _coefficient_average(grid: Grid, kernel: CoefficientKernel, params: Params, near_band: int) -> np.ndarray:
    """Symmetric matrix of effective coefficient values per pair."""
    N, n, lam = grid.n_nodes, grid.dim, params.lam
    X = grid.nodes
    a_fn = kernel.coefficient
    A = np.ones((N, N))
    iu, ju = np.triu_indices(N, k=1)
    vals = np.asarray(a_fn(X[iu], X[ju]), dtype=float)
    vals_t = np.asarray(a_fn(X[ju], X[iu]), dtype=float)
    _validate_coefficient(vals, lam)
    if not np.allclose(vals, vals_t, rtol=1e-12, atol=0.0):
        raise ValueError("coefficient a(x, y) is not symmetric")
    A[iu, ju] = vals

    mi = grid.multi_index
    band = np.max(np.abs(mi[iu] - mi[ju]), axis=1)
    near_pairs = np.flatnonzero(band <= near_band)
    if near_pairs.size:
        order = kernel.order or (8 if n == 1 else 3)
        sub = kernel.subdivisions or (4 if n == 1 else 2)
        t, wt = _gauss(order, sub, -0.5, 0.5)
        alpha = params.p - n - params.sp
        h = grid.h
        if n == 1:
            ox, oy = np.meshgrid(t, t, indexing="ij")
            qw = np.outer(wt, wt).ravel()
            ox, oy = ox.ravel()[:, None], oy.ravel()[:, None]
        else:
            g1, g2, g3, g4 = np.meshgrid(t, t, t, t, indexing="ij")
            qw = np.einsum("i,j,k,l->ijkl", wt, wt, wt, wt).ravel()
            ox = np.stack([g1.ravel(), g2.ravel()], axis=1)
            oy = np.stack([g3.ravel(), g4.ravel()], axis=1)
        for k in near_pairs:
            i, j = iu[k], ju[k]
            xs = X[i] + h * ox
            ys = X[j] + h * oy
            dist = np.linalg.norm(xs - ys, axis=1)
            q = qw * dist ** alpha
            av = np.asarray(a_fn(xs, ys), dtype=float)
            _validate_coefficient(av, lam)
            A[i, j] = np.sum(q * av) / np.sum(q)
    A = np.clip(A, 1.0 / lam, lam)
    A[ju, iu] = A[iu, ju]
    return A


def _validate_coefficient(vals: np.ndarray, lam: float):
    slack = 1e-12
    if np.any(~np.isfinite(vals)) or np.any(vals < (1.0 / lam) * (1 - slack)) or np.any(vals > lam * (1 + slack)):
        raise ValueError(f"coefficient leaves [1/lam, lam] = [{1 / lam}, {lam}]")


# --------------------------------------------------------------------------
# dumps


def dump_grid(grid: Grid, path) -> None:
    """CSV with columns ``index, x[, y]``."""
    cols = ["index"] + ["x", "y"][: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i, pt in enumerate(grid.nodes):
            w.writerow([i] + [repr(float(c)) for c in pt])


def dump_weights(weights: PairWeightMatrix, path) -> None:
    """CSV with columns ``i, j, w`` for ``i < j`` in lexicographic order.

    A ``.npz`` suffix writes the same triples as binary arrays instead.
    """
    W = weights.dense()
    iu, ju = np.triu_indices(weights.n_nodes, k=1)
    if str(path).endswith(".npz"):
        np.savez(path, i=iu, j=ju, w=W[iu, ju], lo=np.asarray(weights.grid.lo),
                 hi=np.asarray(weights.grid.hi), shape=np.asarray(weights.grid.shape))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "w"])
        for i, j in zip(iu, ju):
            w.writerow([int(i), int(j), repr(float(W[i, j]))])


def load_weight_triples(path) -> tuple:
    """Read ``(i, j, w)`` arrays written by :func:`dump_weights`."""
    if str(path).endswith(".npz"):
        data = np.load(path)
        return data["i"], data["j"], data["w"]
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return raw[:, 0].astype(int), raw[:, 1].astype(int), raw[:, 2]
