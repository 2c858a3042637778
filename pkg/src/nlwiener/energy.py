"""Discrete energy forms, Gagliardo seminorms, nonlocal tails and power means."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate

from .grid_kernel import Grid, NodeSet, PairWeightMatrix, Params


# --------------------------------------------------------------------------
# far-field models


@dataclass(frozen=True)
class ZeroFarField:
    """``u = 0`` outside the computational box."""

    variant = "zero"


@dataclass(frozen=True)
class ConstantFarField:
    """``u = c`` outside the computational box."""

    c: float
    variant = "constant"


@dataclass(frozen=True)
class RadialPowerFarField:
    """``u(y) = c |y - center|^(-q)`` outside the computational box."""

    c: float
    q: float
    center: tuple
    variant = "radial_power"


FarFieldModel = Union[ZeroFarField, ConstantFarField, RadialPowerFarField]


def _far_field_parts(ff) -> tuple:
    """``(amplitude, q, center)`` so that ``|u| = amplitude |y - center|^(-q)``."""
    if isinstance(ff, ZeroFarField):
        return 0.0, 0.0, None
    if isinstance(ff, ConstantFarField):
        return abs(float(ff.c)), 0.0, None
    if isinstance(ff, RadialPowerFarField):
        return abs(float(ff.c)), float(ff.q), np.asarray(ff.center, dtype=float)
    raise TypeError(f"unknown far-field model {ff!r}")


@dataclass
class DiscreteFunction:
    """Nodal values on a grid plus a model of the function outside the box."""

    grid: Grid
    values: np.ndarray
    far_field: FarFieldModel = field(default_factory=ZeroFarField)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.grid.n_nodes:
            raise ValueError(f"expected {self.grid.n_nodes} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        self.values = vals
        _far_field_parts(self.far_field)


def _values(u, grid: Optional[Grid] = None) -> np.ndarray:
    if isinstance(u, DiscreteFunction):
        if grid is not None and u.grid != grid:
            raise ValueError("function and weights live on different grids")
        return u.values
    vals = np.asarray(u, dtype=float).reshape(-1)
    if grid is not None and vals.shape[0] != grid.n_nodes:
        raise ValueError("function and weights live on different grids")
    return vals


# --------------------------------------------------------------------------
# energy


def energy_form(u, v, W: PairWeightMatrix, params: Optional[Params] = None) -> float:
    """Sum over ordered pairs ``i != j`` of ``w_ij phi_p(u_i - u_j)(v_i - v_j)``.

    Each unordered pair is counted twice, matching the double integral.
    """
    p = (params or W.params).p
    return W.pair_energy(_values(u, W.grid), _values(v, W.grid), p)


def gagliardo_seminorm_p(u, region: NodeSet, W: PairWeightMatrix) -> float:
    """``sum_{i != j in region} w_ij |u_i - u_j|^p`` (the p-th power)."""
    vals = _values(u, W.grid)
    idx = region.indices
    if idx.size < 2:
        return 0.0
    p = W.params.p
    if idx.size == W.n_nodes:
        return W.pair_energy(vals, vals, p)
    sub = W.block(idx, idx)
    x = vals[idx]
    total = 0.0
    for start in range(0, idx.size, 1024):
        sl = slice(start, start + 1024)
        total += float(np.sum(sub[sl] * np.abs(x[sl, None] - x[None, :]) ** p))
    return total


# --------------------------------------------------------------------------
# tails


def _ray_box_interval(x0, d, lo, hi):
    """Parameter interval ``[t0, t1]`` with ``x0 + t d`` in the box, t >= 0."""
    t0, t1 = 0.0, np.inf
    for k in range(len(x0)):
        if abs(d[k]) < 1e-300:
            if x0[k] < lo[k] or x0[k] > hi[k]:
                return None
            continue
        a = (lo[k] - x0[k]) / d[k]
        b = (hi[k] - x0[k]) / d[k]
        a, b = min(a, b), max(a, b)
        t0, t1 = max(t0, a), min(t1, b)
    if t0 >= t1:
        return None
    return t0, t1


def _exterior_pieces(x0, d, r, lo, hi):
    """Radial intervals along the ray outside both ``B_r`` and the box."""
    box = _ray_box_interval(x0, d, lo, hi)
    if box is None:
        return [(r, np.inf)]
    t0, t1 = box
    pieces = []
    if t0 > r:
        pieces.append((r, t0))
    pieces.append((max(r, t1), np.inf))
    return pieces


def far_field_exterior_integral(far_field, grid: Grid, x0, r: float, params: Params) -> float:
    """``integral over R^n minus (box union B_r(x0))`` of ``|u|^(p-1) |y - x0|^(-n-sp)``."""
    amp, q, center = _far_field_parts(far_field)
    if amp == 0.0:
        return 0.0
    n, sp, p = params.n, params.sp, params.p
    e = sp + q * (p - 1)
    if e <= 0:
        raise ValueError(
            f"far field |y|^(-{q}) makes the tail integral diverge for s={params.s}, p={p}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
    if center is not None:
        inside = np.all(center > lo) and np.all(center < hi)
        if not inside and q * (p - 1) >= n:
            raise ValueError("radial far field is not integrable near its centre")
    same_center = center is None or np.allclose(center, x0, rtol=0, atol=1e-14)
    scale = amp ** (p - 1)

    def radial(a, b, d):
        if same_center:
            # integral of rho^(-1-e) from a to b
            return (a ** -e - (0.0 if np.isinf(b) else b ** -e)) / e

        def f(rho):
            y = x0 + rho * d
            return rho ** (n - 1) * np.linalg.norm(y - center) ** (-q * (p - 1)) * rho ** (-n - sp)

        val, _ = integrate.quad(f, a, b, limit=200)
        return val

    def along(d):
        return sum(radial(a, b, d) for a, b in _exterior_pieces(x0, d, r, lo, hi))

    if n == 1:
        return scale * (along(np.array([1.0])) + along(np.array([-1.0])))

    corners = [np.array([cx, cy]) for cx in (lo[0], hi[0]) for cy in (lo[1], hi[1])]
    breaks = sorted(float(np.mod(np.arctan2(*(c - x0)[::-1]), 2 * np.pi)) for c in corners)
    val, _ = integrate.quad(lambda th: along(np.array([np.cos(th), np.sin(th)])),
                            0.0, 2 * np.pi, points=breaks, limit=400, epsabs=1e-13, epsrel=1e-11)
    return scale * val


@dataclass(frozen=True)
class TailParts:
    grid_sum: float
    far_field: float
    bracket: float
    value: float
    truncation_bound: float


def tail_parts(u: DiscreteFunction, x0, r: float, params: Params) -> TailParts:
    """Tail with its grid and analytic pieces and a midpoint error estimate.

    ``truncation_bound`` bounds the error of the bracketed integral from the
    cell-midpoint sum: a first-order term from cells straddling the sphere
    ``|y - x0| = r`` and the second-order midpoint term elsewhere, both taken
    with ``sup |u|^(p-1)``.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    grid = u.grid
    n, sp, p = params.n, params.sp, params.p
    if n != grid.dim:
        raise ValueError("params.n does not match the grid")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if grid.distance_to_box(x0) >= r:
        raise ValueError("B_r(x0) does not meet the computational box")
    dist = np.linalg.norm(grid.nodes - x0, axis=1)
    outside = dist >= r
    ws = np.abs(u.values[outside]) ** (p - 1) * dist[outside] ** (-n - sp)
    grid_sum = float(np.sum(ws)) * grid.cell_volume
    ff = far_field_exterior_integral(u.far_field, grid, x0, r, params)
    bracket = grid_sum + ff
    value = (r ** sp * bracket) ** (1.0 / (p - 1))

    sup = float(np.max(np.abs(u.values))) ** (p - 1) if u.values.size else 0.0
    h = grid.h
    delta = 0.5 * h * np.sqrt(n)
    omega = 2.0 if n == 1 else 2 * np.pi
    inner = max(r - delta, 0.5 * r)
    shell = omega * (inner ** -sp - (r + delta) ** -sp) / sp
    e2 = n + sp
    midpoint = e2 * (e2 + 1) / 24.0 * h * h * omega * inner ** (-sp - 2) / (sp + 2)
    return TailParts(grid_sum, ff, bracket, value, sup * (shell + midpoint))


def tail(u: DiscreteFunction, x0, r: float, params: Params) -> float:
    """``(r^sp integral_{R^n minus B_r(x0)} |u|^(p-1) |y - x0|^(-n-sp))^(1/(p-1))``."""
    return tail_parts(u, x0, r, params).value


def phi_average(u, gamma: float, x0, R: float, grid: Optional[Grid] = None) -> float:
    """``(mean over nodes of B_R(x0) of |u_i|^gamma)^(1/gamma)``."""
    if gamma == 0:
        raise ValueError("gamma must be nonzero")
    if isinstance(u, DiscreteFunction):
        grid = u.grid
    if grid is None:
        raise ValueError("a grid is required for raw value arrays")
    vals = np.abs(_values(u, grid))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    inside = np.linalg.norm(grid.nodes - x0, axis=1) < R
    if not np.any(inside):
        raise ValueError("no nodes in B_R(x0)")
    a = vals[inside]
    if gamma < 0 and np.any(a == 0):
        raise ValueError("zero value with negative gamma")
    # scale by the max for overflow safety
    m = float(a.max())
    if m == 0:
        return 0.0
    return m * float(np.mean((a / m) ** gamma)) ** (1.0 / gamma)
