"""Boundary-regularity experiments on parametric domain families."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .capacity import capacity_from_weights
from .energy import (ConstantFarField, DiscreteFunction, ZeroFarField, phi_average, tail)
from .grid_kernel import Grid, NodeSet, Params, assemble_weights, build_grid, node_set
from .potential import wiener_integral, wiener_profile
from .regions import Ball, Cone, Cusp, DyadicComb, HalfSpace, Region
from .solver import DirichletProblem, Solution, SolverConfig, solve


# --------------------------------------------------------------------------
# domain families


@dataclass(frozen=True)
class DomainFamily:
    """A domain ``Omega`` inside the unit ball with boundary point ``x0 = 0``.

    ``variant`` is one of ``half_space``, ``cone``, ``power_cusp``,
    ``punctured_ball``, ``measure_dense``; ``parameter`` is the aperture,
    cusp exponent or density fraction where relevant.
    """

    variant: str
    n: int
    parameter: Optional[float] = None

    VARIANTS = ("half_space", "cone", "power_cusp", "punctured_ball", "measure_dense")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown domain family {self.variant!r}")
        if self.n not in (1, 2):
            raise ValueError("families are defined for n = 1, 2")
        if self.variant == "power_cusp":
            if self.n != 2:
                raise ValueError("power cusps need n = 2")
            if self.parameter is None or self.parameter <= 1:
                raise ValueError("cusp exponent must exceed 1")
        if self.variant == "cone" and not (self.parameter and 0 < self.parameter < 2 * np.pi):
            raise ValueError("cone aperture must lie in (0, 2 pi)")
        if self.variant == "measure_dense" and not (self.parameter and 0 < self.parameter < 1):
            raise ValueError("density fraction must lie in (0, 1)")

    @property
    def anchor(self) -> tuple:
        return (0.0,) * self.n

    @property
    def align(self) -> str:
        """Puncture and comb put ``x0`` on a node; the others on a cell corner."""
        return "center" if self.variant in ("punctured_ball", "measure_dense") else "corner"

    def exterior(self) -> Region:
        """The closed complement piece attached at ``x0``."""
        zero, back = self.anchor, (-1.0,) + (0.0,) * (self.n - 1)
        if self.variant == "half_space":
            return ~HalfSpace(zero, (1.0,) + (0.0,) * (self.n - 1))
        if self.variant == "cone":
            return Cone(zero, back, self.parameter)
        if self.variant == "power_cusp":
            return Cusp(zero, back, self.parameter)
        if self.variant == "punctured_ball":
            return Ball(zero, 1e-9, closed=True)
        return DyadicComb(zero, self.parameter)

    def omega(self) -> Region:
        return Ball(self.anchor, 1.0) - self.exterior()

    def grid(self, resolution: int, margin: float = 1.25) -> Grid:
        """Grid with ``resolution`` cells per unit length covering ``[-margin, margin]^n``."""
        h = 1.0 / resolution
        k = int(np.ceil(margin * resolution))
        if self.align == "corner":
            return build_grid([[-k * h, k * h]] * self.n, [2 * k] * self.n)
        return build_grid([[-(k + 0.5) * h, (k + 0.5) * h]] * self.n, [2 * k + 1] * self.n)


@dataclass(frozen=True)
class BoundaryData:
    """Continuous data ``g`` evaluated at nodes.

    ``ramp``: ``g = x_1``; ``clamped_linear``: ``clip(1 - x_1, 0, 1)``;
    ``bump``: ``max(0, 1 - |x - center| / radius)``; ``constant``: ``value``.
    """

    kind: str
    value: float = 1.0
    center: tuple = (0.0,)
    radius: float = 0.5

    def __call__(self, points: np.ndarray) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        if self.kind == "ramp":
            return x[:, 0].copy()
        if self.kind == "clamped_linear":
            return np.clip(1.0 - x[:, 0], 0.0, 1.0)
        if self.kind == "bump":
            c = np.broadcast_to(np.asarray(self.center, dtype=float), (x.shape[1],))
            return np.maximum(0.0, 1.0 - np.linalg.norm(x - c, axis=1) / self.radius)
        if self.kind == "constant":
            return np.full(len(x), float(self.value))
        raise ValueError(f"unknown boundary data {self.kind!r}")

    def at(self, x0) -> float:
        return float(self(np.atleast_2d(np.asarray(x0, dtype=float)))[0])


# --------------------------------------------------------------------------
# observables


def _ball_mask(grid: Grid, x0, r: float, closed: bool = False) -> np.ndarray:
    d = np.linalg.norm(grid.nodes - np.asarray(x0, dtype=float).reshape(-1), axis=1)
    return d <= r if closed else d < r


def boundary_oscillation(sol: Solution, Omega: NodeSet, x0, radii: Sequence[float]) -> list:
    """``(rho, sup, inf)`` of ``u`` over free nodes in ``B_rho(x0)``, radii decreasing."""
    grid = sol.u.grid
    h = grid.h
    out = []
    for rho in sorted(radii, reverse=True):
        if rho < 2 * h * (1 - 1e-12):
            raise ValueError(f"radius {rho} is below two grid spacings")
        m = _ball_mask(grid, x0, rho) & Omega.mask
        if not np.any(m):
            raise ValueError(f"no free nodes in B_{rho}(x0)")
        vals = sol.u.values[m]
        out.append((float(rho), float(vals.max()), float(vals.min())))
    return out


def compute_Ml(u, l: float, r: float, x0, grid: Optional[Grid] = None) -> float:
    """``max over nodes of B_r(x0) of (u_i - l)_+`` (constrained nodes included)."""
    if isinstance(u, Solution):
        u = u.u
    if isinstance(u, DiscreteFunction):
        grid, vals = u.grid, u.values
    else:
        vals = np.asarray(u, dtype=float)
    m = _ball_mask(grid, x0, r)
    if not np.any(m):
        raise ValueError("no nodes in B_r(x0)")
    return float(np.max(np.maximum(vals[m] - l, 0.0)))


def _shift_far_field(ff, fn):
    if isinstance(ff, ConstantFarField):
        return ConstantFarField(float(fn(ff.c)))
    return ZeroFarField()


@dataclass(frozen=True)
class KeyLemmaReport:
    defined: bool
    capacity: float
    quotient: float
    ratio: float
    M_rho: float
    M_4rho: float
    tail: float


def check_key_lemma(sol: Solution, l: float, rho: float, x0, config: Optional[SolverConfig] = None) -> KeyLemmaReport:
    """Empirical constant in ``cap(D_rho, B_2rho) <= C rho^(n-sp) * quotient^(p-1)``.

    ``quotient = (M_l(4 rho) - M_l(rho) + Tail((u_{l,4rho})_-; x0, 4rho)) / M_l(4 rho)``
    with ``u_{l,r} = M_l(r) - (u - l)_+``; ``ratio`` is the left side divided
    by ``rho^(n-sp) quotient^(p-1)``. ``defined`` is false when
    ``M_l(4 rho) = 0``.
    """
    W = sol.problem.weights
    params = W.params
    grid = W.grid
    u = sol.u
    M1 = compute_Ml(u, l, rho, x0)
    M4 = compute_Ml(u, l, 4 * rho, x0)
    if M4 == 0:
        return KeyLemmaReport(False, float("nan"), float("nan"), float("nan"), M1, M4, float("nan"))
    neg = np.maximum(np.maximum(u.values - l, 0.0) - M4, 0.0)
    ff = _shift_far_field(u.far_field, lambda c: max(max(c - l, 0.0) - M4, 0.0))
    T = tail(DiscreteFunction(grid, neg, ff), x0, 4 * rho, params)
    quotient = (M4 - M1 + T) / M4
    Wstd = W if W.kernel.variant == "standard" else assemble_weights(grid, None, params)
    D = NodeSet(_ball_mask(grid, x0, rho, closed=True) & sol.problem.constrained)
    B = NodeSet(_ball_mask(grid, x0, 2 * rho))
    cap = capacity_from_weights(D & B, B, Wstd, config).value
    bound = rho ** params.kappa * quotient ** (params.p - 1)
    ratio = cap / bound if bound > 0 else (0.0 if cap == 0 else float("inf"))
    return KeyLemmaReport(True, cap, quotient, ratio, M1, M4, T)


@dataclass(frozen=True)
class HarnackReport:
    lhs: float
    rhs: float
    ratio: float
    m: float
    note: str = ""


def weak_harnack_diagnostic(sol: Solution, x0, R: float, t: float) -> HarnackReport:
    """``Phi_t(u_m^-; B_{R/2}) / (min_{B_{R/4}} u_m^- + Tail((u_m^-)_-; x0, R))``.

    ``m`` is the minimum of ``u`` over constrained nodes of ``B_R(x0)``
    (``+inf`` when there are none) and ``u_m^- = min(u, m)``.
    """
    u = sol.u
    grid = u.grid
    params = sol.problem.params
    n, sp, p = params.n, params.sp, params.p
    if not t > 0:
        raise ValueError("t must be positive")
    if sp < n and t >= (p - 1) * n / (n - sp):
        raise ValueError("t must stay below (p-1) n / (n - sp)")
    inR = _ball_mask(grid, x0, R)
    if np.any(u.values[inR] < 0):
        raise ValueError("u must be nonnegative on B_R(x0)")
    cons = inR & sol.problem.constrained
    m = float(u.values[cons].min()) if np.any(cons) else np.inf
    um = np.minimum(u.values, m)
    lhs = phi_average(um, t, x0, R / 2, grid)
    q = _ball_mask(grid, x0, R / 4)
    if not np.any(q):
        raise ValueError("no nodes in B_{R/4}(x0)")
    ff = _shift_far_field(u.far_field, lambda c: max(-min(c, m), 0.0))
    T = tail(DiscreteFunction(grid, np.maximum(-um, 0.0), ff), x0, R, params)
    rhs = float(um[q].min()) + T
    if rhs == 0:
        return HarnackReport(lhs, rhs, 0.0 if lhs == 0 else float("inf"), m,
                             "0/0" if lhs == 0 else "zero denominator")
    return HarnackReport(lhs, rhs, lhs / rhs, m)


# --------------------------------------------------------------------------
# probes


@dataclass
class ResolutionRecord:
    resolution: int
    h: float
    oscillation: list
    defect: list
    smallest_radius: float
    smallest_defect: float
    wiener_radii: list
    wiener_scaled: list
    wiener_diagnostic: float
    iterations: int
    residual: float


@dataclass
class ProbeReport:
    family: str
    n: int
    g_at_x0: float
    records: list = field(default_factory=list)
    classification: str = "inconclusive"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["resolution", "rho", "sup", "inf"])
            for rec in self.records:
                for rho, sup, inf in rec.oscillation:
                    w.writerow([rec.resolution, repr(rho), repr(sup), repr(inf)])


def boundary_defect(sol: Solution, Omega: NodeSet, x0, radii: Sequence[float], g0: float) -> list:
    """``(rho, max |u - g(x0)|)`` over free nodes in ``B_rho(x0)``."""
    return [(rho, max(abs(sup - g0), abs(inf - g0)))
            for rho, sup, inf in boundary_oscillation(sol, Omega, x0, radii)]


def classify(records: Sequence[ResolutionRecord], data_range: float) -> str:
    """Regular-consistent, irregular-consistent or inconclusive.

    Uses the attainment defect ``max |u - g(x0)|`` at the smallest radius
    resolved at each resolution, and the Wiener diagnostic.
    """
    if data_range == 0:
        return "regular-consistent"
    if len(records) < 3:
        return "inconclusive"
    defects = np.array([r.smallest_defect for r in records])
    diags = np.array([r.wiener_diagnostic for r in records])
    gap = 0.1 * data_range
    shrinking = bool(np.all(np.diff(defects) < 0))
    bounded_below = bool(diags[-1] > 0 and diags[-1] >= 0.5 * diags[0])
    decaying = bool(np.all(np.diff(diags) < 0) and diags[-1] <= 0.5 * diags[0])
    if shrinking and bounded_below:
        return "regular-consistent"
    if np.all(defects > gap) and decaying:
        return "irregular-consistent"
    return "inconclusive"


def probe_regularity(family: DomainFamily, g: BoundaryData, params: Params,
                     resolutions: Sequence[int], radii: Sequence[float],
                     config: Optional[SolverConfig] = None,
                     wiener_radii: Sequence[float] = (0.125, 0.25)) -> ProbeReport:
    """Solve on each resolution and record attainment and the Wiener diagnostic."""
    if params.n != family.n:
        raise ValueError("params.n does not match the family")
    x0 = family.anchor
    omega = family.omega()
    report = ProbeReport(family.variant, family.n, g.at(x0))
    data_range = 0.0
    for res in resolutions:
        grid = family.grid(res)
        W = assemble_weights(grid, None, params)
        free = node_set(grid, omega)
        gv = g(grid.nodes)
        sol = solve(DirichletProblem(W, free, gv), config)
        data_range = sol.problem.data_range()
        h = grid.h
        usable = [r for r in radii if r >= 2 * h * (1 - 1e-12)]
        osc = boundary_oscillation(sol, free, x0, usable)
        defect = [(rho, max(abs(sup - report.g_at_x0), abs(inf - report.g_at_x0))) for rho, sup, inf in osc]
        wr = sorted(wiener_radii)
        prof = wiener_profile(omega, x0, wr[0], wr[-1], params, levels=len(wr),
                              ratio=wr[-1] / wr[0] if len(wr) == 2 else 2.0,
                              config=config, spacing=h, align=family.align)
        wi = wiener_integral(prof)
        report.records.append(ResolutionRecord(
            res, h, osc, defect, defect[-1][0], defect[-1][1], prof.radii.tolist(),
            prof.scaled.tolist(), wi.diagnostic, sol.iterations, sol.final_residual))
    report.classification = classify(report.records, data_range)
    return report
