"""Capacities, potentials and their distributions as constrained minimisers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import DiscreteFunction, energy_form
from .grid_kernel import NodeSet, PairWeightMatrix, Params, StandardKernel, assemble_weights
from .solver import DirichletProblem, SolverConfig, Solution, residual, solve


@dataclass
class CapacityResult:
    """Minimal energy, the minimiser and its energy split by pair class.

    ``energy_breakdown`` keys: ``K-free``, ``K-outside``, ``free-free``,
    ``free-outside`` (pair classes with a nonzero difference) and
    ``exterior`` when the weights carry the exterior completion.
    """

    value: float
    potential: DiscreteFunction
    energy_breakdown: dict
    iterations: int
    residual: float
    solution: Optional[Solution] = None


@dataclass(frozen=True)
class Measure:
    masses: np.ndarray
    support: NodeSet

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))

    def mass_of(self, E: NodeSet) -> float:
        return float(np.sum(self.masses[E.mask]))


class SolverFailure(RuntimeError):
    """A significantly negative distribution mass (solver did not converge)."""


def _validate(K: NodeSet, Omega: NodeSet, weights: PairWeightMatrix):
    n = weights.n_nodes
    if K.mask.shape[0] != n or Omega.mask.shape[0] != n:
        raise ValueError("node sets do not match the grid")
    if not K.issubset(Omega):
        raise ValueError("K must be contained in Omega")
    if np.any(Omega.mask & weights.grid.boundary_layer()):
        raise ValueError("Omega must keep one empty cell layer at the box boundary")


def potential_problem(K: NodeSet, Omega: NodeSet, weights: PairWeightMatrix) -> DirichletProblem:
    """``v = 1`` on ``K``, ``v = 0`` off ``Omega``, free on ``Omega \\ K``."""
    _validate(K, Omega, weights)
    g = K.mask.astype(float)
    return DirichletProblem(weights, Omega - K, g)


def _breakdown(v: np.ndarray, K: NodeSet, Omega: NodeSet, W: PairWeightMatrix) -> dict:
    p = W.params.p
    classes = {"K": K.mask, "free": (Omega - K).mask, "outside": ~Omega.mask}
    out = {}
    if not W.has_dense:
        return out
    Wd = W.dense()
    for a, b in (("K", "free"), ("K", "outside"), ("free", "free"), ("free", "outside")):
        ia, ib = np.flatnonzero(classes[a]), np.flatnonzero(classes[b])
        if ia.size == 0 or ib.size == 0:
            out[f"{a}-{b}"] = 0.0
            continue
        blk = Wd[np.ix_(ia, ib)] * np.abs(v[ia, None] - v[None, ib]) ** p
        # ordered pairs: both orientations of each mixed pair
        out[f"{a}-{b}"] = float(blk.sum()) * (1.0 if a == b else 2.0)
    if W.has_exterior:
        out["exterior"] = 2.0 * float(np.sum(W.exterior * np.abs(v) ** p))
    return out


def capacity_from_weights(K: NodeSet, Omega: NodeSet, weights: PairWeightMatrix,
                          config: Optional[SolverConfig] = None) -> CapacityResult:
    """Capacity with pre-assembled weights (reused across calls on one grid)."""
    _validate(K, Omega, weights)
    if K.count == 0:
        v = np.zeros(weights.n_nodes)
        return CapacityResult(0.0, DiscreteFunction(weights.grid, v), {}, 0, 0.0)
    sol = solve(potential_problem(K, Omega, weights), config)
    v = sol.u.values
    value = energy_form(v, v, weights)
    return CapacityResult(value, sol.u, _breakdown(v, K, Omega, weights), sol.iterations,
                          sol.final_residual, sol)


def capacity(K: NodeSet, Omega: NodeSet, weights_or_kernel, params: Optional[Params] = None,
             config: Optional[SolverConfig] = None, grid=None, exterior: bool = False) -> CapacityResult:
    """Discrete capacity of ``K`` relative to ``Omega``.

    ``weights_or_kernel`` is either a :class:`PairWeightMatrix` or a kernel
    spec; in the latter case ``grid`` and ``params`` are required and
    ``exterior`` selects the exterior completion of the weights.
    """
    if isinstance(weights_or_kernel, PairWeightMatrix):
        W = weights_or_kernel
    else:
        if grid is None or params is None:
            raise ValueError("grid and params are required to assemble weights")
        W = assemble_weights(grid, weights_or_kernel, params, exterior=exterior)
    return capacity_from_weights(K, Omega, W, config)


def l_potential(K: NodeSet, Omega: NodeSet, weights: PairWeightMatrix,
                config: Optional[SolverConfig] = None) -> DiscreteFunction:
    """The capacity minimiser for the kernel behind ``weights``."""
    return capacity_from_weights(K, Omega, weights, config).potential


def l_distribution(potential, K: NodeSet, W: PairWeightMatrix, tol: float = 1e-8,
                   Omega: Optional[NodeSet] = None) -> Measure:
    """Residual of the potential restricted to ``K``.

    Masses below ``-10 tol`` (normalised like the solver residual) raise
    :class:`SolverFailure`.
    """
    vals = potential.values if isinstance(potential, DiscreteFunction) else np.asarray(potential)
    r = residual(vals, W)
    scale = 2.0 * W.total_degree  # potentials have data range 1
    scale = np.where(scale > 0, scale, 1.0)
    masses = np.where(K.mask, r, 0.0)
    worst = float(np.min(masses / scale)) if K.count else 0.0
    if worst < -10 * tol:
        raise SolverFailure(f"negative mass {worst:.3e} below -10*tol")
    return Measure(masses, K)


@dataclass(frozen=True)
class MecapReport:
    holds: bool
    lhs: float
    rhs: float
    lam: float


def check_mecap(mu: Measure, E: NodeSet, K: NodeSet, Omega: NodeSet, weights: PairWeightMatrix,
                config: Optional[SolverConfig] = None, tolerance: float = 0.05) -> MecapReport:
    """``mu(E) <= lam * cap(K & E, Omega)`` with the standard-kernel capacity."""
    params = weights.params
    lhs = mu.mass_of(E)
    if isinstance(weights.kernel, StandardKernel):
        Wstd = weights
    else:
        Wstd = assemble_weights(weights.grid, StandardKernel(), params, weights.near_band,
                                exterior=weights.has_exterior)
    rhs = capacity_from_weights(K & E, Omega, Wstd, config).value
    return MecapReport(lhs <= params.lam * rhs * (1 + tolerance), lhs, rhs, params.lam)


def write_capacity_report(rows, path) -> None:
    """CSV with ``K, Omega, s, p, value, iterations, residual`` per call."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "Omega", "s", "p", "value", "iterations", "residual"])
        for r in rows:
            w.writerow([r["K"], r["Omega"], repr(float(r["s"])), repr(float(r["p"])),
                        repr(float(r["value"])), int(r["iterations"]), repr(float(r["residual"]))])
