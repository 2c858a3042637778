"""Discrete Dirichlet problems for the nonlocal p-energy.

The discrete energy is ``J(u) = (1/p) sum_{i != j} w_ij |u_i - u_j|^p`` with
values fixed on constrained nodes; its gradient is the residual
``r_i = 2 sum_j w_ij |u_i - u_j|^(p-2)(u_i - u_j)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .energy import DiscreteFunction, FarFieldModel, ZeroFarField, _values
from .grid_kernel import NodeSet, PairWeightMatrix, Params


class ConvergenceError(RuntimeError):
    """Raised when the solver stops before reaching the residual tolerance.

    ``best`` holds the lowest-energy iterate seen.
    """

    def __init__(self, message: str, best: "Solution"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule and line-search parameters.

    ``residual_tol`` bounds the normalised residual
    ``max_i |r_i| / (2 deg_i range(g)^(p-1))`` over free nodes, where
    ``deg_i = sum_j w_ij``. ``method`` selects Newton-type steps with the
    regularised Hessian (``"newton"``) or steps preconditioned by the
    p = 2 degree diagonal (``"gradient"``).
    """

    residual_tol: float = 1e-8
    max_iters: int = 500
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    method: str = "newton"

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 1:
            raise ValueError("line-search parameters must lie in (0, 1)")
        if self.method not in ("newton", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class DirichletProblem:
    """Minimise the energy over ``free`` nodes with the other values fixed.

    ``boundary_values`` holds one value per node; entries on free nodes are
    ignored (they serve as an initial guess only when ``initial`` is used).
    """

    weights: PairWeightMatrix
    free: NodeSet
    boundary_values: np.ndarray
    far_field: FarFieldModel = field(default_factory=ZeroFarField)

    def __post_init__(self):
        g = np.asarray(self.boundary_values, dtype=float).reshape(-1)
        if g.shape[0] != self.weights.n_nodes or self.free.mask.shape[0] != self.weights.n_nodes:
            raise ValueError("problem arrays do not match the grid")
        if not np.all(np.isfinite(g[~self.free.mask])):
            raise ValueError("constrained values must be finite")
        self.boundary_values = g

    @property
    def params(self) -> Params:
        return self.weights.params

    @property
    def constrained(self) -> np.ndarray:
        return ~self.free.mask

    def data_range(self) -> float:
        g = self.boundary_values[self.constrained]
        return float(g.max() - g.min()) if g.size else 0.0


@dataclass
class Solution:
    u: DiscreteFunction
    iterations: int
    final_residual: float
    final_energy: float
    problem: DirichletProblem
    energy_history: list = field(default_factory=list)
    tol: float = 1e-8
    raw_residual: float = 0.0


def _phi(t, p):
    return np.sign(t) * np.abs(t) ** (p - 1)


def residual(u, W: PairWeightMatrix, params: Optional[Params] = None) -> np.ndarray:
    """Gradient of ``J`` with respect to every nodal value."""
    p = (params or W.params).p
    return 2.0 * W.flux(_values(u, W.grid), p)


def discrete_energy(u, W: PairWeightMatrix, params: Optional[Params] = None) -> float:
    """``J(u) = (1/p) sum_{i != j} w_ij |u_i - u_j|^p``."""
    p = (params or W.params).p
    vals = _values(u, W.grid)
    return W.pair_energy(vals, vals, p) / p


def residual_scale(problem: DirichletProblem) -> np.ndarray:
    """Per-node normaliser ``2 deg_i range^(p-1)`` (1 where degenerate)."""
    rng = problem.data_range()
    p = problem.params.p
    scale = 2.0 * problem.weights.total_degree * (rng ** (p - 1) if rng > 0 else 1.0)
    return np.where(scale > 0, scale, 1.0)


def normalized_residual(u, problem: DirichletProblem) -> float:
    free = problem.free.mask
    if not np.any(free):
        return 0.0
    r = residual(u, problem.weights)
    return float(np.max(np.abs(r[free]) / residual_scale(problem)[free]))


def rounding_floor(u: np.ndarray, W: PairWeightMatrix, fi: np.ndarray, p: float) -> np.ndarray:
    """Residual change caused by perturbing every difference by a few ulps.

    For ``p < 2`` the flux ``|t|^(p-2) t`` is steep at ``t = 0``, and nearly
    tied values (which the exact minimiser can have for ``p`` close to 1)
    cannot be resolved beyond this floor in double precision.
    """
    if p >= 2 or fi.size == 0 or not W.has_dense:
        return np.zeros(fi.size)
    rows = W.dense()[fi]
    d = np.abs(u[fi, None] - u[None, :])
    e = 4 * np.finfo(float).eps * np.maximum(np.abs(u[fi, None]), np.abs(u[None, :]))
    floor = 2.0 * np.sum(rows * ((d + e) ** (p - 1) - d ** (p - 1)), axis=1)
    if W.has_exterior:
        a = np.abs(u[fi])
        e0 = 4 * np.finfo(float).eps * a
        floor += 2.0 * W.exterior[fi] * ((a + e0) ** (p - 1) - a ** (p - 1))
    return floor


def _effective_residual(u, problem: DirichletProblem, fi: np.ndarray, scale: np.ndarray) -> tuple:
    """``(floor-adjusted, raw)`` normalised residuals over ``fi``."""
    if fi.size == 0:
        return 0.0, 0.0
    p = problem.params.p
    r = np.abs(residual(u, problem.weights)[fi])
    floor = rounding_floor(u, problem.weights, fi, p)
    raw = float(np.max(r / scale))
    return float(np.max(np.maximum(r - floor, 0.0) / scale)), raw


def _check_structure(problem: DirichletProblem):
    W = problem.weights
    free = problem.free.mask
    if not np.any(free):
        return
    if np.any(W.total_degree[free] <= 0):
        raise ValueError("isolated free node: no positive weight to any node")
    if W.has_exterior:
        return
    if not np.any(~free):
        raise ValueError("free component without a constrained anchor")
    if W.has_dense:
        # connectivity of each free component to the constrained set
        A = W.dense() > 0
        graph = scipy.sparse.csr_matrix(A)
        _, labels = scipy.sparse.csgraph.connected_components(graph, directed=False)
        anchored = np.zeros(labels.max() + 1, dtype=bool)
        anchored[np.unique(labels[~free])] = True
        if not np.all(anchored[labels[free]]):
            raise ValueError("free component without a constrained anchor")


def _solve_linear(problem: DirichletProblem, tol: float) -> np.ndarray:
    """Exact p = 2 minimiser (dense Cholesky or FFT-backed CG)."""
    W = problem.weights
    free = problem.free.mask
    g = problem.boundary_values.copy()
    g[free] = 0.0
    fi = np.flatnonzero(free)
    u = g.copy()
    if W.has_dense:
        Wd = W.dense()
        L = -Wd[np.ix_(fi, fi)]
        L[np.diag_indices_from(L)] += W.total_degree[fi]
        rhs = Wd[fi] @ g
        u[fi] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(L, check_finite=False), rhs)
        return u
    deg = W.total_degree[fi]

    def mv(x):
        full = np.zeros(W.n_nodes)
        full[fi] = x
        return deg * x - W.apply(full)[fi]

    op = scipy.sparse.linalg.LinearOperator((fi.size, fi.size), matvec=mv, dtype=float)
    pre = scipy.sparse.linalg.LinearOperator((fi.size, fi.size), matvec=lambda x: x / deg, dtype=float)
    rhs = W.apply(g)[fi]
    x0 = np.full(fi.size, float(np.mean(problem.boundary_values[~free])))
    x, info = scipy.sparse.linalg.cg(op, rhs, x0=x0, rtol=min(1e-3 * tol, 1e-11), atol=0.0,
                                     maxiter=20000, M=pre)
    u[fi] = x
    return u


def _abs_pow_change(a: np.ndarray, b: np.ndarray, gap: np.ndarray, p: float) -> np.ndarray:
    """``|a|^p - |b|^p`` with ``gap = a - b``, accurate when ``a`` and ``b`` are close."""
    x, y = np.abs(a), np.abs(b)
    out = x ** p - y ** p
    same = (np.sign(a) == np.sign(b)) & (y > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(same, np.sign(b) * gap / np.where(y > 0, y, 1.0), 0.0)
    close = same & (np.abs(ratio) < 0.5)
    out[close] = y[close] ** p * np.expm1(p * np.log1p(ratio[close]))
    return out


def _energy_change(W: PairWeightMatrix, u: np.ndarray, fi: np.ndarray, step: np.ndarray, p: float) -> float:
    """``J(u + step) - J(u)`` for a step supported on ``fi``, summed pair by pair.

    Each pair term is evaluated as a difference of powers, so the result is
    accurate relative to the change itself rather than to ``J``.
    """
    rows = W.dense()[fi]
    full = np.zeros(u.size)
    full[fi] = step
    d = u[fi, None] - u[None, :]
    delta = step[:, None] - full[None, :]
    terms = rows * _abs_pow_change(d + delta, d, delta, p)
    free = np.zeros(u.size, dtype=bool)
    free[fi] = True
    # ordered pairs: free-free rows already hold both orientations, free-constrained need doubling
    total = float(np.sum(terms[:, free])) + 2.0 * float(np.sum(terms[:, ~free]))
    if W.has_exterior:
        c = W.exterior[fi]
        total += 2.0 * float(np.sum(c * _abs_pow_change(u[fi] + step, u[fi], step, p)))
    return total / p


def _hessian_ff(W: PairWeightMatrix, u: np.ndarray, fi: np.ndarray, p: float, delta: float) -> np.ndarray:
    """Regularised Hessian of ``J`` restricted to free nodes."""
    Wd = W.dense()
    rows = Wd[fi]
    d = np.abs(u[fi, None] - u[None, :])
    c = 2.0 * (p - 1) * rows * np.maximum(d, delta) ** (p - 2)
    H = -c[:, fi]
    diag = c.sum(axis=1)
    if W.has_exterior:
        diag += 2.0 * (p - 1) * W.exterior[fi] * np.maximum(np.abs(u[fi]), delta) ** (p - 2)
    H[np.diag_indices_from(H)] = diag
    return H


def solve(problem: DirichletProblem, config: Optional[SolverConfig] = None,
          initial: Optional[np.ndarray] = None) -> Solution:
    """Minimise the discrete energy with the constrained values fixed.

    p = 2 is solved directly. Other exponents start from the p = 2 solution
    (or ``initial``) and descend with backtracking line search; accepted
    iterates never increase the energy.
    """
    config = config or SolverConfig()
    W = problem.weights
    p = problem.params.p
    free = problem.free.mask
    _check_structure(problem)
    gvals = problem.boundary_values[~free]
    u = problem.boundary_values.copy()
    tol = config.residual_tol

    fi = np.flatnonzero(free)
    scale = residual_scale(problem)[fi]

    def make(u, it, hist):
        res, raw = _effective_residual(u, problem, fi, scale)
        e = discrete_energy(u, W)
        return Solution(DiscreteFunction(W.grid, u, problem.far_field), it, res, e,
                        problem, hist, tol, raw)

    if not np.any(free):
        return make(u, 0, [discrete_energy(u, W)])
    if gvals.size and gvals.max() == gvals.min():
        u[free] = gvals[0]
        return make(u, 0, [0.0])

    if initial is not None:
        u[free] = np.asarray(initial, dtype=float).reshape(-1)[free]
    else:
        u = _solve_linear(problem, tol)
    if p == 2 and initial is None:
        sol = make(u, 1, [discrete_energy(u, W)])
        if sol.final_residual > tol:
            raise ConvergenceError(f"linear solve residual {sol.final_residual:.3e} > {tol:.1e}", sol)
        return sol
    if not W.has_dense:
        raise MemoryError("p != 2 requires a grid within the dense limit")

    rng = problem.data_range()
    # curvature floor: tiny for p < 2 (near-ties are steep), moderate for p > 2
    delta = (1e-12 if p < 2 else 1e-6) * rng
    energy = discrete_energy(u, W)
    hist = [energy]
    grad = residual(u, W)[fi]
    res = float(np.max(np.abs(grad) / scale))
    eff = _effective_residual(u, problem, fi, scale)[0]
    it = 0
    while eff > tol and it < config.max_iters:
        it += 1
        if config.method == "newton":
            H = _hessian_ff(W, u, fi, p, delta)
            try:
                step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H, check_finite=False), grad)
            except np.linalg.LinAlgError:
                step = -grad / scale
        else:
            step = -grad / scale * rng
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad / scale * rng, -float(grad @ (grad / scale)) * rng
        t = 1.0
        accepted = False
        for _ in range(config.max_backtracks):
            trial = u.copy()
            trial[fi] += t * step
            change = _energy_change(W, u, fi, t * step, p)
            if change <= config.armijo * t * slope:
                accepted = True
                break
            # at the rounding floor accept non-increasing energy with a smaller residual
            if change <= 0:
                g_new = residual(trial, W)[fi]
                if np.max(np.abs(g_new) / scale) < res:
                    accepted = True
                    break
            t *= config.backtrack
        if not accepted:
            break
        u = trial
        energy = energy + change
        hist.append(energy)
        grad = residual(u, W)[fi]
        res = float(np.max(np.abs(grad) / scale))
        eff = _effective_residual(u, problem, fi, scale)[0]
    sol = make(u, it, hist)
    if sol.final_residual > tol:
        raise ConvergenceError(
            f"stopped after {it} iterations with residual {sol.final_residual:.3e} > {tol:.1e}", sol)
    return sol


# --------------------------------------------------------------------------
# contract checks


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    max_violation: float
    threshold: float


def check_comparison(u: Solution, v: Solution) -> ComparisonReport:
    """Report ``max_i (v_i - u_i)`` for solutions with ordered boundary data."""
    pu, pv = u.problem, v.problem
    if pu.weights.grid != pv.weights.grid or not np.array_equal(pu.free.mask, pv.free.mask):
        raise ValueError("solutions belong to different problem geometries")
    viol = float(np.max(v.u.values - u.u.values))
    rng = max(pu.data_range(), pv.data_range(), 1.0)
    threshold = 2.0 * max(u.tol, v.tol) * rng
    return ComparisonReport(viol <= threshold, viol, threshold)


@dataclass(frozen=True)
class SupersolutionReport:
    holds: bool
    min_residual: float
    failing_nodes: np.ndarray


def check_supersolution(u, W: PairWeightMatrix, free: NodeSet, tol: float = 1e-8) -> SupersolutionReport:
    """Holds iff the normalised residual is ``>= -tol`` on every node of ``free``."""
    vals = _values(u, W.grid)
    r = residual(vals, W)
    rng = float(vals.max() - vals.min()) if vals.size else 0.0
    p = W.params.p
    scale = 2.0 * W.total_degree * (rng ** (p - 1) if rng > 0 else 1.0)
    scale = np.where(scale > 0, scale, 1.0)
    rn = r / scale
    idx = free.indices
    bad = idx[rn[idx] < -tol]
    return SupersolutionReport(bad.size == 0, float(rn[idx].min()) if idx.size else 0.0, bad)


def dump_solution(sol: Solution, path) -> None:
    """CSV with columns ``index, x[, y], value, residual``."""
    grid = sol.u.grid
    r = residual(sol.u, sol.problem.weights)
    coords = ["x", "y"][: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + coords + ["value", "residual"])
        for i, pt in enumerate(grid.nodes):
            w.writerow([i] + [repr(float(c)) for c in pt] + [repr(float(sol.u.values[i])), repr(float(r[i]))])
