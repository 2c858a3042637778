"""Wolff potentials, Wiener profiles and ball-capacity scaling laws."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .capacity import Measure, capacity_from_weights
from .grid_kernel import (Grid, Params, assemble_weights, build_grid, local_grid, node_set)
from .regions import Ball, Region
from .solver import SolverConfig


# --------------------------------------------------------------------------
# radial measure profiles


class RadialProfile:
    """``rho -> mu(B_rho(x0))`` (open balls).

    Subclasses provide ``mass`` plus the data the quadrature needs:
    ``breakpoints`` (kinks and jumps), ``support_start`` (mass vanishes on
    ``(0, support_start)``) and ``small_power = (c, e)`` meaning
    ``mu(B_rho) = c rho^e`` on ``(0, small_radius)`` when the support
    reaches the centre.
    """

    def mass(self, rho):  # pragma: no cover - abstract
        raise NotImplementedError

    def breakpoints(self, r: float) -> np.ndarray:
        return np.empty(0)

    @property
    def support_start(self) -> float:
        return 0.0

    @property
    def small_power(self):
        return None

    @property
    def small_radius(self) -> float:
        return np.inf


@dataclass(frozen=True)
class ZeroProfile(RadialProfile):
    def mass(self, rho):
        return np.zeros_like(np.asarray(rho, dtype=float))

    @property
    def small_power(self):
        return (0.0, 0.0)


@dataclass(frozen=True)
class ShellProfile(RadialProfile):
    """Mass ``m`` concentrated at distance ``a`` from the centre."""

    total: float = 1.0
    distance: float = 1.0

    def mass(self, rho):
        return np.where(np.asarray(rho) > self.distance, self.total, 0.0)

    def breakpoints(self, r):
        return np.array([self.distance])

    @property
    def support_start(self):
        return self.distance


@dataclass(frozen=True)
class UniformBallProfile(RadialProfile):
    """Mass ``m`` spread uniformly over ``B_R(x0)`` in dimension ``n``."""

    total: float = 1.0
    radius: float = 1.0
    n: int = 1

    def mass(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.total * np.minimum(rho / self.radius, 1.0) ** self.n

    def breakpoints(self, r):
        return np.array([self.radius])

    @property
    def small_power(self):
        return (self.total * self.radius ** -self.n, float(self.n))

    @property
    def small_radius(self):
        return self.radius


@dataclass(frozen=True)
class PowerProfile(RadialProfile):
    """``mu(B_rho) = c rho^e`` for every ``rho``."""

    c: float = 1.0
    exponent: float = 1.0

    def mass(self, rho):
        return self.c * np.asarray(rho, dtype=float) ** self.exponent

    @property
    def small_power(self):
        return (self.c, self.exponent)


@dataclass(frozen=True)
class EmpiricalProfile(RadialProfile):
    """Cumulative node masses of a :class:`Measure` around ``center``."""

    distances: tuple = ()
    masses: tuple = ()

    @classmethod
    def from_measure(cls, measure: Measure, grid: Grid, center) -> "EmpiricalProfile":
        center = np.asarray(center, dtype=float).reshape(-1)
        d = np.linalg.norm(grid.nodes - center, axis=1)
        keep = measure.masses != 0
        order = np.argsort(d[keep], kind="stable")
        return cls(tuple(d[keep][order].tolist()), tuple(measure.masses[keep][order].tolist()))

    def mass(self, rho):
        rho = np.asarray(rho, dtype=float)
        d = np.asarray(self.distances)
        cm = np.concatenate([[0.0], np.cumsum(self.masses)])
        return cm[np.searchsorted(d, rho, side="left")]

    def breakpoints(self, r):
        d = np.unique(np.asarray(self.distances))
        return d[(d > 0) & (d < r)]

    @property
    def support_start(self):
        d = np.asarray(self.distances)
        return float(d.min()) if d.size and d.min() > 0 else 0.0

    @property
    def small_power(self):
        d = np.asarray(self.distances)
        atom = float(np.sum(np.asarray(self.masses)[d == 0])) if d.size else 0.0
        return (atom, 0.0)

    @property
    def small_radius(self):
        d = np.asarray(self.distances)
        pos = d[d > 0]
        return float(pos.min()) if pos.size else np.inf


@dataclass(frozen=True)
class WolffResult:
    value: Optional[float]
    divergent: bool


def _gauss_log_panels(a: float, b: float, panels: int, order: int = 10):
    """Nodes/weights for ``integral_a^b f(rho) drho / rho`` on log panels."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(np.log(a), np.log(b), panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * x).ravel()
    wt = (half[:, None] * w).ravel()
    return np.exp(t), wt


def wolff_potential(profile: RadialProfile, r: float, params: Params, panels: int = 200) -> WolffResult:
    """``integral_0^r (mu(B_rho) / rho^(n-sp))^(1/(p-1)) drho / rho``.

    The range is cut at the profile's breakpoints and covered by ``panels``
    logarithmic Gauss panels in total. Below the support or inside the
    power-law core the integral is evaluated in closed form; a core where
    the integrand does not decay flags divergence.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    kappa, q = params.kappa, 1.0 / (params.p - 1)

    def F(rho):
        m = np.maximum(profile.mass(rho), 0.0)
        return (m / rho ** kappa) ** q

    lo = profile.support_start
    core = 0.0
    if lo >= r:
        return WolffResult(0.0, False)
    if lo <= 0:
        c, e = profile.small_power or (None, None)
        if c is None:
            raise ValueError("profile reaching the centre must declare its small-radius power law")
        if c == 0:
            lo = min(profile.small_radius, r)
        else:
            beta = (e - kappa) * q
            if beta <= 0:
                return WolffResult(None, True)
            lo = min(profile.small_radius, r)
            core = c ** q * lo ** beta / beta
    if lo >= r:
        return WolffResult(core, False)
    cuts = np.unique(np.concatenate([[lo, r], [b for b in profile.breakpoints(r) if lo < b < r]]))
    span = np.log(cuts[-1] / cuts[0])
    total = core
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(round(panels * np.log(b / a) / span)))
        rho, w = _gauss_log_panels(a, b, k)
        total += float(np.sum(w * F(rho)))
    return WolffResult(total, False)


# --------------------------------------------------------------------------
# Wiener profiles


@dataclass
class WienerProfile:
    radii: np.ndarray
    caps: np.ndarray
    integrand: np.ndarray
    spacings: np.ndarray
    params: Params
    empty: bool = False
    d_counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def scaled(self) -> np.ndarray:
        """``integrand_k * rho_k``."""
        return self.integrand * self.radii

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "cap", "integrand", "integrand_rho"])
            for row in zip(self.radii, self.caps, self.integrand, self.scaled):
                w.writerow([repr(float(x)) for x in row])


def radius_ladder(rho_min: float, rho_max: float, levels: Optional[int] = None, ratio: float = 2.0) -> np.ndarray:
    """Increasing radii ``rho_max / ratio^k`` inside ``[rho_min, rho_max]``."""
    if not 0 < rho_min <= rho_max:
        raise ValueError("need 0 < rho_min <= rho_max")
    if levels is None:
        levels = int(np.floor(np.log(rho_max / rho_min) / np.log(ratio) + 1e-9)) + 1
    radii = rho_max / ratio ** np.arange(levels)
    if radii[-1] < rho_min * (1 - 1e-12):
        raise ValueError("ladder leaves [rho_min, rho_max]")
    return radii[::-1]


def wiener_profile(omega: Region, x0, rho_min: float, rho_max: float, params: Params,
                   levels: Optional[int] = None, config: Optional[SolverConfig] = None,
                   cells_per_rho: int = 8, spacing: Optional[float] = None,
                   align: str = "corner", half_width: float = 3.0, ratio: float = 2.0,
                   exterior: bool = True) -> WienerProfile:
    """Capacities ``cap(closed B_rho minus Omega, B_2rho)`` on a radius ladder.

    Each level gets its own grid of half-width ``half_width * rho``: spacing
    ``rho / cells_per_rho`` (scale-matched) or the fixed ``spacing``.
    ``align`` places ``x0`` on a cell corner or on a node.
    """
    n = params.n
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    radii = radius_ladder(rho_min, rho_max, levels, ratio)
    caps, hs, counts = [], [], []
    for rho in radii:
        h = spacing if spacing is not None else rho / cells_per_rho
        if rho < 2 * h * (1 - 1e-12):
            raise ValueError(f"radius {rho} is below two grid spacings ({h})")
        grid = local_grid(x0, half_width * rho, h, n, align)
        W = assemble_weights(grid, None, params, exterior=exterior)
        D = node_set(grid, Ball(tuple(x0), rho, closed=True) - omega)
        B = node_set(grid, Ball(tuple(x0), 2 * rho))
        caps.append(capacity_from_weights(D & B, B, W, config).value)
        hs.append(h)
        counts.append(D.count)
    caps = np.asarray(caps)
    integrand = (caps / radii ** params.kappa) ** (1.0 / (params.p - 1)) / radii
    return WienerProfile(radii, caps, integrand, np.asarray(hs), params,
                         empty=bool(np.all(np.asarray(counts) == 0)),
                         d_counts=np.asarray(counts))


@dataclass(frozen=True)
class WienerIntegral:
    value: float
    diagnostic: float
    spread: float
    slope: float
    note: str


def relative_spread(values) -> float:
    """``max_k |x_k / mean - 1|`` (0 for an empty or all-zero sample)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0 or np.all(x == 0):
        return 0.0
    m = x.mean()
    return float(np.max(np.abs(x / m - 1.0)))


def wiener_integral(profile: WienerProfile) -> WienerIntegral:
    """Trapezoid rule in ``log rho`` plus a divergence diagnostic.

    The diagnostic is the geometric mean of ``integrand * rho`` (zero if any
    level is zero); ``slope`` is the fitted exponent ``e`` in
    ``integrand * rho ~ rho^e``. A positive stable diagnostic with ``e``
    near zero points to a divergent integral at 0; ``e > 0`` to convergence.
    """
    y = profile.scaled
    t = np.log(profile.radii)
    value = float(integrate.trapezoid(y, t)) if y.size > 1 else 0.0
    if y.size == 0 or np.any(y <= 0):
        return WienerIntegral(value, 0.0, 0.0, float("nan"), "zero levels present")
    diag = float(np.exp(np.mean(np.log(y))))
    slope = float(np.polyfit(t, np.log(y), 1)[0]) if y.size > 1 else float("nan")
    spread = relative_spread(y)
    if abs(slope) < 0.1:
        note = "stable positive diagnostic: consistent with divergence"
    elif slope > 0:
        note = "diagnostic decays as rho -> 0: consistent with convergence"
    else:
        note = "diagnostic grows as rho -> 0"
    return WienerIntegral(value, diag, spread, slope, note)


# --------------------------------------------------------------------------
# ball capacity scaling


@dataclass
class ScalingReport:
    regime: str
    radii: list
    caps: list
    R: float
    slope: float
    expected_slope: float
    log_products: list
    spread: float
    nodes: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def ball_capacity_scaling(params: Params, radii: Sequence[float], R: float = 1.0,
                          config: Optional[SolverConfig] = None, cells_per_min_radius: int = 16,
                          exterior: bool = True) -> ScalingReport:
    """``cap(closed B_r, B_R)`` across radii on one grid.

    Reports the log-log slope (expected ``n - sp`` when ``n > sp`` and ``0``
    when ``n < sp``) and, for ``n = sp``, the spread of
    ``cap * log(R/r)^(p-1)``.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 3:
        raise ValueError("need at least three radii")
    if np.any(radii > R / 2 * (1 + 1e-12)):
        raise ValueError("radii must not exceed R/2")
    n = params.n
    h = radii[0] / cells_per_min_radius
    cells = int(np.ceil(R / h - 1e-9)) + 1
    half = cells * h
    grid = build_grid([[-half, half]] * n, [2 * cells] * n)
    W = assemble_weights(grid, None, params, exterior=exterior)
    Om = node_set(grid, Ball((0.0,) * n, R))
    caps = np.array([capacity_from_weights(node_set(grid, Ball((0.0,) * n, r, closed=True)), Om, W,
                                           config).value for r in radii])
    slope = float(np.polyfit(np.log(radii), np.log(caps), 1)[0])
    kappa = params.kappa
    if abs(kappa) < 1e-12:
        regime, expected = "critical", 0.0
    elif kappa > 0:
        regime, expected = "subcritical", kappa
    else:
        regime, expected = "supercritical", 0.0
    prod = caps * np.log(R / radii) ** (params.p - 1)
    return ScalingReport(regime, radii.tolist(), caps.tolist(), R, slope, expected,
                         prod.tolist(), relative_spread(prod), grid.n_nodes)
