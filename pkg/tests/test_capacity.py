import numpy as np
import pytest

from nlwiener.capacity import (
    Measure,
    SolverFailure,
    capacity,
    capacity_from_weights,
    check_mecap,
    l_distribution,
    l_potential,
    write_capacity_report,
)
from nlwiener.energy import energy_form
from nlwiener.grid_kernel import (
    CoefficientKernel,
    NodeSet,
    Params,
    StandardKernel,
    assemble_weights,
    build_grid,
    node_set,
    random_cell_coefficient,
)
from nlwiener.regions import Ball, Box
from nlwiener.solver import discrete_energy


def _setup(n=2, p=2.0, cells=16, s=0.5, exterior=False, kernel=None, lam=1.0):
    g = build_grid([[-1, 1]] * n, [cells] * n)
    P = Params(n, s, p, lam)
    W = assemble_weights(g, kernel(g) if callable(kernel) else kernel, P, exterior=exterior)
    c = (0.0,) * n
    return g, W, c


def test_empty_K_has_zero_capacity():
    g, W, c = _setup()
    res = capacity_from_weights(NodeSet.empty(g.n_nodes), node_set(g, Ball(c, 0.8)), W)
    assert res.value == 0.0 and np.all(res.potential.values == 0)


def test_K_must_lie_in_Omega_and_away_from_box_edge():
    g, W, c = _setup()
    with pytest.raises(ValueError):
        capacity_from_weights(node_set(g, Ball(c, 0.6)), node_set(g, Ball(c, 0.3)), W)
    with pytest.raises(ValueError):
        capacity_from_weights(node_set(g, Ball(c, 0.3)), node_set(g, Ball(c, 5.0)), W)


def test_K_equal_Omega_gives_indicator():
    g, W, c = _setup()
    K = node_set(g, Ball(c, 0.5))
    pot = l_potential(K, K, W)
    np.testing.assert_array_equal(pot.values, K.mask.astype(float))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_potential_sandwich_and_energy_identity(p):
    g, W, c = _setup(p=p, cells=12)
    K, Om = node_set(g, Ball(c, 0.25)), node_set(g, Ball(c, 0.75))
    res = capacity_from_weights(K, Om, W)
    v = res.potential.values
    assert v.min() >= -1e-8 and v.max() <= 1 + 1e-8
    assert res.value == pytest.approx(energy_form(v, v, W), rel=1e-10)
    assert res.value == pytest.approx(sum(res.energy_breakdown.values()), rel=1e-10)


@pytest.mark.parametrize("p", [2.0, 2.5])
def test_monotonicity(p):
    g, W, c = _setup(p=p, cells=12)
    Om = node_set(g, Ball(c, 0.8))
    caps = [capacity_from_weights(node_set(g, Ball(c, r)), Om, W).value for r in (0.1, 0.3, 0.5)]
    assert caps[0] <= caps[1] <= caps[2]
    K = node_set(g, Ball(c, 0.2))
    outer = [capacity_from_weights(K, node_set(g, Ball(c, R)), W).value for R in (0.4, 0.6, 0.8)]
    assert outer[0] >= outer[1] >= outer[2]


@pytest.mark.parametrize("n,s,p", [(1, 0.3, 2.0), (2, 0.5, 2.0), (2, 0.4, 3.0)])
@pytest.mark.parametrize("lam", [0.5, 4.0])
def test_dilation_covariance(n, s, p, lam):
    g = build_grid([[-1, 1]] * n, [10] * n)
    P = Params(n, s, p)
    c = (0.0,) * n
    gl = g.scaled(lam)
    r1 = capacity(node_set(g, Ball(c, 0.2)), node_set(g, Ball(c, 0.7)), StandardKernel(), P, grid=g,
                  exterior=True)
    r2 = capacity(node_set(gl, Ball(c, 0.2 * lam)), node_set(gl, Ball(c, 0.7 * lam)), StandardKernel(), P,
                  grid=gl, exterior=True)
    assert r2.value == pytest.approx(lam ** (n - s * p) * r1.value, rel=1e-10)


def test_clamping_never_increases_energy():
    g, W, c = _setup(p=2.5, cells=10)
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.uniform(-0.5, 1.5, g.n_nodes)
        assert discrete_energy(np.clip(v, 0, 1), W) <= discrete_energy(v, W) * (1 + 1e-14)


# --------------------------------------------------------------------------
# distributions


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_distribution_mass_identity(p):
    g, W, c = _setup(p=p, cells=12)
    K, Om = node_set(g, Ball(c, 0.3)), node_set(g, Ball(c, 0.75))
    res = capacity_from_weights(K, Om, W)
    mu = l_distribution(res.potential, K, W)
    scale = 2.0 * W.total_degree
    assert np.all(mu.masses / scale >= -10 * 1e-8)
    assert np.all(mu.masses[~K.mask] == 0)
    assert mu.total == pytest.approx(energy_form(res.potential.values, res.potential.values, W), rel=1e-6)
    from nlwiener.solver import residual

    r = residual(res.potential.values, W)
    free = (Om - K).mask
    assert np.max(np.abs(r[free]) / scale[free]) <= 1e-8


def test_distribution_flags_negative_mass():
    g, W, c = _setup(cells=8)
    K = node_set(g, Ball(c, 0.3))
    with pytest.raises(SolverFailure):
        l_distribution(-K.mask.astype(float), K, W)


def test_mecap_equality_and_disjoint():
    g, W, c = _setup(cells=14)
    K, Om = node_set(g, Ball(c, 0.3)), node_set(g, Ball(c, 0.75))
    res = capacity_from_weights(K, Om, W)
    mu = l_distribution(res.potential, K, W)
    rep = check_mecap(mu, node_set(g, Ball(c, 0.5)), K, Om, W)
    assert rep.holds and rep.lhs == pytest.approx(rep.rhs, rel=1e-6)
    far = node_set(g, Box((0.45, 0.45), (0.7, 0.7)))
    rep = check_mecap(mu, far, K, Om, W)
    assert rep.lhs == 0 and rep.holds


def test_mecap_random_sweep_with_coefficients():
    violations = 0
    rng = np.random.default_rng(11)
    for trial in range(10):
        g = build_grid([[-1, 1]] * 2, [12, 12])
        P = Params(2, 0.5, 2.0, 2.0)
        W = assemble_weights(g, CoefficientKernel(random_cell_coefficient(g, 2.0, seed=trial)), P)
        cx, cy = rng.uniform(-0.2, 0.2, 2)
        K = node_set(g, Ball((cx, cy), rng.uniform(0.15, 0.35)))
        Om = node_set(g, Ball((0.0, 0.0), 0.8))
        K = K & Om
        res = capacity_from_weights(K, Om, W)
        mu = l_distribution(res.potential, K, W)
        half = NodeSet((g.nodes @ rng.standard_normal(2)) > 0) & Om
        violations += not check_mecap(mu, half, K, Om, W).holds
    assert violations == 0


def test_measure_helpers():
    mu = Measure(np.array([1.0, 2.0, 0.0]), NodeSet(np.array([True, True, False])))
    assert mu.total == 3.0 and mu.mass_of(NodeSet(np.array([False, True, True]))) == 2.0


def test_capacity_requires_grid_for_kernel_spec():
    g, W, c = _setup(cells=8)
    with pytest.raises(ValueError):
        capacity(node_set(g, Ball(c, 0.3)), node_set(g, Ball(c, 0.7)), StandardKernel())


def test_capacity_slope_1d():
    # cap(B_r, B_1) ~ r^(n-sp) for small r when n > sp
    P = Params(1, 0.3, 2.0)
    caps, radii = [], [0.02, 0.04, 0.08]
    for r in radii:
        h = radii[0] / 8
        cells = int(round(4 / h))
        g = build_grid([-2, 2], [cells])
        caps.append(capacity(node_set(g, Ball((0.0,), r, closed=True)), node_set(g, Ball((0.0,), 1.0)),
                             StandardKernel(), P, grid=g, exterior=True).value)
    slope = np.polyfit(np.log(radii), np.log(caps), 1)[0]
    assert slope == pytest.approx(0.4, abs=0.06)


def test_capacity_report_csv(tmp_path):
    path = tmp_path / "cap.csv"
    write_capacity_report([{"K": "ball", "Omega": "ball", "s": 0.5, "p": 2.0, "value": 1.25,
                            "iterations": 1, "residual": 0.0}], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "K,Omega,s,p,value,iterations,residual"
    assert lines[1] == "ball,ball,0.5,2.0,1.25,1,0.0"
