import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlwiener.grid_kernel import Params
from nlwiener.inequalities import (
    C_GRID,
    EXACT_POINTS,
    DisproofCandidate,
    IneqParams,
    IneqReport,
    SampleSpec,
    check_alg_ineq2,
    check_alg_ineq3,
    check_alg_ineq_suff,
    draw_positive_samples,
    draw_power_samples,
    draw_signed_samples,
    estimate_existential_constants,
    estimate_functional_constants,
    minimal_C,
    pow_diff,
    random_test_functions,
    require_feasible,
)

SMALL = SampleSpec(count=20_000, seed=3)


# --------------------------------------------------------------------------
# parameters and sampling


def test_param_identities():
    P = IneqParams(2.5, 0.7)
    assert P.gamma == 0.7 + 2.5 - 1
    assert P.tau == pytest.approx(P.gamma / 1.5)
    assert P.q == pytest.approx(2.5 * P.gamma / (2.5 - P.tau))
    assert IneqParams.from_gamma(2.0, 1.3).beta == pytest.approx(0.3)


@pytest.mark.parametrize("kw", [{"p": 1.0, "beta": 1.0}, {"p": 2.0, "beta": 1.0, "d": 0.0},
                                {"p": 2.0, "beta": 1.0, "l": -1.0}])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        IneqParams(**kw)


def test_gamma_window():
    lo, hi = IneqParams.from_gamma(2.0, 1.2, n=2, s=0.5).gamma_window()
    assert lo == 1.0 and hi == pytest.approx(4 / 3)
    with pytest.raises(ValueError):
        IneqParams.from_gamma(2.0, 1.4, n=2, s=0.5).require_wolff()
    with pytest.raises(ValueError):
        IneqParams(2.0, 1.0).gamma_window()


@pytest.mark.parametrize("beta", [-1.5, 0.8])
def test_power_samples_respect_domain(beta):
    P = IneqParams(2.0, beta)
    S = draw_power_samples(P, SMALL)
    a, b, l = S["a"], S["b"], S["l"]
    lo, hi = SMALL.value_range
    if beta > 0:
        assert np.all(a >= np.maximum(l, lo) * (1 - 1e-12)) and np.all(b >= np.maximum(l, lo) * (1 - 1e-12))
    else:
        assert np.all(a <= np.maximum(l, lo) * (1 + 1e-12)) and np.all(b <= np.maximum(l, lo) * (1 + 1e-12))
    assert np.all(S["eta1"] >= 0) and np.mean(S["eta1"] == 0) > 0.05
    assert np.any(a == b)


def test_samples_are_deterministic():
    a = draw_signed_samples(SMALL)
    b = draw_signed_samples(SampleSpec(count=SMALL.count, seed=SMALL.seed))
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    c = draw_signed_samples(SampleSpec(count=SMALL.count, seed=SMALL.seed + 1))
    assert not np.array_equal(a["A"], c["A"])


# --------------------------------------------------------------------------
# extended-precision building blocks against mpmath


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(-1e-2, 1e2), st.floats(-3, 3))
def test_pow_diff_vs_mpmath(y, rel, e):
    x = y * (1 + rel)
    if x <= 0:
        return
    mp.mp.dps = 50
    X, Y = mp.mpf(x), mp.mpf(y)
    ref = Y ** e * mp.expm1(e * mp.log(X / Y))
    got = mp.mpf(float(pow_diff(x, y, e, x - y)))
    assert abs(got - ref) <= 1e-13 * abs(ref) + mp.mpf(10) ** -300


# --------------------------------------------------------------------------
# exact-constant lemmas


def test_ineq2_equality_case():
    P = IneqParams(2.0, 1.0, d=0.3, l=0.5)
    S = draw_power_samples(P, SMALL)
    # f(t) = t - l and F(t) = t + d, so both sides equal (a - b)^2
    rep = check_alg_ineq2(P, SMALL, data=S)
    assert rep.violations == 0 and abs(rep.worst_margin) < 1e-15


def test_ineq2_tie_gives_zero_margin():
    P = IneqParams(3.0, -1.5)
    S = {"a": np.array([2.0, 1e-3]), "b": np.array([2.0, 1e-3]), "d": np.array([1.0, 1e-2]),
         "l": np.array([5.0, 5.0]), "eta1": np.ones(2), "eta2": np.ones(2)}
    rep = check_alg_ineq2(P, SMALL, data=S)
    assert rep.violations == 0 and rep.worst_margin == 0.0


@pytest.mark.parametrize("p,beta", EXACT_POINTS["alg-ineq2"])
def test_ineq2_sweep(p, beta):
    assert check_alg_ineq2(IneqParams(p, beta), SMALL).violations == 0


def test_ineq2_rejects_log_case():
    with pytest.raises(ValueError):
        check_alg_ineq2(IneqParams(1.5, -0.5), SMALL)


def test_ineq3_hand_example():
    S = {"A": np.array([1.0]), "B": np.array([0.0]), "eta1": np.array([1.0]), "eta2": np.array([1.0])}
    rep = check_alg_ineq3(SMALL, 2.0, data=S)
    # first inequality: 1 >= 0.5 * 1 - 0, relative margin 0.5
    assert rep.violations == 0 and rep.worst_margin == pytest.approx(0.5)


@pytest.mark.parametrize("p", EXACT_POINTS["alg-ineq3"])
def test_ineq3_sweep(p):
    assert check_alg_ineq3(SMALL, p).violations == 0


def test_suff_hand_example():
    S = {"a": np.array([4.0]), "b": np.array([1.0])}
    rep = check_alg_ineq_suff(SMALL, 2.0, 1.0, data=S)
    # 2.25 <= 4: relative margin (4 - 2.25) / 4
    assert rep.violations == 0 and rep.worst_margin == pytest.approx(1.75 / 4)
    S = {"a": np.array([3.0]), "b": np.array([3.0])}
    assert check_alg_ineq_suff(SMALL, 2.0, 1.0, data=S).worst_margin == 0.0


@pytest.mark.parametrize("p,gamma", EXACT_POINTS["alg-ineq-suff"])
def test_suff_sweep(p, gamma):
    assert check_alg_ineq_suff(SMALL, p, gamma).violations == 0


def test_suff_preconditions():
    for g in (0.0, 2.5):
        with pytest.raises(ValueError):
            check_alg_ineq_suff(SMALL, 2.0, g)


def test_checker_detects_false_inequality():
    # swapping the sides of a strict inequality must produce violations
    S = draw_positive_samples(SampleSpec(count=2000, seed=1))
    a, b = S["a"], S["b"]
    swapped = {"a": np.maximum(a, b), "b": np.minimum(a, b)}
    rep = check_alg_ineq_suff(SMALL, 2.0, 1.0, data=swapped)
    assert rep.violations == 0
    from nlwiener.inequalities import _compare

    lhs = (2.0 / 1.0) ** 2 * (np.sqrt(swapped["a"]) - np.sqrt(swapped["b"])) ** 2
    rhs = swapped["a"] ** -1 * (swapped["a"] - swapped["b"]) ** 2
    mask, worst = _compare(lhs, rhs, False, 1e-12, 1.0)
    assert mask.sum() > 1000 and worst < 0


def _mp_ineq2(a, b, d, p, beta):
    a, b, d, p, beta = (mp.mpf(x) for x in (a, b, d, p, beta))
    g = beta + p - 1
    f = lambda t: (t + d) ** beta / beta
    F = lambda t: p / g * (t + d) ** (g / p)
    lhs1 = abs(a - b) ** (p - 2) * (a - b) * (f(a) - f(b)) if a != b else mp.mpf(0)
    rhs1 = abs(F(a) - F(b)) ** p
    return lhs1, rhs1


@pytest.mark.parametrize("p,beta", [(1.5, -2.0), (3.0, 0.5), (2.0, 2.0)])
def test_ineq2_verdicts_confirmed_in_high_precision(p, beta):
    mp.mp.dps = 60
    P = IneqParams(p, beta)
    S = draw_power_samples(P, SampleSpec(count=300, seed=5))
    for i in range(300):
        lhs, rhs = _mp_ineq2(S["a"][i], S["b"][i], S["d"][i], p, beta)
        scale = max(abs(lhs), abs(rhs), 1)
        assert (lhs - rhs) / scale >= -mp.mpf(10) ** -40


# --------------------------------------------------------------------------
# existential lemmas


def test_minimal_C_hand_values():
    lhs = np.array([1.0, 0.0, 2.0])
    main = np.array([2.0, 1.0, 1.0])
    weight = np.array([1.0, 4.0, 0.0])
    # c=1: excesses 1, 1, -1 -> C = max(1/1, 1/4) = 1
    assert minimal_C(lhs, main, weight, 1.0) == pytest.approx(1.0)
    # c=1/4: only the second sample is short, by 1/4 at weight 4
    assert minimal_C(lhs, main, weight, 0.25) == pytest.approx(1 / 16)
    assert minimal_C(lhs, main, weight, 0.0) == 0.0
    assert minimal_C(lhs, main, weight, 4.0) == float("inf")


def test_existential_trivial_tie():
    P = IneqParams(2.0, 1.0, d=1.0, l=0.5)
    S = {k: np.array([2.0]) for k in ("a", "b")}
    S.update(d=np.array([1.0]), l=np.array([0.5]), eta1=np.array([1.0]), eta2=np.array([1.0]))
    from nlwiener.inequalities import _terms_ineq1

    lhs, main, weight = _terms_ineq1(P, S)
    assert lhs[0] == 0 and main[0] == 0 and weight[0] == 0
    assert minimal_C(lhs, main, weight, 1.0) == 0.0


def test_ineq1_headline_pair():
    rep = estimate_existential_constants("alg-ineq1", IneqParams(2.0, 1.0), SMALL, headline_c=1 / 8)
    assert rep.estimated_c == 1 / 8 and np.isfinite(rep.estimated_C) and rep.stability <= 2
    assert [f["c"] for f in rep.frontier] == sorted(C_GRID, reverse=True)
    assert all(f["C_2N"] >= f["C_N"] for f in rep.frontier)


@pytest.mark.parametrize("lemma,P", [
    ("alg-ineq1", IneqParams(3.0, -0.5)),
    ("alg-ineq-log", IneqParams(2.0, -1.0)),
    ("alg-ineq-log", IneqParams(1.5, -0.5)),
    ("alg-ineq-wolff", IneqParams.from_gamma(2.0, 1.2, n=2, s=0.5)),
    ("alg-ineq-wolff", IneqParams.from_gamma(2.0, 1.4, n=2, s=0.6)),
])
def test_existential_frontier_nonempty(lemma, P):
    rep = require_feasible(estimate_existential_constants(lemma, P, SMALL))
    assert rep.ok


def test_existential_domain_checks():
    with pytest.raises(ValueError):
        estimate_existential_constants("alg-ineq-log", IneqParams(2.0, 1.0), SMALL)
    with pytest.raises(ValueError):
        estimate_existential_constants("alg-ineq-wolff", IneqParams.from_gamma(2.0, 1.4, n=2, s=0.5), SMALL)
    with pytest.raises(ValueError):
        estimate_existential_constants("alg-ineq9", IneqParams(2.0, 1.0), SMALL)


def test_disproof_candidate_raised():
    rep = IneqReport("alg-ineq1", {}, 10, 1, 0.0, frontier=[{"c": 1.0, "C_N": float("inf"),
                                                              "C_2N": float("inf"), "stability": float("inf")}])
    with pytest.raises(DisproofCandidate):
        require_feasible(rep)
    assert not rep.ok


def test_existential_deterministic():
    P = IneqParams(2.0, -1.0)
    a = estimate_existential_constants("alg-ineq-log", P, SampleSpec(count=5000, seed=2))
    b = estimate_existential_constants("alg-ineq-log", P, SampleSpec(count=5000, seed=2))
    assert a.to_dict() == b.to_dict()


# --------------------------------------------------------------------------
# functional inequalities


def test_random_test_functions_shapes():
    xi = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    fs = random_test_functions(xi, 6, np.random.default_rng(1))
    assert fs.shape == (6, 50) and np.all(np.isfinite(fs))
    assert np.all(fs[2] >= 0)


def test_poincare1_constant_gives_zero_lhs():
    from nlwiener.inequalities import _functional_ratios

    r = _functional_ratios("poincare1", Params(1, 0.5, 2.0), 1.0, 16, 3, 0)
    assert np.all(r >= 0)
    # constant functions have zero energy and are skipped; nonconstant ones give finite ratios
    assert np.all(np.isfinite(r))


@pytest.mark.parametrize("which,P,cells", [
    ("sobolev", Params(1, 0.3, 2.0), 16),
    ("poincare1", Params(1, 0.5, 1.5), 16),
    ("poincare2", Params(1, 0.5, 2.0), 16),
    ("poincare2", Params(2, 0.5, 2.0), 8),
])
def test_functional_scale_ratio(which, P, cells):
    rep = estimate_functional_constants(which, P, 1.0, cells, samples=24, seed=1)
    assert all(c > 0 and np.isfinite(c) for c in rep.constants)
    assert rep.ok, rep


def test_functional_preconditions():
    with pytest.raises(ValueError):
        estimate_functional_constants("sobolev", Params(1, 0.8, 2.0))
    with pytest.raises(ValueError):
        estimate_functional_constants("poincare1", Params(1, 0.5, 2.0), cells=2)
    with pytest.raises(ValueError):
        estimate_functional_constants("hardy", Params(1, 0.5, 2.0))
