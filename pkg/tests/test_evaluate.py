import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from surveyopt.cost import Flat, Individuals, SizeGrid, cost_over_grid, daycare_model, total_cost
from surveyopt.data import define_groups, studentize
from surveyopt.evaluate import (DesignReport, PowerSpec, Unachievable, analytic_k_fixedcost,
                                analytic_k_uniform, cumulative_price, design, eqb,
                                foc_check_heterogeneous, fold_labels, kfold_evaluate, mse,
                                out_of_sample_variance, power)
from surveyopt.regress import ols, residual_variance
from surveyopt.selector_oga import Selection

from conftest import make_sample


def test_mse_examples():
    assert mse(1.0, 100, 0.5) == pytest.approx(0.04)
    assert mse(0.0, 7, 0.3) == 0.0
    assert mse(2.0, 50, 0.25) == pytest.approx(0.213333333333, rel=1e-10)
    with pytest.raises(ValueError):
        mse(1.0, 10, 1.0)


@given(st.floats(0.01, 0.99))
def test_equal_split_optimal(d):
    assert mse(1.3, 40, 0.5) <= mse(1.3, 40, d)


def test_power_examples():
    assert power(PowerSpec(0.0, 1.0, 400, alpha=0.05)) == pytest.approx(0.05, abs=1e-12)
    assert power(PowerSpec(50.0, 1.0, 400)) == pytest.approx(1.0)
    assert power(PowerSpec(0.28, 1.0, 400, 0.5, 0.05)) == pytest.approx(0.80, abs=0.005)
    with pytest.raises(ValueError):
        PowerSpec(0.1, 1.0, 10, dbar=1.1)


def test_power_monotone():
    ns = np.arange(50, 2000, 50)
    p = [power(PowerSpec(0.2, 1.0, int(n))) for n in ns]
    assert np.all(np.diff(p) > 0)
    betas = np.linspace(0.01, 0.5, 30)
    p = [power(PowerSpec(b, 1.0, 300)) for b in betas]
    assert np.all(np.diff(p) > 0)
    p = [power(PowerSpec(-b, 1.0, 300)) for b in betas]
    assert np.all(np.diff(p) > 0)
    sig = np.linspace(0.5, 3.0, 30)
    p = [power(PowerSpec(0.2, s, 300)) for s in sig]
    assert np.all(np.diff(p) < 0)


def test_power_monte_carlo_small(rng):
    n, reps, beta = 200, 4000, 0.3
    d = np.zeros(n)
    d[: n // 2] = 1
    y = beta * d + rng.standard_normal((reps, n))
    diff = y[:, d == 1].mean(1) - y[:, d == 0].mean(1)
    se = np.sqrt(y[:, d == 1].var(1, ddof=1) / (n / 2) + y[:, d == 0].var(1, ddof=1) / (n / 2))
    rate = np.mean(np.abs(diff / se) > 1.959963984540054)
    assert rate == pytest.approx(power(PowerSpec(beta, 1.0, n)), abs=0.03)


def _noise_problem(seed=3, n=1330, m=36):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, m))
    return studentize(make_sample(x, r.standard_normal(n)))


def test_eqb_own_criterion_within_budget(rng):
    x = rng.standard_normal((200, 5))
    s = studentize(make_sample(x, x @ [1, 0.5, 0, 0, 0] + rng.standard_normal(200)))
    g = define_groups(s)
    grid = SizeGrid.range(20, 200, 5)
    model = Flat(5, unit_price=1.0, eta=2.0)
    for method in ("oga", "lasso", "post-lasso"):
        sel = design(s, g, model, 300, grid, method)
        res = eqb(s, g, model, grid, method, sel.criterion, 300)
        assert res.eqb <= 300
        assert res.relative_eqb == pytest.approx(res.eqb / 300)


def test_eqb_loose_target_is_cheapest(rng):
    x = rng.standard_normal((100, 3))
    s = studentize(make_sample(x, rng.standard_normal(100)))
    grid = SizeGrid.range(10, 100, 10)
    model = Flat(3, unit_price=1.0, eta=1.0)
    target = np.var(s.y) / 10
    res = eqb(s, define_groups(s), model, grid, "oga", target, 500)
    assert res.eqb == total_cost(model, np.zeros(3, bool), Individuals(10))


def test_eqb_pure_noise_closed_form():
    s = _noise_problem()
    g = define_groups(s)
    model, budget, grid = daycare_model(36), 569_074.0, SizeGrid.range(500, 4000, 1)
    target = residual_variance(s, range(36)) / 1330
    n_star = math.ceil(np.var(s.y) / target)
    expected = total_cost(model, np.zeros(36, bool), Individuals(n_star))
    res = eqb(s, g, model, grid, "oga", target, budget)
    assert res.eqb == pytest.approx(expected, rel=2e-3)
    assert res.eqb >= expected * (1 - 1e-12)


def test_eqb_monotone_in_target(rng):
    x = rng.standard_normal((150, 4))
    s = studentize(make_sample(x, x @ [1, 0.5, 0.2, 0] + rng.standard_normal(150)))
    g = define_groups(s)
    grid = SizeGrid.range(20, 300, 5)
    model = Flat(4, unit_price=1.0, eta=2.0)
    targets = np.linspace(0.004, 0.03, 6)
    vals = [eqb(s, g, model, grid, "oga", t, 600).eqb for t in targets]
    assert all(b <= a * (1 + 2e-3) for a, b in zip(vals, vals[1:]))


def test_eqb_unachievable(rng):
    x = rng.standard_normal((50, 2))
    s = studentize(make_sample(x, rng.standard_normal(50)))
    with pytest.raises(Unachievable):
        eqb(s, define_groups(s), Flat(2, eta=1.0), SizeGrid.range(10, 50, 10), "oga", 1e-9, 100)


def test_design_report_dict(rng):
    x = rng.standard_normal((60, 3))
    s = studentize(make_sample(x, rng.standard_normal(60)))
    sel = design(s, define_groups(s), Flat(3, eta=1.0), 50, SizeGrid.range(10, 60, 10))
    d = DesignReport("oga", sel, 50, 40.0).to_dict()
    assert set(d) == {"method", "n", "k", "cost_over_budget", "rmse", "eqb", "relative_eqb"}
    assert d["relative_eqb"] == pytest.approx(0.8)


def test_kfold_identical_copies(rng):
    x0 = rng.standard_normal((40, 3))
    y0 = x0[:, 0] + rng.standard_normal(40)
    folds = 4
    x, y = np.vstack([x0] * folds), np.concatenate([y0] * folds)
    s = studentize(make_sample(x, y))
    labels = np.repeat(np.arange(folds), 40)
    grid = SizeGrid.range(20, 200, 10)
    rep = kfold_evaluate(s, define_groups(s), Flat(3, eta=2.0), 400, grid, ("oga", "post-lasso"),
                         folds=folds, labels=labels, with_eqb=False)
    for m in ("oga", "post-lasso"):
        rows = [r for r in rep.folds if r.method == m]
        assert len({(r.n, r.k, r.rmse) for r in rows}) == 1
        assert rep.averages[m]["rmse"] == pytest.approx(rows[0].rmse)


def test_kfold_deterministic(rng):
    x = rng.standard_normal((120, 4))
    s = studentize(make_sample(x, x[:, 0] + rng.standard_normal(120)))
    args = (s, define_groups(s), Flat(4, eta=2.0), None, SizeGrid.range(20, 200, 10))
    a = kfold_evaluate(*args, folds=5, seed=11)
    b = kfold_evaluate(*args, folds=5, seed=11)
    assert repr(a.to_dict()) == repr(b.to_dict())
    np.testing.assert_array_equal(fold_labels(120, 5, 11), fold_labels(120, 5, 11))
    with pytest.raises(ValueError):
        kfold_evaluate(*args, folds=500)


def test_kfold_auto_budget(rng):
    x = rng.standard_normal((100, 3))
    s = studentize(make_sample(x, x[:, 0] + rng.standard_normal(100)))
    model = Flat(3, eta=2.0)
    rep = kfold_evaluate(s, define_groups(s), model, None, SizeGrid.range(10, 200, 10), ("oga",),
                         folds=5, seed=0)
    for r in rep.folds:
        assert r.budget == total_cost(model, np.ones(3, bool), Individuals(80))
        assert r.relative_eqb <= 1.0 + 2e-3 or math.isnan(r.relative_eqb)


def test_pure_noise_out_of_sample(rng):
    worse = []
    for _ in range(100):
        x = rng.standard_normal((150, 10))
        s = make_sample(x, rng.standard_normal(150))
        labels = fold_labels(150, 5, int(rng.integers(1 << 30)))
        full, empty = [], []
        for f in range(5):
            tr, te = s.take(labels != f), s.take(labels == f)
            fit = ols(tr.covariates, tr.y)
            sel = Selection(Individuals(100), (), tuple(range(10)), fit.coefficients, 0, 0, 1)
            none = Selection(Individuals(100), (), (), np.zeros(0), 0, 0, 1)
            full.append(out_of_sample_variance(tr, sel, te))
            empty.append(out_of_sample_variance(tr, none, te))
        worse.append(np.mean(full) - np.mean(empty))
    assert np.mean(worse) >= 0


def test_analytic_uniform():
    root = analytic_k_uniform(lambda k: np.exp(-k), 1.0, (0.1, 10))
    assert root.k == pytest.approx(1.0, abs=1e-6) and root.interior
    for b in (0.1, 1.0, 10.0, 100.0):
        assert analytic_k_uniform(lambda k: np.exp(-k), b, (0.1, 10)).k == root.k
    corner = analytic_k_uniform(lambda k: 0.5 + 2.0 / k, 1.0, (0.1, 10))
    assert not corner.interior
    exact = analytic_k_uniform(lambda k: np.exp(-k), 1.0, (0.1, 10), dsigma2=lambda k: -np.exp(-k))
    assert exact.k == pytest.approx(1.0, abs=1e-8)


def test_analytic_fixedcost():
    assert analytic_k_fixedcost(lambda k: np.exp(-k), 0.0, 1.0, (0.1, 10)).k == pytest.approx(1.0, abs=1e-6)
    assert analytic_k_fixedcost(lambda k: np.exp(-k), 0.5, 1.0, (0.05, 10)).k == pytest.approx(0.5, abs=1e-6)
    for F in (0.1, 0.3, 0.7):
        assert analytic_k_fixedcost(lambda k: np.exp(-k), F, 1.0, (0.01, 10)).k == pytest.approx(1 - F, abs=1e-6)
    # with an irreducible floor the root is a genuine minimizer
    root = analytic_k_fixedcost(lambda k: 0.1 + np.exp(-k), 3.0, 1.0, (0.01, 20))
    assert root.is_minimum
    assert np.exp(-root.k) * (root.k + 2.0) == pytest.approx(0.1, rel=1e-6)


def test_cumulative_price():
    assert cumulative_price([1, 2, 4], 1.5) == (2.0, 2.0)
    assert cumulative_price([1, 2, 4], 3.0) == (7.0, 4.0)
    assert cumulative_price([1, 2, 4], 0.0) == (0.0, 1.0)


def test_foc_single_type_reduces():
    k = analytic_k_uniform(lambda k: np.exp(-k), 1.0, (0.1, 10)).k
    prices = [1.0] * 5
    assert foc_check_heterogeneous([prices], [-np.exp(-k)], [k], np.exp(-k)) == [True]


def test_foc_flags_violation():
    k = 1.0
    flags = foc_check_heterogeneous([[1.0] * 4, [2.0] * 4], [-np.exp(-1.0) * 1.1, -2 * np.exp(-1.0)],
                                    [k, k], np.exp(-1.0) * 3)
    assert flags[0] is False


def test_foc_grid_oracle():
    # sigma2 = a + b1 exp(-k1) + b2 exp(-k2); per-individual cost F + p1 k1 + p2 k2
    a, b1, b2, F, p1, p2 = 0.2, 1.0, 2.0, 1.0, 1.0, 1.5

    def s2(k1, k2):
        return a + b1 * np.exp(-k1) + b2 * np.exp(-k2)

    h = 1e-3
    k1, k2 = np.meshgrid(np.arange(0.5, 4.0, h), np.arange(0.5, 4.0, h), indexing="ij")
    obj = s2(k1, k2) * (F + p1 * k1 + p2 * k2)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    c1, c2 = k1[i, j], k2[i, j]
    flags = foc_check_heterogeneous([[p1] * 6, [p2] * 6], [-b1 * np.exp(-c1), -b2 * np.exp(-c2)],
                                    [c1, c2], s2(c1, c2), fixed=F, tol=10 * h)
    assert flags == [True, True]
