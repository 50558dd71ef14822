import numpy as np
import pytest
from hypothesis import given, strategies as st

from surveyopt.regress import ols, orthonormalize_group, residual_variance, residualize_outcome

from conftest import make_sample


def test_exact_fit():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    fit = ols(x, x, intercept=False)
    assert fit.coefficients[0] == pytest.approx(1.0)
    assert fit.rss == pytest.approx(0.0, abs=1e-20)


def test_orthogonal_outcome_no_intercept():
    x = np.array([[1.0], [1.0], [0.0], [0.0]])
    y = np.array([0.0, 0.0, 2.0, -1.0])
    fit = ols(x, y, intercept=False)
    assert fit.coefficients[0] == 0.0
    assert fit.rss == pytest.approx(5.0)


def test_duplicate_column_flagged(rng):
    x = rng.standard_normal(50)
    y = 2 * x + rng.standard_normal(50)
    single = ols(x, y)
    dup = ols(np.column_stack([x, x]), y, indices=(3, 8))
    assert len(dup.rank_deficient) == 1 and dup.rank == 1
    assert np.count_nonzero(dup.coefficients) == 1
    assert dup.rss == pytest.approx(single.rss, rel=1e-10)


def test_errors():
    with pytest.raises(ValueError, match="exceed"):
        ols(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError, match="non-finite"):
        ols(np.array([[1.0], [np.inf]]), np.ones(2))


def test_intercepts_recover_offset(rng):
    x = rng.standard_normal((40, 2))
    y = 3.0 + x @ [1.0, 2.0]
    fit = ols(x, y)
    assert fit.intercept[0] == pytest.approx(3.0)
    np.testing.assert_allclose(fit.coefficients, [1.0, 2.0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_normal_equations(seed, k):
    r = np.random.default_rng(seed)
    x = r.standard_normal((30, k)) * r.uniform(0.1, 10, k)
    y = r.standard_normal(30)
    fit = ols(x, y)
    xc = x - x.mean(0)
    lhs = np.max(np.abs(xc.T @ fit.residuals)) / 30
    rn = np.sqrt(np.mean(fit.residuals ** 2))
    assert lhs <= 1e-8 * np.max(np.linalg.norm(xc, axis=0)) * max(rn, 1e-300) + 1e-14
    assert fit.residual_variance <= np.var(y) + 1e-12


def test_orthonormalize_examples(rng):
    x = np.array([2.0, -2.0, 2.0, -2.0])  # ||x||_N^2 = 4
    q, t = orthonormalize_group(x)
    np.testing.assert_allclose(np.abs(q[:, 0]), np.abs(x / 2))
    np.testing.assert_allclose(x[:, None] @ t, q)
    q2, _ = orthonormalize_group(np.column_stack([x, x]))
    assert q2.shape[1] == 1
    with pytest.raises(ValueError, match="all-zero"):
        orthonormalize_group(np.zeros((4, 2)))


def test_orthonormalize_gram_identity_many(rng):
    worst = 0.0
    for _ in range(1000):
        g = rng.integers(1, 5)
        x = rng.standard_normal((25, g)) @ rng.standard_normal((g, g))
        q, t = orthonormalize_group(x)
        worst = max(worst, np.max(np.abs(q.T @ q / 25 - np.eye(q.shape[1]))))
        # same span: projecting x on q reproduces x
        proj = q @ np.linalg.lstsq(q, x, rcond=None)[0]
        assert np.allclose(proj, x, atol=1e-8 * np.abs(x).max())
    assert worst < 1e-10


def test_residual_variance_examples(rng):
    x = rng.standard_normal((40, 3))
    y = rng.standard_normal(40)
    s = make_sample(x, y)
    assert residual_variance(s, ()) == pytest.approx(np.var(y))
    s2 = make_sample(x, 1.0 + x @ [1.0, 0.0, -2.0])
    assert residual_variance(s2, [0, 2]) == pytest.approx(0.0, abs=1e-20)


def test_residual_variance_nested(rng):
    for _ in range(100):
        x = rng.standard_normal((30, 5))
        s = make_sample(x, rng.standard_normal(30))
        a = set(rng.choice(5, size=2, replace=False).tolist())
        b = a | {int(rng.integers(5))}
        assert residual_variance(s, b) <= residual_variance(s, a) + 1e-12


def test_residualize_examples(rng):
    x = rng.standard_normal((50, 3))
    y = x @ [1.0, 2.0, 0.0] + rng.standard_normal(50)
    pre = make_sample(x, y)
    y_exp = rng.standard_normal(10)
    z_exp = rng.standard_normal((10, 3))
    np.testing.assert_array_equal(residualize_outcome(pre, (), y_exp, z_exp), y_exp)
    gamma = ols(x[:, [0, 1]], y).coefficients
    z = rng.standard_normal((10, 2))
    np.testing.assert_allclose(residualize_outcome(pre, [0, 1], z @ gamma, z), 0.0, atol=1e-12)
    # full-width experimental matrices are accepted too
    np.testing.assert_allclose(residualize_outcome(pre, [0, 1], y_exp, z_exp),
                               y_exp - z_exp[:, :2] @ gamma)
    with pytest.raises(ValueError, match="columns"):
        residualize_outcome(pre, [0, 1], y_exp, rng.standard_normal((10, 4)))


def test_residualize_monte_carlo(rng):
    gamma = np.array([1.0, -0.5, 0.25])

    def draw(n):
        x = rng.standard_normal((n, 3))
        return x, x @ gamma + 0.8 * rng.standard_normal(n)

    x, y = draw(5000)
    pre = make_sample(x, y)
    rv = residual_variance(pre, [0, 1, 2])
    xe, ye = draw(5000)
    out = residualize_outcome(pre, [0, 1, 2], ye, xe)
    assert np.var(out) == pytest.approx(rv, rel=0.10)
