"""Precision and power of a design, equivalent budgets, out-of-sample checks,
and closed-form first-order conditions for stylized cost/variance curves."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtr, ndtri

from .cost import Individuals, SizeGrid, cost_over_grid, total_cost
from .data import GroupSpec, PreSample
from .regress import center, ols
from .selector_lasso import MODES as LASSO_MODES, LassoEngine
from .selector_oga import GreedyPath, InfeasibleError, Selection, path_design

METHODS = ("oga",) + LASSO_MODES


class Unachievable(ValueError):
    """The target precision cannot be reached below the budget cap."""


# --------------------------------------------------------------------------
# precision and power
# --------------------------------------------------------------------------

def mse(sigma2: float, n: int, dbar: float = 0.5) -> float:
    """Variance of the difference-in-means estimator, sigma^2 / (n d (1 - d))."""
    if not 0.0 < dbar < 1.0:
        raise ValueError("dbar must lie strictly between 0 and 1")
    if n <= 0 or sigma2 < 0:
        raise ValueError("need n > 0 and sigma2 >= 0")
    return sigma2 / (n * dbar * (1.0 - dbar))


@dataclass(frozen=True)
class PowerSpec:
    beta: float
    sigma: float
    n: int
    dbar: float = 0.5
    alpha: float = 0.05

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.n > 0:
            raise ValueError("n must be positive")
        if not 0.0 < self.dbar < 1.0:
            raise ValueError("dbar must lie strictly between 0 and 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")


def power(spec: PowerSpec) -> float:
    """Power of the two-sided test at level alpha, normal approximation.

    Exact when outcome and covariates are jointly normal; otherwise an
    asymptotic approximation.
    """
    se = spec.sigma / np.sqrt(spec.n * spec.dbar * (1.0 - spec.dbar))
    b = spec.beta / se
    c = ndtri(1.0 - spec.alpha / 2.0)
    # 1 + Phi(b - c) - Phi(b + c), written to avoid cancellation
    return float(ndtr(b - c) + ndtr(-b - c))


# --------------------------------------------------------------------------
# design search dispatch
# --------------------------------------------------------------------------

class Designer:
    """Design search for one sample and method, caching work across budgets."""

    def __init__(self, sample: PreSample, groups: GroupSpec, method: str,
                 engine: LassoEngine | None = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        self.sample, self.groups, self.method = sample, groups, method
        self._path = GreedyPath(sample, groups) if method == "oga" else None
        self.engine = None
        if method != "oga":
            self.engine = engine or LassoEngine(sample, groups)

    def __call__(self, model, budget: float, grid: SizeGrid) -> Selection:
        if self._path is not None:
            return path_design(self._path, model, budget, grid)
        return self.engine.design(model, budget, grid, (self.method,))[self.method]


def design(sample: PreSample, groups: GroupSpec, model, budget: float, grid: SizeGrid,
           method: str = "oga") -> Selection:
    return Designer(sample, groups, method)(model, budget, grid)


def design_all(sample, groups, model, budget, grid, methods=METHODS) -> dict:
    """Selections for several methods; LASSO modes share one engine."""
    out = {}
    lasso = [m for m in methods if m in LASSO_MODES]
    if "oga" in methods:
        out["oga"] = design(sample, groups, model, budget, grid, "oga")
    if lasso:
        out.update(LassoEngine(sample, groups).design(model, budget, grid, tuple(lasso)))
    return {m: out[m] for m in methods}


# --------------------------------------------------------------------------
# equivalent budget
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EqbResult:
    eqb: float
    relative_eqb: float
    reference_budget: float
    probes: int


def eqb(sample: PreSample, groups: GroupSpec, model, grid: SizeGrid, method: str,
        target_criterion: float, reference_budget: float, cap: float | None = None,
        rtol: float = 1e-3, designer: Callable | None = None,
        evaluate: Callable[[Selection], float] | None = None) -> EqbResult:
    """Smallest budget whose optimized design reaches ``target_criterion``.

    Bisection over budgets; each probe runs the full design search. Because
    the optimized criterion is only monotone in the budget up to grid effects,
    the smallest achieving budget seen so far is kept as the answer.
    ``evaluate`` replaces the in-sample criterion (e.g. with an out-of-sample one).
    """
    if not target_criterion > 0:
        raise ValueError("target criterion must be positive")
    designer = designer or Designer(sample, groups, method)
    score = evaluate or (lambda sel: sel.criterion)
    cap = 10.0 * reference_budget if cap is None else cap
    probes = 0

    def achieves(b: float) -> bool:
        nonlocal probes
        probes += 1
        try:
            sel = designer(model, b, grid)
        except InfeasibleError:
            return False
        return score(sel) <= target_criterion

    floor = float(np.min(cost_over_grid(model, sample.item_mask(groups.forced if method != "oga" else ()), grid)))
    if achieves(floor):
        return EqbResult(floor, floor / reference_budget, reference_budget, probes)
    if floor < reference_budget <= cap and achieves(reference_budget):
        hi = reference_budget
    elif achieves(cap):
        hi = cap
    else:
        raise Unachievable(f"target {target_criterion:.6g} not reached below budget {cap:.6g}")
    lo = floor
    while (hi - lo) / hi >= rtol:
        mid = 0.5 * (lo + hi)
        if achieves(mid):
            hi = mid
        else:
            lo = mid
    return EqbResult(hi, hi / reference_budget, reference_budget, probes)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DesignReport:
    method: str
    selection: Selection
    reference_budget: float
    eqb: float = float("nan")

    @property
    def rmse(self) -> float:
        return self.selection.rmse

    @property
    def cost_over_budget(self) -> float:
        return self.selection.cost_over_budget

    @property
    def relative_eqb(self) -> float:
        return self.eqb / self.reference_budget

    def to_dict(self) -> dict:
        return {"method": self.method, "n": self.selection.n, "k": self.selection.k,
                "cost_over_budget": self.cost_over_budget, "rmse": self.rmse,
                "eqb": self.eqb, "relative_eqb": self.relative_eqb}


# --------------------------------------------------------------------------
# k-fold evaluation
# --------------------------------------------------------------------------

def out_of_sample_variance(train: PreSample, selection: Selection, test: PreSample) -> float:
    """Held-out residual variance of the training coefficients.

    The intercept is re-centred on the held-out fold, as the experiment
    re-estimates it.
    """
    idx = list(selection.selected_indices)
    yc = center(test.y, test.blocks)
    if idx:
        yc = yc - center(test.covariates[:, idx], test.blocks) @ selection.coefficients
    return float(yc @ yc) / test.N


@dataclass(frozen=True, eq=False)
class FoldResult:
    fold: int
    method: str
    n: int
    k: int
    cost_over_budget: float
    rmse: float
    eqb: float
    relative_eqb: float
    budget: float


@dataclass(frozen=True, eq=False)
class KFoldReport:
    folds: tuple
    averages: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"folds": [f.__dict__ for f in self.folds], "averages": self.averages}


def fold_labels(n_rows: int, folds: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n_rows)
    labels = np.empty(n_rows, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, folds)):
        labels[part] = f
    return labels


def kfold_evaluate(sample: PreSample, groups: GroupSpec, model, budget, grid: SizeGrid,
                   methods=METHODS, folds: int = 5, seed: int = 0, labels=None,
                   with_eqb: bool = True) -> KFoldReport:
    """Select on all folds but one, score on the held-out fold, and average.

    With ``budget=None`` each training budget is the cost of collecting every
    covariate for the training sample size, and the reference design (all
    covariates at that size) sets the EQB target. Otherwise ``budget`` is used
    for every fold and the reference is all covariates at the largest
    affordable grid size.
    """
    if isinstance(methods, str):
        methods = (methods,)
    if sample.blocks != 1:
        raise ValueError("k-fold evaluation needs an unstacked sample")
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > sample.N:
        raise ValueError(f"{folds} folds exceed {sample.N} rows")
    labels = fold_labels(sample.N, folds, seed) if labels is None else np.asarray(labels)
    everything = sample.item_mask(range(sample.M))
    rows = []
    for f in range(folds):
        train, test = sample.take(labels != f), sample.take(labels == f)
        if budget is None:
            ref_size = Individuals(train.N)
            b = total_cost(model, everything, ref_size)
        else:
            b = float(budget)
            ok = np.flatnonzero(cost_over_grid(model, everything, grid) <= b)
            ref_size = grid[int(ok[-1])] if ok.size else grid[0]
        full = ols(train.covariates, train.y, True, 1, range(train.M))
        ref_sel = Selection(ref_size, (), tuple(range(train.M)), full.coefficients, 0.0, 0.0, b)
        target = out_of_sample_variance(train, ref_sel, test) / ref_size.effective_n
        for m in methods:
            designer = Designer(train, groups, m)
            sel = designer(model, b, grid)
            oos = out_of_sample_variance(train, sel, test) / sel.n
            e = float("nan")
            if with_eqb:
                def score(s, train=train, test=test):
                    return out_of_sample_variance(train, s, test) / s.n
                try:
                    e = eqb(train, groups, model, grid, m, target, b, designer=designer, evaluate=score).eqb
                except Unachievable:
                    e = float("nan")
            rows.append(FoldResult(f, m, sel.n, sel.k, sel.cost_over_budget, float(np.sqrt(oos)),
                                   e, e / b, b))
    averages = {}
    for m in methods:
        mine = [r for r in rows if r.method == m]
        averages[m] = {key: float(np.mean([getattr(r, key) for r in mine]))
                       for key in ("n", "k", "cost_over_budget", "rmse", "eqb", "relative_eqb")}
    return KFoldReport(tuple(rows), averages)


# --------------------------------------------------------------------------
# first-order conditions for stylized problems
# --------------------------------------------------------------------------

class FocRoot(NamedTuple):
    k: float
    interior: bool
    is_minimum: bool


def _derivative(f: Callable, h: float = 1e-6) -> Callable:
    return lambda k: (f(k + h) - f(k - h)) / (2.0 * h)


def _foc_root(objective_slope: Callable, k_range, tol: float) -> FocRoot:
    lo, hi = float(k_range[0]), float(k_range[1])
    if not 0 < lo < hi:
        raise ValueError("k_range must satisfy 0 < lo < hi")
    glo, ghi = objective_slope(lo), objective_slope(hi)
    if glo == 0:
        return FocRoot(lo, True, bool(ghi > 0))
    if ghi == 0:
        return FocRoot(hi, True, bool(glo < 0))
    if np.sign(glo) == np.sign(ghi):
        # no sign change: the objective is monotone, optimum at a boundary
        return FocRoot(lo if glo > 0 else hi, False, True)
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        gm = objective_slope(mid)
        if gm == 0:
            a = b = mid
            break
        if np.sign(gm) == np.sign(glo):
            a = mid
        else:
            b = mid
    return FocRoot(0.5 * (a + b), True, bool(glo < 0 < ghi))


def analytic_k_uniform(sigma2: Callable, B: float = 1.0, k_range=(1e-3, 100.0),
                       dsigma2: Callable | None = None, tol: float = 1e-8) -> FocRoot:
    """Root of sigma2(k)/k + sigma2'(k) = 0 when every covariate costs the same.

    With n = B/k the criterion is k sigma2(k) / B, so the root does not depend
    on B. ``is_minimum`` tells a minimizer from a maximizer.
    """
    if not B > 0:
        raise ValueError("budget must be positive")
    d = dsigma2 or _derivative(sigma2)
    return _foc_root(lambda k: sigma2(k) / k + d(k), k_range, tol)


def analytic_k_fixedcost(sigma2: Callable, F: float, B: float = 1.0, k_range=(1e-3, 100.0),
                         dsigma2: Callable | None = None, tol: float = 1e-8) -> FocRoot:
    """Root of 1/(F + k) + sigma2'(k)/sigma2(k) = 0 with a fixed cost F per interview."""
    if F < 0 or not B > 0:
        raise ValueError("need F >= 0 and B > 0")
    d = dsigma2 or _derivative(sigma2)
    return _foc_root(lambda k: 1.0 / (F + k) + d(k) / sigma2(k), k_range, tol)


def cumulative_price(prices, k: float) -> tuple[float, float]:
    """Cost of k covariates of one type bought cheapest first, and its slope."""
    p = np.asarray(prices, dtype=float)
    whole = int(np.floor(k))
    if whole >= p.size:
        return float(p.sum() + (k - p.size) * p[-1]), float(p[-1])
    return float(p[:whole].sum() + (k - whole) * p[whole]), float(p[whole])


def foc_check_heterogeneous(cost_by_type, sigma2_slopes, candidate, sigma2_value: float,
                            fixed: float = 0.0, tol: float = 1e-6) -> list[bool]:
    """Check marginal cost share = marginal variance reduction share, per type.

    ``cost_by_type[r]`` lists the prices of type-r covariates in ascending
    order, ``sigma2_slopes[r]`` is d sigma2 / d k_r at the candidate and
    ``sigma2_value`` is sigma2 at the candidate.
    """
    if not (len(cost_by_type) == len(sigma2_slopes) == len(candidate)):
        raise ValueError("one price list, slope and allocation per type")
    parts = [cumulative_price(p, k) for p, k in zip(cost_by_type, candidate)]
    total = fixed + sum(c for c, _ in parts)
    flags = []
    for (_, slope_c), slope_s in zip(parts, sigma2_slopes):
        lhs = slope_c / total
        rhs = -slope_s / sigma2_value
        flags.append(bool(abs(lhs - rhs) <= tol * max(abs(lhs), abs(rhs), 1e-300)))
    return flags
