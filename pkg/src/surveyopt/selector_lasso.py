"""LASSO and POST-LASSO baselines with the penalty tuned to the budget.

The objective is (1/N)||y - X g||^2 + lam * ||g||_1 on centered data. For each
sample size the penalty is bisected until the support's collection cost is
as close to the budget as possible. All grid sizes are bisected in lockstep
and fits are memoized by penalty, so sizes that share a bisection interval
share the work; LASSO and POST-LASSO read the same fits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .cost import SizeChoice, SizeGrid, cost_over_grid
from .data import GroupSpec, PreSample
from .regress import center, ols
from .selector_oga import InfeasibleError, Selection, _best

SUPPORT_TOL = 1e-10
CD_TOL = 1e-8
MAX_SWEEPS = 10_000
MAX_BISECT = 60
BUDGET_GAP = 1e-3
LAMBDA_GAP = 1e-9
MODES = ("lasso", "post-lasso")


@numba.njit(cache=True)
def _coordinate_descent(gram, rho, lam, beta, tol, max_sweeps):
    m = rho.shape[0]
    q = gram @ beta
    half = lam / 2.0
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        delta = 0.0
        for j in range(m):
            d = gram[j, j]
            if d <= 0.0:
                continue
            old = beta[j]
            z = rho[j] - q[j] + d * old
            if z > half:
                new = (z - half) / d
            elif z < -half:
                new = (z + half) / d
            else:
                new = 0.0
            if new != old:
                diff = new - old
                for i in range(m):
                    q[i] += gram[i, j] * diff
                beta[j] = new
                if abs(diff) > delta:
                    delta = abs(diff)
        if delta < tol:
            return beta, sweeps, True
    return beta, sweeps, False


@dataclass(frozen=True, eq=False)
class LassoFit:
    lam: float
    coefficients: np.ndarray
    support: tuple
    objective: float
    converged: bool = True
    sweeps: int = 0


class LassoProblem:
    """Centered LASSO data for one sample, with forced columns partialed out of y."""

    def __init__(self, sample: PreSample, forced=()):
        self.sample = sample
        self.forced = tuple(sorted(int(i) for i in forced))
        self.free = np.array([j for j in range(sample.M) if j not in set(self.forced)], dtype=np.int64)
        b = sample.blocks
        y = sample.y
        if self.forced:
            part = ols(sample.covariates[:, list(self.forced)], y, True, b, self.forced)
            self.forced_coef = part.coefficients
            yc = part.residuals
        else:
            self.forced_coef = np.zeros(0)
            yc = center(y, b)
        self.N = sample.N
        self.yc = yc
        self.xc = center(sample.covariates[:, self.free], b)
        self.gram = np.ascontiguousarray(self.xc.T @ self.xc / self.N)
        self.rho = self.xc.T @ yc / self.N
        self.lam_max = float(2.0 * np.max(np.abs(self.rho))) if self.rho.size else 0.0
        self.y_ms = float(yc @ yc) / self.N

    def fit(self, lam: float, warm_start=None) -> LassoFit:
        if lam < 0:
            raise ValueError("penalty must be nonnegative")
        m = self.free.size
        beta = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=float)
        if m:
            beta, sweeps, ok = _coordinate_descent(self.gram, self.rho, float(lam), beta, CD_TOL, MAX_SWEEPS)
        else:
            sweeps, ok = 0, True
        beta[np.abs(beta) < SUPPORT_TOL] = 0.0
        r = self.yc - self.xc @ beta
        obj = float(r @ r) / self.N + lam * float(np.abs(beta).sum())
        support = tuple(int(j) for j in np.flatnonzero(beta))
        return LassoFit(float(lam), beta, support, obj, bool(ok), int(sweeps))

    def kkt_violation(self, fit: LassoFit) -> float:
        """Largest deviation from the LASSO optimality conditions."""
        r = self.yc - self.xc @ fit.coefficients
        grad = 2.0 * self.xc.T @ r / self.N
        on = fit.coefficients != 0
        v_on = np.abs(grad[on] - fit.lam * np.sign(fit.coefficients[on]))
        v_off = np.maximum(np.abs(grad[~on]) - fit.lam, 0.0)
        return float(max(v_on.max(initial=0.0), v_off.max(initial=0.0)))

    def indices(self, support) -> tuple:
        return tuple(sorted(set(self.forced) | {int(self.free[j]) for j in support}))

    def residual_variance(self, fit: LassoFit, mode: str) -> tuple[float, tuple, np.ndarray]:
        """(residual variance, selected indices, coefficients aligned with them)."""
        idx = self.indices(fit.support)
        if mode == "post-lasso":
            refit = ols(self.sample.covariates[:, list(idx)], self.sample.y, True, self.sample.blocks, idx)
            return refit.residual_variance, idx, refit.coefficients
        r = self.yc - self.xc @ fit.coefficients
        coef = np.zeros(len(idx))
        pos = {i: p for p, i in enumerate(idx)}
        for i, c in zip(self.forced, self.forced_coef):
            coef[pos[i]] = c
        for j in fit.support:
            coef[pos[int(self.free[j])]] = fit.coefficients[j]
        return float(r @ r) / self.N, idx, coef


def lasso_fit(sample: PreSample, lam: float, warm_start=None) -> LassoFit:
    """Coordinate-descent LASSO on all covariates of ``sample``."""
    return LassoProblem(sample).fit(lam, warm_start)


class LassoEngine:
    """Budget-tuned LASSO over a size grid, memoizing fits and support costs."""

    def __init__(self, sample: PreSample, groups: GroupSpec | None = None):
        forced = groups.forced if groups is not None else ()
        self.problem = LassoProblem(sample, forced)
        self.sample = sample
        self._fits: dict[float, LassoFit] = {}
        self._rv_cache: dict[tuple, tuple] = {}

    def fit(self, lam: float, warm: LassoFit | None = None) -> LassoFit:
        lam = float(lam)
        if lam not in self._fits:
            ws = None if warm is None else warm.coefficients
            self._fits[lam] = self.problem.fit(lam, ws)
        return self._fits[lam]

    def _cost(self, fit: LassoFit, model, grid: SizeGrid, cache: dict) -> np.ndarray:
        if fit.support not in cache:
            cache[fit.support] = cost_over_grid(model, self.sample.item_mask(self.problem.indices(fit.support)), grid)
        return cache[fit.support]

    def _resid(self, fit: LassoFit, mode: str):
        key = (fit.lam, mode)
        if key not in self._rv_cache:
            self._rv_cache[key] = self.problem.residual_variance(fit, mode)
        return self._rv_cache[key]

    def design(self, model, budget: float, grid: SizeGrid, modes=MODES) -> dict:
        """Best Selection per mode over ``grid``."""
        prob = self.problem
        cache: dict = {}
        n = grid.n.astype(float)
        g = len(grid)
        fit_hi = self.fit(prob.lam_max)
        base = self._cost(fit_hi, model, grid, cache)
        feasible = base <= budget
        if not feasible.any():
            raise InfeasibleError("no grid size is feasible even without covariates")

        fit0 = self.fit(0.0, fit_hi)
        cost0 = self._cost(fit0, model, grid, cache)
        inc = {m: np.empty(g, dtype=object) for m in modes}
        inc_cost = np.where(feasible, base, np.nan)
        iters = np.zeros(g, dtype=np.int64)
        for m in modes:
            inc[m][:] = fit_hi
        saturated = feasible & (cost0 <= budget)
        for m in modes:
            inc[m][saturated] = fit0
        inc_cost[saturated] = cost0[saturated]
        lo = np.zeros(g)
        hi = np.full(g, prob.lam_max)
        active = feasible & ~saturated & (prob.lam_max > 0)
        active &= (budget - inc_cost) / budget >= BUDGET_GAP
        while active.any():
            for key in sorted({(lo[i], hi[i]) for i in np.flatnonzero(active)}):
                members = active & (lo == key[0]) & (hi == key[1])
                mid = 0.5 * (key[0] + key[1])
                fit = self.fit(mid, self.fit(key[1]))
                c = self._cost(fit, model, grid, cache)
                iters[members] += 1
                ok = members & (c <= budget)
                bad = members & ~ok
                hi[ok] = mid
                lo[bad] = mid
                for i in np.flatnonzero(ok):
                    if c[i] > inc_cost[i]:
                        inc_cost[i] = c[i]
                        for m in modes:
                            inc[m][i] = fit
                    elif c[i] == inc_cost[i]:
                        for m in modes:
                            if self._resid(fit, m)[0] < self._resid(inc[m][i], m)[0]:
                                inc[m][i] = fit
            active &= iters < MAX_BISECT
            active &= (budget - inc_cost) / budget >= BUDGET_GAP
            active &= (hi - lo) > LAMBDA_GAP * prob.lam_max

        out = {}
        for m in modes:
            rv = np.full(g, np.inf)
            ks = np.zeros(g, dtype=np.int64)
            for i in np.flatnonzero(feasible):
                rv[i] = self._resid(inc[m][i], m)[0]
                ks[i] = len(self.problem.indices(inc[m][i].support))
            crit = np.where(feasible, rv / n, np.inf)
            best = _best(crit, grid.n, ks, feasible)
            fit = inc[m][best]
            r, idx, coef = self._resid(fit, m)
            cost = self._cost(fit, model, grid, cache)[best]
            out[m] = Selection(
                size=grid[best], selected_groups=(), selected_indices=idx, coefficients=coef,
                criterion=r / n[best], cost=float(cost), budget=float(budget),
                names=self.sample.covariate_names, residual_variance=r, method=m,
                extra={"lambda": fit.lam, "bisection_iters": int(iters[best])},
                diagnostics={"infeasible_sizes": [int(v) for v in grid.n[~feasible]],
                             "sweep_criteria": crit, "converged": fit.converged})
        return out


def lasso_budget(sample: PreSample, groups: GroupSpec, model, budget: float, size: SizeChoice,
                 mode: str = "lasso") -> Selection:
    """Penalty bisected so the support's cost at ``size`` is just within budget."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    try:
        return LassoEngine(sample, groups).design(model, budget, SizeGrid.of(size), (mode,))[mode]
    except InfeasibleError:
        raise InfeasibleError("budget below outcome-only cost at this n") from None


def lasso_design(sample: PreSample, groups: GroupSpec, model, budget: float, grid: SizeGrid,
                 mode: str = "lasso") -> Selection:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return LassoEngine(sample, groups).design(model, budget, grid, (mode,))[mode]
