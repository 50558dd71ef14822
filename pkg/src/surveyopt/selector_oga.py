"""Budget-terminated group orthogonal greedy selection.

Groups are orthonormalized once (after centering) and used only to score
candidates; every commit refits OLS on the original selected columns. The
greedy order does not depend on the experimental sample size, so the design
search computes one path and reads off, for each grid size, the longest
prefix whose cost fits the budget.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cost import Clusters, SizeChoice, SizeGrid, cost_over_grid, total_cost
from .data import GroupSpec, PreSample
from .regress import center, ols, orthonormalize_group

ZERO_TOL = 1e-14


class InfeasibleError(ValueError):
    """No candidate design fits the budget."""


@dataclass(frozen=True, eq=False)
class Selection:
    size: SizeChoice
    selected_groups: tuple
    selected_indices: tuple
    coefficients: np.ndarray
    criterion: float
    cost: float
    budget: float
    names: tuple = ()
    residual_variance: float = float("nan")
    path: tuple = ()
    method: str = "oga"
    extra: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.size.effective_n

    @property
    def k(self) -> int:
        return len(self.selected_indices)

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.criterion))

    @property
    def cost_over_budget(self) -> float:
        return self.cost / self.budget

    def to_dict(self) -> dict:
        d = {"n": self.n}
        if isinstance(self.size, Clusters):
            d["clusters"] = [self.size.c, self.size.n_c]
        d.update({
            "selected": [self.names[i] for i in self.selected_indices] if self.names
            else list(self.selected_indices),
            "criterion": self.criterion,
            "rmse": self.rmse,
            "cost": self.cost,
            "cost_over_budget": self.cost_over_budget,
            "path": [dict(p) for p in self.path],
        })
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class GreedyPath:
    """Greedy group order for one sample, extended lazily and shared across budgets."""

    def __init__(self, sample: PreSample, groups: GroupSpec):
        if max(max(g) for g in groups.groups) >= sample.M:
            raise ValueError("group index exceeds the number of covariates")
        self.sample = sample
        self.groups = groups
        self.N = sample.N
        self.x = sample.covariates
        self.y = sample.y
        self.yc = center(self.y, sample.blocks)
        xc = center(self.x, sample.blocks)
        bases, owner = [], []
        for j, g in enumerate(groups.groups):
            cols = xc[:, list(g)]
            if not np.any(np.abs(cols) > 0):
                q = np.zeros((self.N, 0))
            else:
                q, _ = orthonormalize_group(cols)
            bases.append(q)
            owner.extend([j] * q.shape[1])
        self.basis = np.hstack(bases) if bases else np.zeros((self.N, 0))
        self.owner = np.asarray(owner, dtype=np.int64)
        self.y_ms = float(self.yc @ self.yc) / self.N
        fit0 = ols(self.x[:, []], self.y, True, sample.blocks, ())
        # steps[k] describes the design after k commits
        self.steps = [{"groups": (), "indices": (), "fit": fit0}]
        self.stop_reason = None

    @property
    def done(self) -> bool:
        return self.stop_reason is not None

    def scores(self, resid: np.ndarray, chosen) -> np.ndarray:
        """Squared l2 norm of the regression of the residual on each orthonormal group."""
        proj = (self.basis.T @ resid) / self.N
        s = np.bincount(self.owner, weights=proj ** 2, minlength=self.groups.p)
        s[list(chosen)] = -np.inf
        return s

    def propose(self, k: int):
        """Group the greedy rule adds after ``k`` commits, or None when it stops."""
        step = self.steps[k]
        if len(step["groups"]) == self.groups.p:
            return None, "all groups selected"
        fit = step["fit"]
        if fit.residual_variance <= ZERO_TOL * self.y_ms:
            return None, "residual numerically zero"
        s = self.scores(fit.residuals, step["groups"])
        j = int(np.argmax(s))
        if s[j] <= ZERO_TOL * self.y_ms:
            return None, "no remaining correlation"
        return j, None

    def commit(self, k: int, j: int) -> dict:
        step = self.steps[k]
        idx = tuple(sorted(set(step["indices"]) | set(self.groups.groups[j])))
        fit = ols(self.x[:, list(idx)], self.y, True, self.sample.blocks, idx)
        new = {"groups": step["groups"] + (j,), "indices": idx, "fit": fit}
        if k + 1 == len(self.steps):
            self.steps.append(new)
        return new

    def extend(self) -> bool:
        """Add one step; False once the greedy rule has stopped."""
        if self.done:
            return False
        j, why = self.propose(len(self.steps) - 1)
        if j is None:
            self.stop_reason = why
            return False
        self.commit(len(self.steps) - 1, j)
        return True


def _path_record(steps) -> tuple:
    return tuple({"step": k, "group": s["groups"][-1], "rss": s["fit"].rss}
                 for k, s in enumerate(steps[1:], start=1))


def _make_selection(sample, step, size, cost, budget, path, method="oga", **kw) -> Selection:
    fit = step["fit"]
    return Selection(size=size, selected_groups=step["groups"], selected_indices=step["indices"],
                     coefficients=fit.coefficients, criterion=fit.residual_variance / size.effective_n,
                     cost=float(cost), budget=float(budget), names=sample.covariate_names,
                     residual_variance=fit.residual_variance, path=path, method=method, **kw)


def oga_inner(sample: PreSample, groups: GroupSpec, model, budget: float, size: SizeChoice) -> Selection:
    """Greedy selection at one sample size, checking the budget before each commit."""
    if isinstance(size, (int, np.integer)):
        from .cost import Individuals
        size = Individuals(int(size))
    path = GreedyPath(sample, groups)
    cost = total_cost(model, sample.item_mask(()), size)
    if cost > budget:
        raise InfeasibleError("budget below outcome-only cost at this n")
    k, reason = 0, None
    rss_prev = path.steps[0]["fit"].rss
    while True:
        j, reason = path.propose(k)
        if j is None:
            break
        idx = set(path.steps[k]["indices"]) | set(groups.groups[j])
        c = total_cost(model, sample.item_mask(idx), size)
        if c > budget:
            reason = "budget exhausted"
            break
        path.commit(k, j)
        k += 1
        cost = c
        rss = path.steps[k]["fit"].rss
        if rss > rss_prev * (1 + 1e-12) + 1e-300:
            raise AssertionError("residual sum of squares increased after a commit")
        rss_prev = rss
    return _make_selection(sample, path.steps[k], size, cost, budget, _path_record(path.steps[:k + 1]),
                           diagnostics={"stop": reason})


def _best(criteria: np.ndarray, n: np.ndarray, k: np.ndarray, feasible: np.ndarray) -> int:
    """Argmin of the criterion; ties go to larger n, then fewer covariates, then later grid entries."""
    cand = np.flatnonzero(feasible)
    order = np.lexsort((-cand, k[cand], -n[cand], criteria[cand]))
    return int(cand[order[0]])


def path_design(path: GreedyPath, model, budget: float, grid: SizeGrid) -> Selection:
    """Design search over ``grid`` reusing (and extending) a greedy path."""
    sample = path.sample
    costs = [cost_over_grid(model, sample.item_mask(()), grid)]
    feasible0 = costs[0] <= budget
    if not feasible0.any():
        raise InfeasibleError("no grid size is feasible even without covariates")
    k = 1
    # extend the path while some grid size can still afford the next step
    while True:
        if k >= len(path.steps) and not path.extend():
            break
        c = cost_over_grid(model, sample.item_mask(path.steps[k]["indices"]), grid)
        costs.append(c)
        if not np.any(c <= budget):
            break
        k += 1
    cost_mat = np.vstack(costs)
    ok = np.cumprod(cost_mat <= budget, axis=0).astype(bool)
    k_n = ok.sum(axis=0) - 1  # number of commits affordable at each size (-1: infeasible)
    rv = np.array([s["fit"].residual_variance for s in path.steps[:cost_mat.shape[0]]])
    n = grid.n.astype(float)
    crit = np.full(len(grid), np.inf)
    crit[feasible0] = rv[k_n[feasible0]] / n[feasible0]
    n_idx = np.array([len(path.steps[max(kk, 0)]["indices"]) for kk in k_n])
    best = _best(crit, grid.n, n_idx, feasible0)
    kb = int(k_n[best])
    diagnostics = {
        "infeasible_sizes": [int(v) for v in grid.n[~feasible0]],
        "sweep_criteria": crit,
        "sweep_steps": k_n,
        "stop": path.stop_reason if kb == len(path.steps) - 1 and path.done else "budget exhausted",
    }
    return _make_selection(sample, path.steps[kb], grid[best], cost_mat[kb, best], budget,
                           _path_record(path.steps[:kb + 1]), diagnostics=diagnostics)


def oga_design(sample: PreSample, groups: GroupSpec, model, budget: float, grid: SizeGrid) -> Selection:
    """Joint choice of sample size and covariates minimizing residual variance / n."""
    return path_design(GreedyPath(sample, groups), model, budget, grid)


def risk_gap(selection: Selection, truth, sample: PreSample, groups: GroupSpec):
    """Excess in-sample risk of the greedy fit over the true coefficients, and its bound.

    ``truth`` holds coefficients on the sample's columns. The bound uses the
    decomposition that assigns each index to the first group containing it.
    """
    gamma0 = np.asarray(truth, dtype=float)
    if gamma0.shape != (sample.M,):
        raise ValueError("truth must have one coefficient per covariate")
    n_hat = selection.n
    xc = center(sample.covariates, sample.blocks)
    yc = center(sample.y, sample.blocks)
    idx = list(selection.selected_indices)
    f_hat = xc[:, idx] @ selection.coefficients if idx else np.zeros(sample.N)
    f = xc @ gamma0
    gap = (np.mean((yc - f_hat) ** 2) - np.mean((yc - f) ** 2)) / n_hat
    assigned = set()
    l1 = 0.0
    for g in groups.groups:
        own = [i for i in g if i not in assigned]
        assigned.update(own)
        if own:
            l1 += np.sqrt(np.mean((xc[:, own] @ gamma0[own]) ** 2))
    k = len(selection.selected_groups)
    if k == 0:
        return float(gap), float("inf")
    bound = 4.0 * l1 ** 2 / (n_hat * min(groups.p, k))
    return float(gap), float(bound)
