"""Data-collection cost functions.

Costs decompose into administration, training and interview components. All
cost evaluations go through :func:`cost_over_grid`, which is vectorised over
sample sizes; :func:`total_cost` is the scalar view of the same computation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

# floor() guard for products like 0.14 * 350 that land a hair above an integer
_FLOOR_EPS = 1e-9


# --------------------------------------------------------------------------
# sizes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Individuals:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.n}")

    @property
    def effective_n(self) -> int:
        return int(self.n)


@dataclass(frozen=True)
class Clusters:
    c: int
    n_c: int

    def __post_init__(self):
        for v in (self.c, self.n_c):
            if int(v) != v or v < 1:
                raise ValueError(f"cluster sizes must be positive integers, got ({self.c}, {self.n_c})")

    @property
    def effective_n(self) -> int:
        return int(self.c) * int(self.n_c)


SizeChoice = Union[Individuals, Clusters]


@dataclass(frozen=True, eq=False)
class SizeGrid:
    """Candidate experimental sample sizes.

    Individual grids are strictly increasing in ``n``. Cluster grids hold
    ``(c, n_c)`` pairs ordered by effective size, then by ``c``; distinct pairs
    may share an effective size.
    """

    n: np.ndarray
    clusters: np.ndarray | None = None
    per_cluster: np.ndarray | None = None

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64)
        if n.ndim != 1 or n.size == 0:
            raise ValueError("size grid must be a nonempty 1-d sequence")
        if np.any(n < 1):
            raise ValueError("sample sizes must be positive")
        if self.clusters is None:
            if np.any(np.diff(n) <= 0):
                raise ValueError("size grid must be strictly increasing")
        else:
            c = np.asarray(self.clusters, dtype=np.int64)
            nc = np.asarray(self.per_cluster, dtype=np.int64)
            if c.shape != n.shape or nc.shape != n.shape or np.any(c * nc != n):
                raise ValueError("cluster grid arrays are inconsistent")
            if np.any(np.diff(n) < 0):
                raise ValueError("cluster grid must be sorted by effective size")
            object.__setattr__(self, "clusters", c)
            object.__setattr__(self, "per_cluster", nc)
        object.__setattr__(self, "n", n)

    @classmethod
    def individuals(cls, sizes) -> "SizeGrid":
        return cls(np.asarray(list(sizes), dtype=np.int64))

    @classmethod
    def range(cls, lo: int, hi: int, step: int = 1) -> "SizeGrid":
        if step < 1 or lo < 1 or hi < lo:
            raise ValueError(f"bad grid range {lo}:{hi}:{step}")
        return cls(np.arange(lo, hi + 1, step, dtype=np.int64))

    @classmethod
    def cluster_product(cls, clusters, per_cluster) -> "SizeGrid":
        pairs = sorted({(int(c) * int(m), int(c), int(m)) for c in clusters for m in per_cluster})
        arr = np.array(pairs, dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    @property
    def is_clustered(self) -> bool:
        return self.clusters is not None

    def __len__(self) -> int:
        return int(self.n.size)

    def __getitem__(self, i) -> SizeChoice:
        if self.clusters is None:
            return Individuals(int(self.n[i]))
        return Clusters(int(self.clusters[i]), int(self.per_cluster[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "SizeGrid":
        idx = np.asarray(idx)
        if self.clusters is None:
            return SizeGrid(self.n[idx])
        return SizeGrid(self.n[idx], self.clusters[idx], self.per_cluster[idx])

    def cluster_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(c, n_c) arrays; individual grids are read as n clusters of one."""
        if self.clusters is None:
            return self.n, np.ones_like(self.n)
        return self.clusters, self.per_cluster

    @classmethod
    def of(cls, size: SizeChoice) -> "SizeGrid":
        if isinstance(size, Clusters):
            return cls(np.array([size.effective_n]), np.array([size.c]), np.array([size.n_c]))
        return cls(np.array([int(size.n)]))


# --------------------------------------------------------------------------
# step functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepFunction:
    """Piecewise-constant function on (0, inf) with right-closed bands.

    ``values[0]`` on (0, cutoffs[0]], ``values[k]`` on (cutoffs[k-1], cutoffs[k]],
    and ``values[-1]`` beyond the last cutoff.
    """

    cutoffs: tuple
    values: tuple

    def __post_init__(self):
        cut = tuple(float(x) for x in self.cutoffs)
        val = tuple(float(x) for x in self.values)
        if len(val) != len(cut) + 1:
            raise ValueError("a step function needs one more value than cutoffs")
        if any(b <= a for a, b in zip(cut, cut[1:])):
            raise ValueError("cutoffs must be strictly increasing")
        object.__setattr__(self, "cutoffs", cut)
        object.__setattr__(self, "values", val)

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls((), (value,))

    @classmethod
    def regular(cls, width: float, increment: float, bands: int) -> "StepFunction":
        """``increment * k`` on ``(width (k-1), width k]`` for k = 1..bands, flat afterwards."""
        return cls(tuple(width * k for k in range(1, bands)),
                   tuple(increment * k for k in range(1, bands + 1)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("step functions are defined for x > 0 only")
        idx = np.searchsorted(np.asarray(self.cutoffs), x, side="left")
        out = np.asarray(self.values)[idx]
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"cutoffs": list(self.cutoffs), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(tuple(d["cutoffs"]), tuple(d["values"]))

    def __eq__(self, other):
        return isinstance(other, StepFunction) and self.to_dict() == other.to_dict()


def step_lookup(f: StepFunction, x: float) -> float:
    return f(x)


# --------------------------------------------------------------------------
# cost models
# --------------------------------------------------------------------------

def _tau_array(tau) -> np.ndarray:
    tau = np.array(tau, dtype=float)
    if tau.ndim != 1:
        raise ValueError("tau must be a vector")
    if np.any(tau < 0):
        raise ValueError("survey times must be nonnegative")
    tau.setflags(write=False)
    return tau


@dataclass(frozen=True, eq=False)
class Flat:
    """``n * (eta + unit_price * |S|)``; eta defaults to zero."""

    n_covariates: int
    unit_price: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if self.unit_price < 0 or self.eta < 0:
            raise ValueError("prices must be nonnegative")

    @property
    def M(self) -> int:
        return int(self.n_covariates)


@dataclass(frozen=True, eq=False)
class Survey:
    """phi T^alpha + kappa(n) T + n (eta + p T)."""

    phi: float
    alpha: float
    kappa: StepFunction
    eta: float
    p: float
    tau0: float
    tau: np.ndarray

    def __post_init__(self):
        _check_common(self.phi, self.alpha, self.eta, self.p, self.tau0)
        object.__setattr__(self, "tau", _tau_array(self.tau))

    @property
    def M(self) -> int:
        return int(self.tau.size)


@dataclass(frozen=True, eq=False)
class Clustered:
    """Survey costs with training driven by enumerator count.

    mu(c, n_c) = floor(lam * c * mu_n(n_c)) (at least one enumerator),
    cost = phi T^alpha + kappa(mu) T + mu eta + c n_c p T.
    """

    phi: float
    alpha: float
    kappa: StepFunction
    eta: float
    p: float
    tau0: float
    tau: np.ndarray
    lam: float
    mu_n: StepFunction = field(default_factory=lambda: StepFunction.constant(1.0))

    def __post_init__(self):
        _check_common(self.phi, self.alpha, self.eta, self.p, self.tau0)
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "tau", _tau_array(self.tau))

    @property
    def M(self) -> int:
        return int(self.tau.size)


@dataclass(frozen=True, eq=False)
class Block:
    """Cost parameters of one collection channel in a blocked model."""

    phi: float
    alpha: float
    kappa: StepFunction
    eta: float
    p: float
    lam: float
    mu_n: StepFunction = field(default_factory=lambda: StepFunction.constant(1.0))
    interview_per_cluster: bool = False

    def __post_init__(self):
        _check_common(self.phi, self.alpha, self.eta, self.p, 0.0)
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True, eq=False)
class Blocked:
    """Low/high-cost covariate blocks; the outcome is collected in the high block.

    The low block's fixed interview cost is paid only when some low covariate
    is selected.
    """

    low: Block
    high: Block
    tau0: float
    tau: np.ndarray
    low_items: tuple

    def __post_init__(self):
        object.__setattr__(self, "tau", _tau_array(self.tau))
        low = tuple(sorted(int(i) for i in self.low_items))
        if len(set(low)) != len(low) or any(i < 0 or i >= self.tau.size for i in low):
            raise ValueError("low block indices out of range")
        if self.tau0 < 0:
            raise ValueError("survey times must be nonnegative")
        object.__setattr__(self, "low_items", low)

    @property
    def M(self) -> int:
        return int(self.tau.size)

    @property
    def low_mask(self) -> np.ndarray:
        m = np.zeros(self.M, dtype=bool)
        m[list(self.low_items)] = True
        return m

    @property
    def high_items(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(~self.low_mask))


CostModel = Union[Flat, Survey, Clustered, Blocked]


def _check_common(phi, alpha, eta, p, tau0):
    if phi < 0 or eta < 0 or p < 0 or tau0 < 0:
        raise ValueError("prices and times must be nonnegative")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _mask(model: CostModel, selection) -> np.ndarray:
    s = np.asarray(selection)
    if s.dtype != bool:
        s = s.astype(bool)
    if s.shape != (model.M,):
        raise ValueError(f"selection has length {s.size}, cost model expects {model.M}")
    return s


def survey_time(model: CostModel, selection):
    """Minutes per interview; a ``(T_low, T_high)`` pair for blocked models."""
    s = _mask(model, selection)
    if isinstance(model, Flat):
        return float(s.sum())
    if isinstance(model, Blocked):
        low = model.low_mask
        t_low = float(np.dot(model.tau[low], s[low]))
        t_high = float(model.tau0 + np.dot(model.tau[~low], s[~low]))
        return t_low, t_high
    return float(model.tau0 + np.dot(model.tau, s))


def _enumerators(lam, mu_n: StepFunction, c, n_c):
    mu = np.floor(lam * c * mu_n(n_c) + _FLOOR_EPS)
    return np.maximum(mu, 1.0)


def cost_over_grid(model: CostModel, selection, grid: SizeGrid) -> np.ndarray:
    """Total cost of collecting ``selection`` at every size in ``grid``."""
    s = _mask(model, selection)
    n = grid.n.astype(float)
    if isinstance(model, Flat):
        return n * (model.eta + model.unit_price * float(s.sum()))
    if isinstance(model, Survey):
        t = survey_time(model, s)
        return model.phi * t ** model.alpha + model.kappa(n) * t + n * (model.eta + model.p * t)
    c, nc = (a.astype(float) for a in grid.cluster_arrays())
    if isinstance(model, Clustered):
        t = survey_time(model, s)
        mu = _enumerators(model.lam, model.mu_n, c, nc)
        return (model.phi * t ** model.alpha + model.kappa(mu) * t
                + mu * model.eta + c * nc * model.p * t)
    if isinstance(model, Blocked):
        t_low, t_high = survey_time(model, s)
        total = np.zeros_like(n)
        for blk, t, gated in ((model.low, t_low, True), (model.high, t_high, False)):
            mu = _enumerators(blk.lam, blk.mu_n, c, nc)
            units = c if blk.interview_per_cluster else c * nc
            admin = blk.phi * t ** blk.alpha
            train = blk.kappa(mu) * t
            fixed = mu * blk.eta
            if gated and not s[list(model.low_items)].any():
                fixed = 0.0
            total = total + admin + train + fixed + units * blk.p * t
        return total
    raise TypeError(f"unknown cost model {type(model).__name__}")


def total_cost(model: CostModel, selection, size: SizeChoice) -> float:
    if isinstance(size, (int, np.integer)):
        size = Individuals(int(size))
    if size.effective_n < 1:
        raise ValueError("size must be positive")
    return float(cost_over_grid(model, selection, SizeGrid.of(size))[0])


def max_feasible_size(model: CostModel, selection, budget: float, grid: SizeGrid):
    """Largest grid size whose cost fits the budget, or None."""
    ok = np.flatnonzero(cost_over_grid(model, selection, grid) <= budget)
    if ok.size == 0:
        return None
    return grid[int(ok[-1])]


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

DAYCARE_BUDGET = 569_074.0
SCHOOLGRANTS_BASELINE_BUDGET = 25_338.0
SCHOOLGRANTS_FOLLOWUP_BUDGET = 33_281.0

# 255 low-cost items took about 60 minutes in the original survey
SCHOOLGRANTS_TAU_LOW = 60.0 / 255.0
SCHOOLGRANTS_TAU_HIGH = 15.0


def daycare_model(n_covariates: int = 36) -> Survey:
    """Day-care calibration.

    Interview costs are n (eta + p T) with tau0 = tau = 3 minutes; the cost of
    the lengthy outcome assessments is carried by eta rather than tau0.
    """
    return Survey(
        phi=1473.0,
        alpha=0.4,
        kappa=StepFunction((1400, 3000, 4500, 6000), (150, 208, 250, 300, 350)),
        eta=200.0,
        p=1.91,
        tau0=3.0,
        tau=np.full(n_covariates, 3.0),
    )


def schoolgrants_model(n_low: int, n_high: int = 0) -> Blocked:
    """School-grants calibration; low-cost items first, then high-cost items.

    Low-cost questionnaires go to principals and teachers, so their interview
    cost scales with the number of schools, not students.
    """
    low = Block(
        phi=285.0, alpha=0.7,
        kappa=StepFunction.regular(20, 20, 19),
        eta=10.0, p=0.45, lam=0.14,
        interview_per_cluster=True,
    )
    high = Block(
        phi=1366.0, alpha=0.7,
        kappa=StepFunction.regular(4, 12, 17),
        eta=50.0, p=0.3, lam=0.019,
        mu_n=StepFunction.regular(10, 1, 7),
    )
    tau = np.concatenate([np.full(n_low, SCHOOLGRANTS_TAU_LOW), np.full(n_high, SCHOOLGRANTS_TAU_HIGH)])
    return Blocked(low=low, high=high, tau0=SCHOOLGRANTS_TAU_HIGH, tau=tau, low_items=tuple(range(n_low)))


def schoolgrants_grid() -> SizeGrid:
    return SizeGrid.cluster_product(range(5, 501, 5), range(1, 61))


PRESETS = ("daycare", "schoolgrants_baseline", "schoolgrants_followup")


def preset(name: str, n_covariates: int | None = None):
    """Return ``(model, budget, grid)`` for a named calibration."""
    if name == "daycare":
        return daycare_model(n_covariates or 36), DAYCARE_BUDGET, SizeGrid.range(500, 4000, 1)
    if name == "schoolgrants_baseline":
        return schoolgrants_model(n_covariates or 142), SCHOOLGRANTS_BASELINE_BUDGET, schoolgrants_grid()
    if name == "schoolgrants_followup":
        m = n_covariates or 143
        if m < 4:
            raise ValueError("follow-up preset needs the three baseline outcomes plus low-cost items")
        return schoolgrants_model(m - 3, 3), SCHOOLGRANTS_FOLLOWUP_BUDGET, schoolgrants_grid()
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def model_to_dict(model: CostModel, budget: float | None = None) -> dict:
    if isinstance(model, Flat):
        d = {"variant": "flat", "p": model.unit_price, "eta": model.eta, "tau": [1.0] * model.M}
    elif isinstance(model, Survey):
        d = {"variant": "survey", "phi": model.phi, "alpha": model.alpha, "kappa": model.kappa.to_dict(),
             "eta": model.eta, "p": model.p, "tau0": model.tau0, "tau": model.tau.tolist()}
    elif isinstance(model, Clustered):
        d = {"variant": "clustered", "phi": model.phi, "alpha": model.alpha, "kappa": model.kappa.to_dict(),
             "eta": model.eta, "p": model.p, "tau0": model.tau0, "tau": model.tau.tolist(),
             "lambda": model.lam, "mu_n": model.mu_n.to_dict()}
    elif isinstance(model, Blocked):
        blocks = {"low": model.low, "high": model.high}

        def per(attr, conv=lambda v: v):
            return {k: conv(getattr(b, attr)) for k, b in blocks.items()}

        d = {"variant": "blocked", "phi": per("phi"), "alpha": per("alpha"),
             "kappa": per("kappa", StepFunction.to_dict), "eta": per("eta"), "p": per("p"),
             "tau0": model.tau0, "tau": model.tau.tolist(), "lambda": per("lam"),
             "mu_n": per("mu_n", StepFunction.to_dict),
             "blocks": {"low": list(model.low_items), "high": list(model.high_items)},
             "interview_unit": {k: ("cluster" if b.interview_per_cluster else "individual")
                                for k, b in blocks.items()}}
    else:
        raise TypeError(f"unknown cost model {type(model).__name__}")
    if budget is not None:
        d["budget"] = budget
    return d


def model_from_dict(d: dict):
    """Parse a cost-model dict; returns ``(model, budget or None)``."""
    variant = d.get("variant")
    budget = d.get("budget")
    if variant == "flat":
        m = len(d["tau"]) if "tau" in d else int(d["n_covariates"])
        return Flat(m, unit_price=d.get("p", 1.0), eta=d.get("eta", 0.0)), budget
    if variant == "survey":
        return Survey(d["phi"], d["alpha"], StepFunction.from_dict(d["kappa"]), d["eta"], d["p"],
                      d["tau0"], d["tau"]), budget
    if variant == "clustered":
        mu_n = StepFunction.from_dict(d["mu_n"]) if "mu_n" in d else StepFunction.constant(1.0)
        return Clustered(d["phi"], d["alpha"], StepFunction.from_dict(d["kappa"]), d["eta"], d["p"],
                         d["tau0"], d["tau"], d["lambda"], mu_n), budget
    if variant == "blocked":
        units = d.get("interview_unit", {"low": "individual", "high": "individual"})
        blocks = {}
        for k in ("low", "high"):
            mu_n = d.get("mu_n", {}).get(k)
            blocks[k] = Block(
                phi=d["phi"][k], alpha=d["alpha"][k], kappa=StepFunction.from_dict(d["kappa"][k]),
                eta=d["eta"][k], p=d["p"][k], lam=d["lambda"][k],
                mu_n=StepFunction.from_dict(mu_n) if mu_n else StepFunction.constant(1.0),
                interview_per_cluster=units[k] == "cluster",
            )
        low = tuple(d["blocks"]["low"])
        tau = d["tau"]
        high = set(range(len(tau))) - set(low)
        if set(d["blocks"].get("high", high)) != high:
            raise ValueError("blocks must partition the covariates")
        return Blocked(blocks["low"], blocks["high"], d["tau0"], tau, low), budget
    raise ValueError(f"unknown cost-model variant {variant!r}")


def save_model(path, model: CostModel, budget: float | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, budget), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def resize_model(model: CostModel, m: int) -> CostModel:
    """Same calibration for a different number of covariates (uniform item times only)."""
    if model.M == m:
        return model
    if isinstance(model, Flat):
        return Flat(m, model.unit_price, model.eta)
    tau = np.unique(model.tau)
    if tau.size > 1:
        raise ValueError(f"cost model has {model.M} covariates with distinct times; data has {m}")
    t = float(tau[0]) if tau.size else 3.0
    if isinstance(model, Survey):
        return Survey(model.phi, model.alpha, model.kappa, model.eta, model.p, model.tau0, np.full(m, t))
    if isinstance(model, Clustered):
        return Clustered(model.phi, model.alpha, model.kappa, model.eta, model.p, model.tau0,
                         np.full(m, t), model.lam, model.mu_n)
    raise ValueError("blocked models cannot be resized; supply a model matching the data")
