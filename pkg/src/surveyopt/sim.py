"""Monte Carlo harness: synthetic pre-experimental samples, design selection,
a simulated experiment at the chosen size, and per-method summary rows."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost import SizeGrid
from .data import PreSample, define_groups, studentize
from .evaluate import METHODS, Designer, Unachievable, eqb
from .regress import ols, residual_variance

SPECS = ("lin-sparse", "lin-exp", "exp")
BETA_TRUE = 0.18656
CSV_COLUMNS = ("scale", "method", "n_hat", "k_hat", "cost_over_budget", "rmse_criterion",
               "bias", "sd", "rmse_beta", "eqb")


def gamma_bar(spec: str, m: int) -> np.ndarray:
    k = np.arange(1, m + 1, dtype=float)
    if spec == "exp":
        return 10.0 * np.exp(-k)
    if spec not in SPECS:
        raise ValueError(f"unknown spec {spec!r}; choose from {', '.join(SPECS)}")
    if m < 5:
        raise ValueError("linear specs need at least five covariates")
    g = np.where(k <= 5, 3.0 - 2.0 * (k - 1) / 5.0, 0.0)
    if spec == "lin-exp":
        g = np.where(k > 5, np.exp(-k), g)
    return g


def make_gamma(spec: str, kappa: float, base_gamma) -> np.ndarray:
    """base + kappa/2 * sign(base) * gamma_bar, reading sign(0) as +1."""
    base = np.asarray(base_gamma, dtype=float)
    sign = np.where(base < 0, -1.0, 1.0)
    return base + 0.5 * sign * kappa * gamma_bar(spec, base.size)


@dataclass(frozen=True, eq=False)
class SimConfig:
    spec: str = "lin-sparse"
    kappa: float = 0.0
    base_gamma: np.ndarray | None = None
    beta_true: float = BETA_TRUE
    sigma_eps: float = 1.0
    N_pre: int = 1330
    M: int = 36
    grid: SizeGrid = field(default_factory=lambda: SizeGrid.range(500, 4000, 10))
    replications: int = 100
    seed: int = 0
    covariate_source: str = "gaussian"
    donor: np.ndarray | None = None
    methods: tuple = METHODS
    reference_n: int = 1330
    with_eqb: bool = True
    studentize: bool = True

    def __post_init__(self):
        if self.spec not in SPECS:
            raise ValueError(f"unknown spec {self.spec!r}; choose from {', '.join(SPECS)}")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.kappa < 0 or self.sigma_eps < 0:
            raise ValueError("kappa and sigma_eps must be nonnegative")
        if self.covariate_source not in ("gaussian", "resample"):
            raise ValueError("covariate_source is 'gaussian' or 'resample'")
        if self.covariate_source == "resample":
            if self.donor is None:
                raise ValueError("resampling covariates needs a donor matrix")
            object.__setattr__(self, "M", int(np.asarray(self.donor).shape[1]))
        base = np.zeros(self.M) if self.base_gamma is None else np.asarray(self.base_gamma, float)
        if base.shape != (self.M,):
            raise ValueError("base_gamma must have one entry per covariate")
        object.__setattr__(self, "base_gamma", base)
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def gamma(self) -> np.ndarray:
        return make_gamma(self.spec, self.kappa, self.base_gamma)


def _draw_x(config: SimConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.covariate_source == "resample":
        donor = np.asarray(config.donor, dtype=float)
        return donor[rng.integers(0, donor.shape[0], size=n)]
    return rng.standard_normal((n, config.M))


def simulate_pre(config: SimConfig, rng: np.random.Generator | None = None) -> PreSample:
    """Y = gamma'X + eps on N_pre draws; covariates studentized unless disabled."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    x = _draw_x(config, rng, config.N_pre)
    y = x @ config.gamma + config.sigma_eps * rng.standard_normal(config.N_pre)
    sample = PreSample(y, x, tuple(f"x{j + 1}" for j in range(config.M)), ("y",))
    return studentize(sample) if config.studentize else sample


def _replication(config: SimConfig, model, budget: float, rep: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(rep,)))
    pre = simulate_pre(config, rng)
    groups = define_groups(pre)
    target = residual_variance(pre, range(pre.M)) / config.reference_n
    engine = None
    out = {}
    for method in config.methods:
        try:
            # LASSO modes share penalties and fits within a replication
            designer = Designer(pre, groups, method, engine)
            engine = designer.engine or engine
            sel = designer(model, budget, config.grid)
        except ValueError as err:
            out[method] = {"error": str(err)}
            continue
        e = float("nan")
        if config.with_eqb:
            try:
                e = eqb(pre, groups, model, config.grid, method, target, budget, designer=designer).eqb
            except Unachievable:
                pass
        n = sel.n
        x = _draw_x(config, rng, n)
        d = (rng.random(n) < 0.5).astype(float)
        y = config.beta_true * d + x @ config.gamma + config.sigma_eps * rng.standard_normal(n)
        cols = np.column_stack([d, x[:, list(sel.selected_indices)]])
        if d.min() == d.max() or cols.shape[1] >= n:
            out[method] = {"error": "degenerate experimental sample"}
            continue
        fit = ols(cols, y)
        out[method] = {"n": n, "k": sel.k, "cob": sel.cost_over_budget, "rmse": sel.rmse,
                       "beta": float(fit.coefficients[0]), "eqb": e}
    return out


def _replication_star(args):
    return _replication(*args)


@dataclass(frozen=True)
class MCRow:
    scale: float
    method: str
    n_hat: float
    k_hat: float
    cost_over_budget: float
    rmse_criterion: float
    bias: float
    sd: float
    rmse_beta: float
    eqb: float
    failures: int = 0


def run_mc(config: SimConfig, model, budget: float, threads: int = 1) -> list[MCRow]:
    """One summary row per method; identical for any thread count."""
    jobs = [(config, model, budget, r) for r in range(config.replications)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(_replication_star, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        reps = [_replication_star(j) for j in jobs]
    rows = []
    for m in config.methods:
        ok = [r[m] for r in reps if "error" not in r[m]]
        fails = len(reps) - len(ok)
        if not ok:
            nan = float("nan")
            rows.append(MCRow(config.kappa, m, nan, nan, nan, nan, nan, nan, nan, nan, fails))
            continue
        beta = np.array([r["beta"] for r in ok])
        err = beta - config.beta_true
        rows.append(MCRow(
            scale=float(config.kappa), method=m,
            n_hat=float(np.mean([r["n"] for r in ok])),
            k_hat=float(np.mean([r["k"] for r in ok])),
            cost_over_budget=float(np.mean([r["cob"] for r in ok])),
            rmse_criterion=float(np.mean([r["rmse"] for r in ok])),
            bias=float(err.mean()),
            sd=float(beta.std(ddof=1)) if beta.size > 1 else 0.0,
            rmse_beta=float(np.sqrt(np.mean(err ** 2))),
            eqb=float(np.mean([r["eqb"] for r in ok])),
            failures=fails))
    return rows


def rows_to_csv(rows, path=None) -> str:
    """Render rows with round-trip float formatting; optionally write to ``path``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.scale, r.method] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[2:]])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
