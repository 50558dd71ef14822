"""``surveyopt`` command line: design, eqb, power, cost, simulate, evaluate.

Exit codes: 0 success, 2 invalid input, 3 infeasible budget or unachievable target.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cost import (PRESETS, Clusters, Individuals, SizeGrid, load_model, model_to_dict, preset,
                   resize_model, save_model, total_cost)
from .data import groups_from_names, load_csv, stack_multivariate, studentize
from .evaluate import (METHODS, DesignReport, PowerSpec, Unachievable, design_all, eqb,
                       kfold_evaluate, power)
from .regress import residual_variance
from .selector_oga import InfeasibleError
from .sim import SPECS, SimConfig, rows_to_csv, run_mc

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# manifest and output helpers
# --------------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to rerun a command. Timing lives in a sidecar file so
    that reports stay byte-identical across reruns."""

    command: str
    inputs: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "input_hashes": self.inputs, "config": self.config,
                "seed": self.seed, "version": self.version}


# flags that change how a run executes but not what it computes
_NOT_CONFIG = {"threads", "out", "func"}


def _manifest(args) -> RunManifest:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}
    inputs = {}
    for key in ("data", "cost", "groups"):
        path = getattr(args, key, None)
        if path and os.path.isfile(path):
            inputs[key] = _sha256(path)
    return RunManifest(args.command, inputs, cfg, getattr(args, "seed", None))


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(args) -> str | None:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def _finish(args, manifest: RunManifest, started: float) -> None:
    if getattr(args, "out", None) and os.path.isdir(args.out):
        _write_json(os.path.join(args.out, "timing.json"),
                    {"seconds": round(time.perf_counter() - started, 3), "threads": _threads(args)})


def _table(rows: list[dict], columns) -> str:
    def fmt(v):
        if isinstance(v, float):
            return "nan" if not math.isfinite(v) else f"{v:.6g}"
        return str(v)
    cells = [[c for c in columns]] + [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    if t is None:
        env = os.environ.get("SURVEYOPT_THREADS")
        t = int(env) if env else (os.cpu_count() or 1)
    if t < 1:
        raise UsageError("--threads must be at least 1")
    return t


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------

def _range(text: str, flag: str) -> list[int]:
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise UsageError(f"{flag} expects LO:HI:STEP integers, got {text!r}") from None
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3:
        raise UsageError(f"{flag} expects LO:HI:STEP, got {text!r}")
    lo, hi, step = parts
    if lo < 1 or hi < lo or step < 1:
        raise UsageError(f"{flag} range {text!r} is empty or nonpositive")
    return list(range(lo, hi + 1, step))


def _names(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _methods(text: str) -> tuple:
    ms = tuple(_names(text))
    bad = [m for m in ms if m not in METHODS]
    if bad or not ms:
        raise UsageError(f"--method must be a comma list from {', '.join(METHODS)}")
    return ms


def _load_problem(args):
    """Sample, groups, cost model, budget and grid from the shared flags."""
    if not args.data:
        raise UsageError("--data is required")
    if not args.outcome:
        raise UsageError("--outcome is required")
    outcomes = _names(args.outcome)
    try:
        sample, report = load_csv(args.data, outcomes)
    except FileNotFoundError as err:
        raise UsageError(str(err)) from None
    sample = studentize(sample)

    name_groups = "singletons"
    if args.groups:
        with open(args.groups, encoding="utf-8") as fh:
            name_groups = json.load(fh)
        if not isinstance(name_groups, list) or not all(isinstance(g, list) for g in name_groups):
            raise UsageError("--groups must hold a JSON list of name lists")
    groups = groups_from_names(sample, name_groups, _names(args.force))
    if args.stack:
        if sample.L < 2:
            raise UsageError("stacking requires L >= 2 outcomes")
        sample, groups = stack_multivariate(sample, groups)
    elif sample.L > 1:
        raise UsageError("several outcomes given; pass --stack to combine them")

    model, budget, grid = _load_cost(args.cost, sample.n_items)
    if args.budget is not None:
        budget = args.budget
    if budget is None or not budget > 0:
        raise UsageError("a positive --budget is required for this cost model")
    if args.grid:
        grid = SizeGrid.individuals(_range(args.grid, "--grid"))
    if args.clusters or args.per_cluster:
        if not (args.clusters and args.per_cluster):
            raise UsageError("--clusters and --per-cluster go together")
        grid = SizeGrid.cluster_product(_range(args.clusters, "--clusters"),
                                        _range(args.per_cluster, "--per-cluster"))
    if grid is None:
        raise UsageError("--grid (or --clusters/--per-cluster) is required for this cost model")
    return sample, groups, model, float(budget), grid, report


def _load_cost(spec: str | None, m: int):
    if not spec:
        raise UsageError("--cost is required")
    if spec in PRESETS:
        return preset(spec, m)
    if not os.path.isfile(spec):
        raise UsageError(f"--cost {spec!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    model, budget = load_model(spec)
    if model.M != m:
        model = resize_model(model, m)
    return model, budget, None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _reference_target(sample, args) -> float | None:
    if getattr(args, "target", None) is not None:
        if not args.target > 0:
            raise UsageError("--target must be a positive RMSE")
        return args.target ** 2
    if getattr(args, "reference_n", None) is not None:
        if args.reference_n < 1:
            raise UsageError("--reference-n must be positive")
        return residual_variance(sample, range(sample.M)) / args.reference_n
    return None


def cmd_design(args) -> int:
    started = time.perf_counter()
    manifest = _manifest(args)
    sample, groups, model, budget, grid, drops = _load_problem(args)
    methods = _methods(args.method)
    sels = design_all(sample, groups, model, budget, grid, methods)
    target = _reference_target(sample, args)
    reports = []
    for m, sel in sels.items():
        e = float("nan")
        if target is not None:
            try:
                e = eqb(sample, groups, model, grid, m, target, budget).eqb
            except Unachievable:
                pass
        reports.append(DesignReport(m, sel, budget, e))
    rows = [r.to_dict() for r in reports]
    print(_table(rows, ("method", "n", "k", "cost_over_budget", "rmse", "eqb", "relative_eqb")))
    out = _outdir(args)
    if out:
        for m, sel in sels.items():
            _write_json(os.path.join(out, f"selection_{m}.json"), sel.to_dict())
        _write_comparison(os.path.join(out, "comparison.csv"), rows)
        _write_json(os.path.join(out, "report.json"),
                    {"manifest": manifest.to_dict(), "drops": json.loads(drops.to_json()),
                     "budget": budget, "methods": rows,
                     "selections": {m: s.to_dict() for m, s in sels.items()}})
    _finish(args, manifest, started)
    return EXIT_OK


def _write_comparison(path, rows) -> None:
    cols = ("method", "n", "k", "cost_over_budget", "rmse", "eqb", "relative_eqb")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")


def cmd_eqb(args) -> int:
    started = time.perf_counter()
    manifest = _manifest(args)
    if args.target is None and args.reference_n is None:
        raise UsageError("eqb needs --target RMSE or --reference-n N")
    sample, groups, model, budget, grid, _ = _load_problem(args)
    target = _reference_target(sample, args)
    rows = []
    for m in _methods(args.method):
        res = eqb(sample, groups, model, grid, m, target, budget, cap=args.cap_factor * budget)
        rows.append({"method": m, "eqb": res.eqb, "relative_eqb": res.relative_eqb,
                     "target_rmse": math.sqrt(target)})
    print(_table(rows, ("method", "eqb", "relative_eqb", "target_rmse")))
    if _outdir(args):
        _write_json(os.path.join(args.out, "eqb.json"), {"manifest": manifest.to_dict(), "methods": rows})
    _finish(args, manifest, started)
    return EXIT_OK


def cmd_power(args) -> int:
    try:
        spec = PowerSpec(args.beta, args.sigma, args.n, args.dbar, args.alpha)
    except ValueError as err:
        raise UsageError(str(err)) from None
    print(json.dumps({"power": power(spec), "beta": spec.beta, "sigma": spec.sigma, "n": spec.n,
                      "dbar": spec.dbar, "alpha": spec.alpha}, sort_keys=True))
    return EXIT_OK


def cmd_cost(args) -> int:
    if args.cost_command == "preset":
        model, budget, _ = preset(args.name, args.covariates)
        if args.out:
            save_model(args.out, model, budget)
        else:
            print(json.dumps(model_to_dict(model, budget), indent=2, sort_keys=True))
        return EXIT_OK
    if args.cost in PRESETS:
        model, budget, _ = preset(args.cost, args.covariates)
    elif os.path.isfile(args.cost):
        model, budget = load_model(args.cost)
    else:
        raise UsageError(f"--cost {args.cost!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    if args.items == "all":
        items = list(range(model.M))
    else:
        try:
            items = [int(i) for i in _names(args.items)]
        except ValueError:
            raise UsageError("--items takes 'all' or comma-separated 0-based indices") from None
    mask = np.zeros(model.M, dtype=bool)
    if any(not 0 <= i < model.M for i in items):
        raise UsageError(f"item indices must lie in 0..{model.M - 1}")
    mask[items] = True
    if args.per_cluster:
        size = Clusters(args.n, args.per_cluster)
    else:
        size = Individuals(args.n)
    c = total_cost(model, mask, size)
    result = {"cost": c, "n": size.effective_n, "items": len(items)}
    if budget:
        result["cost_over_budget"] = c / budget
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    manifest = _manifest(args)
    if args.spec not in SPECS:
        raise UsageError(f"--spec must be one of {', '.join(SPECS)}")
    try:
        kappas = [float(k) for k in _names(args.kappa)]
    except ValueError:
        raise UsageError("--kappa takes comma-separated numbers") from None
    model, budget, grid = _load_cost(args.cost, args.covariates)
    if args.budget is not None:
        budget = args.budget
    if budget is None:
        raise UsageError("--budget is required for this cost model")
    grid = SizeGrid.individuals(_range(args.grid, "--grid")) if args.grid else SizeGrid.range(500, 4000, 10)
    rows = []
    for kappa in kappas:
        cfg = SimConfig(spec=args.spec, kappa=kappa, sigma_eps=args.sigma, N_pre=args.n_pre,
                        M=args.covariates, grid=grid, replications=args.reps, seed=args.seed,
                        methods=_methods(args.method), reference_n=args.reference_n,
                        with_eqb=not args.no_eqb)
        rows.extend(run_mc(cfg, model, float(budget), _threads(args)))
    text = rows_to_csv(rows)
    sys.stdout.write(text)
    if _outdir(args):
        with open(os.path.join(args.out, "simulation.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        _write_json(os.path.join(args.out, "manifest.json"), manifest.to_dict())
    _finish(args, manifest, started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    manifest = _manifest(args)
    sample, groups, model, budget, grid, _ = _load_problem(args)
    if args.stack:
        raise UsageError("k-fold evaluation does not support --stack")
    report = kfold_evaluate(sample, groups, model, None if args.auto_budget else budget, grid,
                            _methods(args.method), folds=args.folds, seed=args.seed,
                            with_eqb=not args.no_eqb)
    rows = [{"method": m, **v} for m, v in report.averages.items()]
    print(_table(rows, ("method", "n", "k", "cost_over_budget", "rmse", "eqb", "relative_eqb")))
    if _outdir(args):
        _write_json(os.path.join(args.out, "kfold.json"), {"manifest": manifest.to_dict(), **report.to_dict()})
    _finish(args, manifest, started)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parser
# --------------------------------------------------------------------------

def _problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="pre-experimental CSV")
    p.add_argument("--outcome", help="outcome column name(s), comma separated")
    p.add_argument("--cost", help=f"cost-model JSON or preset ({', '.join(PRESETS)})")
    p.add_argument("--budget", type=float, help="budget (overrides the preset)")
    p.add_argument("--grid", help="sample-size grid LO:HI:STEP")
    p.add_argument("--clusters", help="cluster-count grid LO:HI:STEP")
    p.add_argument("--per-cluster", dest="per_cluster", help="cluster-size grid LO:HI:STEP")
    p.add_argument("--method", default="oga,lasso,post-lasso", help="comma list of methods")
    p.add_argument("--force", help="covariates to include in every selection")
    p.add_argument("--groups", help="JSON file with a list of covariate-name lists")
    p.add_argument("--stack", action="store_true", help="stack several outcomes into one problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surveyopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"surveyopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="choose sample size and covariates")
    _problem_flags(p)
    p.add_argument("--reference-n", dest="reference_n", type=int,
                   help="also report EQB against all covariates at this sample size")
    p.add_argument("--target", type=float, help="also report EQB for this target RMSE")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("eqb", help="equivalent budget for a target precision")
    _problem_flags(p)
    p.add_argument("--target", type=float, help="target RMSE")
    p.add_argument("--reference-n", dest="reference_n", type=int,
                   help="target = all covariates at this sample size")
    p.add_argument("--cap-factor", dest="cap_factor", type=float, default=10.0)
    p.set_defaults(func=cmd_eqb)

    p = sub.add_parser("power", help="power of the two-sided t-test")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dbar", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("cost", help="cost-model presets and evaluation")
    csub = p.add_subparsers(dest="cost_command", required=True)
    q = csub.add_parser("preset", help="write a calibrated preset as JSON")
    q.add_argument("--name", choices=PRESETS, required=True)
    q.add_argument("--covariates", type=int, default=None)
    q.add_argument("--out")
    q.set_defaults(func=cmd_cost)
    q = csub.add_parser("eval", help="cost of a selection at a sample size")
    q.add_argument("--cost", required=True)
    q.add_argument("--covariates", type=int, default=None)
    q.add_argument("--n", type=int, required=True, help="individuals, or clusters with --per-cluster")
    q.add_argument("--per-cluster", dest="per_cluster", type=int)
    q.add_argument("--items", default="all", help="'all' or 0-based indices")
    q.set_defaults(func=cmd_cost)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of the methods")
    p.add_argument("--spec", default="lin-sparse")
    p.add_argument("--kappa", default="0", help="comma list of scales")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost", default="daycare")
    p.add_argument("--budget", type=float)
    p.add_argument("--grid", help="LO:HI:STEP (default 500:4000:10)")
    p.add_argument("--covariates", type=int, default=36)
    p.add_argument("--n-pre", dest="n_pre", type=int, default=1330)
    p.add_argument("--reference-n", dest="reference_n", type=int, default=1330)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--method", default="oga,lasso,post-lasso")
    p.add_argument("--no-eqb", dest="no_eqb", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="k-fold out-of-sample evaluation")
    _problem_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--auto-budget", dest="auto_budget", action="store_true",
                   help="budget per fold = cost of all covariates at the training size")
    p.add_argument("--no-eqb", dest="no_eqb", action="store_true")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InfeasibleError, Unachievable) as err:
        print(f"surveyopt: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"surveyopt: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
