"""Pre-experimental samples: loading, cleaning, studentizing, grouping."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

ZERO_VARIANCE_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PreSample:
    """Outcomes (N x L) and candidate covariates (N x M).

    ``blocks`` > 1 marks a stacked multivariate sample whose rows are L blocks
    of the original N; intercepts are fitted per block. ``survey_items`` maps
    each column to the questionnaire item the cost model charges for it.
    """

    outcomes: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple
    outcome_names: tuple
    studentized: bool = False
    column_scales: tuple = None
    blocks: int = 1
    survey_items: tuple = None

    def __post_init__(self):
        y = _frozen(self.outcomes)
        if y.ndim == 1:
            y = _frozen(y[:, None])
        x = _frozen(self.covariates)
        if x.ndim == 1:
            x = _frozen(x.reshape(len(y), -1))
        n, m = x.shape
        if y.shape[0] != n:
            raise ValueError("outcomes and covariates have different row counts")
        if n < 2:
            raise ValueError("a pre-experimental sample needs at least two rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("missing or non-finite values; filter complete cases first")
        if len(self.covariate_names) != m or len(self.outcome_names) != y.shape[1]:
            raise ValueError("name lists do not match the data")
        if n % self.blocks:
            raise ValueError("row count is not a multiple of the block count")
        scales = self.column_scales if self.column_scales is not None else (1.0,) * m
        items = self.survey_items if self.survey_items is not None else tuple(range(m))
        if len(scales) != m or len(items) != m:
            raise ValueError("column metadata does not match the covariates")
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "outcome_names", tuple(self.outcome_names))
        object.__setattr__(self, "column_scales", tuple(float(s) for s in scales))
        object.__setattr__(self, "survey_items", tuple(int(i) for i in items))

    @property
    def N(self) -> int:
        return self.covariates.shape[0]

    @property
    def M(self) -> int:
        return self.covariates.shape[1]

    @property
    def L(self) -> int:
        return self.outcomes.shape[1]

    @property
    def y(self) -> np.ndarray:
        if self.L != 1:
            raise ValueError("sample has several outcomes; stack them first")
        return self.outcomes[:, 0]

    @property
    def n_items(self) -> int:
        return max(self.survey_items) + 1 if self.survey_items else 0

    def item_mask(self, indices) -> np.ndarray:
        """Questionnaire items needed to observe the given columns."""
        mask = np.zeros(self.n_items, dtype=bool)
        idx = list(indices)
        if idx:
            mask[np.asarray(self.survey_items)[idx]] = True
        return mask

    def take(self, rows) -> "PreSample":
        """Row subset (unstacked samples only)."""
        if self.blocks != 1:
            raise ValueError("cannot subset rows of a stacked sample")
        rows = np.asarray(rows)
        return PreSample(self.outcomes[rows], self.covariates[rows], self.covariate_names,
                         self.outcome_names, self.studentized, self.column_scales, 1, self.survey_items)

    def select_outcome(self, name_or_index) -> "PreSample":
        j = self.outcome_names.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        return PreSample(self.outcomes[:, [j]], self.covariates, self.covariate_names,
                         (self.outcome_names[j],), self.studentized, self.column_scales,
                         self.blocks, self.survey_items)


@dataclass(frozen=True)
class DropReport:
    dropped_rows: list = field(default_factory=list)
    dropped_columns: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"dropped_rows": self.dropped_rows, "dropped_columns": self.dropped_columns})


@dataclass(frozen=True)
class GroupSpec:
    """Covariate groups selected jointly; forced columns belong to every group."""

    groups: tuple
    forced: tuple = ()

    def __post_init__(self):
        groups = tuple(tuple(sorted(set(int(i) for i in g))) for g in self.groups)
        forced = tuple(sorted(set(int(i) for i in self.forced)))
        if not groups or any(len(g) == 0 for g in groups):
            raise ValueError("groups must be nonempty")
        if any(not set(forced) <= set(g) for g in groups):
            raise ValueError("forced columns must appear in every group")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "forced", forced)

    @property
    def p(self) -> int:
        return len(self.groups)

    @property
    def j_max(self) -> int:
        return max(len(g) for g in self.groups)


def _parse(token: str) -> float:
    token = token.strip()
    if not token:
        return math.nan
    try:
        v = float(token)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def load_csv(path, outcome_columns) -> tuple[PreSample, DropReport]:
    """Read a CSV; named outcome columns, every other column a candidate covariate.

    Rows with an empty or non-numeric cell are dropped, then covariates with
    zero variance. Dropped rows are reported 1-based, header excluded.
    """
    if isinstance(outcome_columns, str):
        outcome_columns = [outcome_columns]
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    for name in outcome_columns:
        if name not in header:
            raise ValueError(f"missing outcome column {name!r}")
    if not rows:
        raise ValueError(f"{path} has a header but no data rows")

    table = np.full((len(rows), len(header)), math.nan)
    for i, r in enumerate(rows):
        for j in range(min(len(r), len(header))):
            table[i, j] = _parse(r[j])
    complete = np.all(np.isfinite(table), axis=1)
    dropped_rows = [int(i) + 1 for i in np.flatnonzero(~complete)]
    table = table[complete]
    if table.shape[0] == 0:
        raise ValueError("no rows survive the complete-case filter")

    out_idx = [header.index(c) for c in outcome_columns]
    cov_idx = [j for j, h in enumerate(header) if h not in outcome_columns]
    x = table[:, cov_idx]
    keep = np.var(x, axis=0) >= ZERO_VARIANCE_TOL if x.shape[0] else np.ones(len(cov_idx), bool)
    dropped_cols = [header[cov_idx[j]] for j in np.flatnonzero(~keep)]
    names = tuple(header[cov_idx[j]] for j in np.flatnonzero(keep))
    sample = PreSample(table[:, out_idx], x[:, keep], names, tuple(outcome_columns))
    return sample, DropReport(dropped_rows, dropped_cols)


def save_csv(sample: PreSample, path) -> None:
    """Write outcomes then covariates, floats in round-trip precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(sample.outcome_names) + list(sample.covariate_names))
        for yi, xi in zip(sample.outcomes, sample.covariates):
            w.writerow([repr(float(v)) for v in yi] + [repr(float(v)) for v in xi])


def studentize(sample: PreSample) -> PreSample:
    """Scale each covariate to unit variance (divisor N); outcomes untouched."""
    x = sample.covariates
    sd = np.sqrt(np.var(x, axis=0))
    if np.any(sd ** 2 < ZERO_VARIANCE_TOL):
        raise ValueError("zero-variance covariate; remove it before studentizing")
    scales = tuple(float(a * b) for a, b in zip(sample.column_scales, sd))
    return PreSample(sample.outcomes, x / sd, sample.covariate_names, sample.outcome_names,
                     True, scales, sample.blocks, sample.survey_items)


def define_groups(sample: PreSample, grouping="singletons", forced=()) -> GroupSpec:
    m = sample.M
    forced = set(int(i) for i in forced)
    if grouping == "singletons":
        grouping = [[j] for j in range(m)]
    grouping = [list(g) for g in grouping]
    for g in grouping:
        if not g:
            raise ValueError("empty group")
        for i in g:
            if not 0 <= int(i) < m:
                raise ValueError(f"covariate index {i} out of range 0..{m - 1}")
    for i in forced:
        if not 0 <= i < m:
            raise ValueError(f"forced index {i} out of range 0..{m - 1}")
    covered = set().union(*map(set, grouping)) | forced
    if covered != set(range(m)):
        missing = sorted(set(range(m)) - covered)
        raise ValueError(f"grouping does not cover covariates {missing}")
    return GroupSpec(tuple(tuple(set(g) | forced) for g in grouping), tuple(sorted(forced)))


def groups_from_names(sample: PreSample, name_groups, forced_names=()) -> GroupSpec:
    index = {n: j for j, n in enumerate(sample.covariate_names)}

    def look(n):
        if n not in index:
            raise ValueError(f"unknown covariate {n!r}")
        return index[n]

    grouping = [[look(n) for n in g] for g in name_groups] if name_groups != "singletons" else "singletons"
    forced = [look(n) for n in forced_names]
    if grouping != "singletons":
        # covariates left out of every named group become singletons
        covered = set().union(*map(set, grouping)) | set(forced)
        grouping = grouping + [[j] for j in range(sample.M) if j not in covered]
    return define_groups(sample, grouping, forced)


def stack_multivariate(sample: PreSample, grouping: GroupSpec) -> tuple[PreSample, GroupSpec]:
    """Stack L outcomes into one regression on (I_L kron X).

    Stacked column l*M + m is covariate m in outcome block l; a group keeps all
    L copies of its covariates so that selecting it collects them once.
    """
    n_out, n, m = sample.L, sample.N, sample.M
    if n_out < 2:
        raise ValueError("stacking requires L >= 2 outcomes")
    if sample.blocks != 1:
        raise ValueError("sample is already stacked")
    y = sample.outcomes.T.reshape(-1)
    x = np.kron(np.eye(n_out), sample.covariates)
    names = tuple(f"{c}[{o}]" for o in sample.outcome_names for c in sample.covariate_names)
    items = tuple(sample.survey_items[j] for _ in range(n_out) for j in range(m))
    stacked = PreSample(y, x, names, ("+".join(sample.outcome_names),), sample.studentized,
                        sample.column_scales * n_out, n_out, items)

    def lift(idx):
        return tuple(l * m + j for l in range(n_out) for j in idx)

    groups = GroupSpec(tuple(lift(g) for g in grouping.groups), lift(grouping.forced))
    return stacked, groups
