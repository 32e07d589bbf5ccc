"""Out-of-bag VIMP, marginal VIMP and stepwise OOB errors.

One pass over the bootstrap replicates fits the full model on the inbag
rows and records, per replicate, the OOB error ``Err_b`` and the OOB
error after noising each group.  Marginal VIMP and the stepwise errors
refit reduced models on the *same* replicates and compare against the
*same* stored ``Err_b``; nothing in those passes recomputes the
baseline.

Replicates whose inbag fit is degenerate or does not converge, and
replicates whose OOB error is undefined (e.g. no OOB events), are left
out of every average and counted in the report diagnostics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AnalysisError,
    ConfigError,
    DegenerateFitError,
    UndefinedErrorValue,
    UnusableReplicateError,
)
from .metric import ConcordancePairs, misclassification_error, standardized_mse_error
from .regress import Design, FittedModel, fit, linear_predictor, wald_table
from .resample import BootstrapReplicate, make_replicates, map_reduce, ordered_map


class NoiseMethod(str, enum.Enum):
    ZERO_COEFFICIENT = "zero_coefficient"
    PERMUTE = "permute"

    @classmethod
    def parse(cls, value: str | NoiseMethod) -> NoiseMethod:
        if isinstance(value, cls):
            return value
        aliases = {"zero": cls.ZERO_COEFFICIENT, "zero_coefficient": cls.ZERO_COEFFICIENT,
                   "permute": cls.PERMUTE}
        try:
            return aliases[str(value)]
        except KeyError:
            raise ConfigError(f"unknown noise method {value!r}") from None


def mean(values) -> float:
    """Correctly rounded mean; independent of summation order."""
    values = list(values)
    return math.fsum(values) / len(values)


class OobScorer:
    """Prediction error of linear-predictor scores on a fixed set of OOB rows."""

    def __init__(self, design: Design, oob_rows: np.ndarray):
        self.family = design.family
        if oob_rows.size == 0:
            raise UndefinedErrorValue("no OOB rows")
        if self.family == "cox":
            self._pairs = ConcordancePairs(design.time[oob_rows], design.event[oob_rows])
            if self._pairs.n_pairs == 0:
                raise UndefinedErrorValue("no permissible OOB pairs (no OOB events)")
        else:
            self._y = np.asarray(design.response)[oob_rows]
            if self.family == "linear" and (self._y.size < 2 or np.var(self._y) <= 0):
                raise UndefinedErrorValue("constant OOB response")

    def __call__(self, scores: np.ndarray) -> float:
        if self.family == "cox":
            return self._pairs.error(scores)
        if self.family == "linear":
            return standardized_mse_error(scores, self._y)
        probs = 0.5 * (1.0 + np.tanh(0.5 * scores))
        return misclassification_error(probs, self._y)


def zero_group_columns(rows: np.ndarray, design: Design, group: str) -> np.ndarray:
    out = np.array(rows, dtype=np.float64)
    out[:, list(design.group_columns(group))] = 0.0
    return out


def noise_up(rows: np.ndarray, design: Design, group: str, method: NoiseMethod | str,
             coefficients: np.ndarray, rng: np.random.Generator | None = None):
    """Noise up ``group`` in the OOB ``rows``.

    Returns ``(rows, coefficients)`` to score with
    :func:`~oobvimp.regress.linear_predictor`.  Zeroing sets the group's
    coefficients to zero and leaves the rows alone.  Permuting applies
    one row permutation to all of the group's columns together, so each
    OOB row receives the complete group values of another row.
    """
    method = NoiseMethod.parse(method)
    cols = list(design.group_columns(group))
    if method is NoiseMethod.ZERO_COEFFICIENT:
        beta = np.array(coefficients, dtype=np.float64)
        beta[cols] = 0.0
        return rows, beta
    if rows.shape[0] < 2:
        raise UndefinedErrorValue("permutation noising needs at least 2 OOB rows")
    if rng is None:
        raise ConfigError("permutation noising needs a random generator")
    perm = rng.permutation(rows.shape[0])
    out = np.array(rows, dtype=np.float64)
    out[:, cols] = rows[perm][:, cols]
    return out, coefficients


# replicate status codes
OK = "ok"
NON_CONVERGED = "non_converged"
NO_OOB_EVENTS = "no_oob_events"


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    index_b: int
    status: str
    err: float = math.nan
    err_noised: np.ndarray | None = None
    coefficients: np.ndarray | None = None

    @property
    def usable(self) -> bool:
        return self.status == OK


def _inbag_fit(design: Design, rep: BootstrapReplicate) -> FittedModel | None:
    try:
        model = fit(design, rep.multiplicity.astype(np.float64))
    except (DegenerateFitError, UnusableReplicateError):
        return None
    return model if model.converged else None


@dataclass(frozen=True, eq=False)
class BaselinePass:
    """Per-replicate full-model results shared by every VIMP quantity."""

    design: Design
    replicates: tuple[BootstrapReplicate, ...]
    results: tuple[ReplicateResult, ...]
    method: NoiseMethod

    @property
    def usable(self) -> list[ReplicateResult]:
        return [r for r in self.results if r.usable]

    @property
    def err_b(self) -> dict[int, float]:
        return {r.index_b: r.err for r in self.results if r.usable}

    @property
    def err_oob(self) -> float:
        return mean(r.err for r in self.usable)

    def count(self, status: str) -> int:
        return sum(1 for r in self.results if r.status == status)


def baseline_pass(design: Design, replicates: Sequence[BootstrapReplicate],
                  method: NoiseMethod | str = NoiseMethod.ZERO_COEFFICIENT,
                  jobs: int = 1) -> BaselinePass:
    """Fit every replicate inbag; record ``Err_b`` and each group's ``Err_{v,b}``."""
    method = NoiseMethod.parse(method)
    groups = design.group_names

    def task(rep: BootstrapReplicate) -> ReplicateResult:
        model = _inbag_fit(design, rep)
        if model is None:
            return ReplicateResult(rep.index_b, NON_CONVERGED)
        try:
            scorer = OobScorer(design, rep.oob_rows)
        except UndefinedErrorValue:
            return ReplicateResult(rep.index_b, NO_OOB_EVENTS, coefficients=model.coefficients)
        rows = design.matrix[rep.oob_rows]
        err = scorer(linear_predictor(model, rows))
        noised = np.empty(len(groups))
        for gi, g in enumerate(groups):
            rng = rep.stream(gi + 1) if method is NoiseMethod.PERMUTE else None
            try:
                nrows, beta = noise_up(rows, design, g, method, model.coefficients, rng)
            except UndefinedErrorValue:
                return ReplicateResult(rep.index_b, NO_OOB_EVENTS, coefficients=model.coefficients)
            noised[gi] = scorer(linear_predictor(model, nrows, beta))
        return ReplicateResult(rep.index_b, OK, err, noised, model.coefficients)

    results = map_reduce(replicates, task, tuple, jobs=jobs)
    ordered = tuple(sorted(replicates, key=lambda r: r.index_b))
    return BaselinePass(design, ordered, results, method)


@dataclass(frozen=True)
class ReducedErrors:
    """Mean OOB error increase of reduced refits relative to ``Err_b``."""

    delta: dict[str, float | None]
    excluded: dict[str, int]


def _reduced_error(design: Design, reduced: Design, rep: BootstrapReplicate) -> float | None:
    model = _inbag_fit(reduced, rep)
    if model is None:
        return None
    scorer = OobScorer(design, rep.oob_rows)
    return scorer(linear_predictor(model, reduced.matrix[rep.oob_rows]))


def marginal_vimp(baseline: BaselinePass, jobs: int = 1) -> ReducedErrors:
    """Refit without each group on the baseline's replicates.

    A reduced fit that is degenerate or fails to converge drops that
    replicate for that group only; the drop is counted in ``excluded``.
    """
    design = baseline.design
    groups = design.group_names
    reduced = {g: design.drop_group(g) for g in groups}
    by_index = {r.index_b: r for r in baseline.results}
    usable_reps = [rep for rep in baseline.replicates if by_index[rep.index_b].usable]

    def task(rep):
        return [_reduced_error(design, reduced[g], rep) for g in groups]

    errs = ordered_map(usable_reps, task, jobs=jobs)
    delta: dict[str, float | None] = {}
    excluded: dict[str, int] = {}
    for gi, g in enumerate(groups):
        diffs = [row[gi] - by_index[rep.index_b].err
                 for rep, row in zip(usable_reps, errs) if row[gi] is not None]
        excluded[g] = len(usable_reps) - len(diffs)
        delta[g] = mean(diffs) if diffs else None
    return ReducedErrors(delta, excluded)


def stepwise_errors(baseline: BaselinePass, ordering: Sequence[str],
                    jobs: int = 1) -> tuple[list[float | None], int]:
    """OOB error of the nested models holding the top-k groups of ``ordering``.

    Returns the error vector and the number of excluded reduced fits.
    The last model is the full model, whose error is ``err_oob`` itself.
    """
    design = baseline.design
    if sorted(ordering) != sorted(design.group_names):
        raise ConfigError("ordering must be a permutation of the design groups")
    G = len(ordering)
    nested = [design.select_groups(ordering[: k + 1]) for k in range(G - 1)]
    usable = {r.index_b for r in baseline.usable}
    reps = [rep for rep in baseline.replicates if rep.index_b in usable]

    def task(rep):
        return [_reduced_error(design, d, rep) for d in nested]

    errs = ordered_map(reps, task, jobs=jobs)
    out: list[float | None] = []
    excluded = 0
    for k in range(G - 1):
        vals = [row[k] for row in errs if row[k] is not None]
        excluded += len(reps) - len(vals)
        out.append(mean(vals) if vals else None)
    out.append(baseline.err_oob)
    return out, excluded


@dataclass(frozen=True)
class VimpRow:
    group_name: str
    beta_hat: float | None
    p_value: float | None
    beta_inbag: float | None
    delta: float
    err_step: float | None
    delta_marginal: float | None


@dataclass(frozen=True)
class Diagnostics:
    non_converged: int = 0
    no_oob_events: int = 0
    marginal_excluded: int = 0
    stepwise_excluded: int = 0


@dataclass(frozen=True)
class VimpReport:
    family: str
    n: int
    B: int
    B_used: int
    err_oob: float
    rows: tuple[VimpRow, ...]
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    method: str = NoiseMethod.ZERO_COEFFICIENT.value
    seed: int = 0

    def row(self, group: str) -> VimpRow:
        for r in self.rows:
            if r.group_name == group:
                return r
        raise KeyError(group)


def group_deltas(baseline: BaselinePass) -> dict[str, float]:
    """``Delta_v``: mean of ``Err_{v,b} - Err_b`` over usable replicates."""
    usable = baseline.usable
    if not usable:
        raise AnalysisError("all bootstrap replicates were unusable")
    return {g: mean(r.err_noised[gi] - r.err for r in usable)
            for gi, g in enumerate(baseline.design.group_names)}


def inbag_coefficients(baseline: BaselinePass) -> dict[str, float]:
    """Mean inbag coefficient of each single-column group over converged fits."""
    fits = [r.coefficients for r in baseline.results if r.coefficients is not None]
    out = {}
    for g, cols in baseline.design.groups:
        if len(cols) == 1 and fits:
            out[g] = mean(float(c[cols[0]]) for c in fits)
    return out


def rank_groups(deltas: dict[str, float], group_order: Sequence[str]) -> list[str]:
    """Groups by delta descending; ties keep ``group_order``."""
    pos = {g: i for i, g in enumerate(group_order)}
    return sorted(group_order, key=lambda g: (-deltas[g], pos[g]))


def vimp_analysis(design: Design, B: int, master_seed: int,
                  method: NoiseMethod | str = NoiseMethod.ZERO_COEFFICIENT, *,
                  marginal: bool = True, stepwise: bool = True, jobs: int = 1) -> VimpReport:
    """Full analysis: Wald columns, VIMP, stepwise OOB errors, marginal VIMP.

    Raises:
        AnalysisError: the full-data fit is degenerate, or no replicate
            was usable.
    """
    method = NoiseMethod.parse(method)
    try:
        full = fit(design)
    except (DegenerateFitError, UnusableReplicateError) as exc:
        raise AnalysisError(f"full-data fit failed: {exc}") from exc
    wald = {w.group_name: w for w in wald_table(full, design)} if full.converged else {}

    replicates = make_replicates(design.n_rows, B, master_seed)
    base = baseline_pass(design, replicates, method, jobs=jobs)
    deltas = group_deltas(base)
    inbag = inbag_coefficients(base)
    order = rank_groups(deltas, design.group_names)

    marg = marginal_vimp(base, jobs=jobs) if marginal else None
    steps: dict[str, float | None] = {}
    step_excluded = 0
    if stepwise:
        errs, step_excluded = stepwise_errors(base, order, jobs=jobs)
        steps = dict(zip(order, errs))

    rows = []
    for g in order:
        w = wald.get(g)
        single = len(design.group_columns(g)) == 1
        rows.append(VimpRow(
            group_name=g,
            beta_hat=float(full.coefficients[design.group_columns(g)[0]]) if single else None,
            p_value=w.p_value if w is not None else None,
            beta_inbag=inbag.get(g),
            delta=deltas[g],
            err_step=steps.get(g),
            delta_marginal=marg.delta[g] if marg is not None else None,
        ))
    diag = Diagnostics(
        non_converged=base.count(NON_CONVERGED),
        no_oob_events=base.count(NO_OOB_EVENTS),
        marginal_excluded=sum(marg.excluded.values()) if marg is not None else 0,
        stepwise_excluded=step_excluded,
    )
    return VimpReport(design.family, design.n_rows, B, len(base.usable), base.err_oob,
                      tuple(rows), diag, method.value, master_seed)
