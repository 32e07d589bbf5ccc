"""Misspecified-Cox simulation, Monte Carlo harness and subsample robustness.

The simulated log-hazard is

    alpha0 + b_psa * psa + b_tv * tv + q * tv**2 + c * tv**3

with three pure-noise covariates alongside.  Event times come from the
exponential inverse CDF and censoring times from an independent
exponential whose rate is calibrated to a target censoring fraction.
Covariate distributions and the baseline are not pinned down by the
method itself; the defaults below are documented choices (see README).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

from .dataset import ColumnSpec, Dataset, column
from .errors import AnalysisError, ConfigError, DegenerateFitError, UnusableReplicateError
from .regress import Design, design_from_dataset, fit, wald_table
from .resample import generator, mix
from .spline import SplineSpec, expand_variable
from .vimp import NoiseMethod, VimpReport, mean, vimp_analysis

COVARIATES = ("psa", "tumor_volume", "X1", "X2", "X3")
PILOT_SIZE = 100_000
PILOT_SEED = 0x5EED_C0DE


@dataclass(frozen=True)
class CoxSimParams:
    n: int = 1000
    beta_psa: float = 0.05
    beta_tumor_linear: float = 0.01
    psi_quadratic: float = 0.04
    psi_cubic: float = -0.005
    target_censoring: float = 0.70
    alpha0: float | None = None
    psa_range: tuple[float, float] = (0.0, 17.0)
    tumor_range: tuple[float, float] = (0.0, 10.0)
    median_time: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.target_censoring < 1.0:
            raise ConfigError(f"target_censoring must lie in (0, 1), got {self.target_censoring}")
        if self.n < 10:
            raise ConfigError(f"n must be >= 10, got {self.n}")
        for name, (lo, hi) in (("psa_range", self.psa_range), ("tumor_range", self.tumor_range)):
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lo < hi, got {(lo, hi)}")

    def psi(self, tv):
        """Non-linear part of the tumor-volume effect."""
        tv = np.asarray(tv, dtype=np.float64)
        return self.psi_quadratic * tv**2 + self.psi_cubic * tv**3

    def log_relative_hazard(self, psa, tv):
        return self.beta_psa * np.asarray(psa) + self.beta_tumor_linear * np.asarray(tv) + self.psi(tv)


def _covariates(params: CoxSimParams, rng: np.random.Generator, n: int):
    psa = rng.uniform(*params.psa_range, size=n)
    tv = rng.uniform(*params.tumor_range, size=n)
    noise = rng.standard_normal(size=(n, 3))
    return psa, tv, noise


def _calibration_key(params: CoxSimParams) -> CoxSimParams:
    return replace(params, n=10)


@lru_cache(maxsize=64)
def _calibrate(key: CoxSimParams) -> tuple[float, float]:
    psa, tv, _ = _covariates(key, generator(PILOT_SEED), PILOT_SIZE)
    lp = key.log_relative_hazard(psa, tv)
    if key.alpha0 is None:
        # population median event time equals median_time
        def median_gap(a0):
            return np.mean(np.exp(-key.median_time * np.exp(a0 + lp))) - 0.5

        alpha0 = optimize.brentq(median_gap, -50.0, 50.0, xtol=1e-12)
    else:
        alpha0 = key.alpha0
    hazard = np.exp(alpha0 + lp)

    # P(censored | x) = rate / (rate + h(x)) for exponential censoring
    def censor_gap(log_rate):
        rate = math.exp(log_rate)
        return np.mean(rate / (rate + hazard)) - key.target_censoring

    log_rate = optimize.bisect(censor_gap, -60.0, 60.0, xtol=1e-12)
    return float(alpha0), math.exp(log_rate)


def calibrate(params: CoxSimParams) -> tuple[float, float]:
    """``(alpha0, censoring_rate)`` for ``params``, from a fixed pilot sample."""
    return _calibrate(_calibration_key(params))


def simulate_cox_data(params: CoxSimParams, seed: int) -> Dataset:
    """Draw one dataset with columns psa, tumor_volume, X1..X3, time, event."""
    alpha0, censor_rate = calibrate(params)
    rng = generator(seed)
    psa, tv, noise = _covariates(params, rng, params.n)
    hazard = np.exp(alpha0 + params.log_relative_hazard(psa, tv))
    u_event = rng.random(params.n)
    u_censor = rng.random(params.n)
    t_event = -np.log1p(-u_event) / hazard
    t_censor = -np.log1p(-u_censor) / censor_rate
    time = np.minimum(t_event, t_censor)
    event = (t_event <= t_censor).astype(np.float64)
    specs = tuple(ColumnSpec(c) for c in COVARIATES) + (
        ColumnSpec("time", "numeric", "time"),
        ColumnSpec("event", "binary", "event"),
    )
    return Dataset(specs, (psa, tv, noise[:, 0], noise[:, 1], noise[:, 2], time, event))


def cox_design(dataset: Dataset, variant: str = "linear", df: int | None = None) -> Design:
    """Design for the simulated data; ``spline`` expands tumor volume."""
    design = design_from_dataset(dataset, "cox", COVARIATES, time="time", event="event")
    if variant == "linear":
        return design
    if variant == "spline":
        return expand_variable(design, SplineSpec("tumor_volume", df=df))
    raise ConfigError(f"unknown variant {variant!r}; expected linear or spline")


STATS = ("beta_hat", "p_value", "beta_inbag", "delta", "delta_marginal")


@dataclass(frozen=True)
class MonteCarloSummary:
    """Per-variable means over ``M`` completed runs."""

    variant: str
    M: int
    n: int
    B: int
    groups: tuple[str, ...]
    means: dict[str, dict[str, float | None]]
    err_oob: float
    params: dict = field(default_factory=dict)


def _mc_run(args) -> VimpReport:
    params, variant, df, B, seed, method, index = args
    rep_seed = mix(seed, index)
    data = simulate_cox_data(params, mix(rep_seed, 0))
    design = cox_design(data, variant, df)
    try:
        return vimp_analysis(design, B, mix(rep_seed, 1), method, stepwise=False)
    except Exception as exc:
        raise AnalysisError(f"Monte Carlo run {index} failed: {exc}") from exc


def summarize_reports(reports: Sequence[VimpReport], variant: str, B: int,
                      params: CoxSimParams | None = None) -> MonteCarloSummary:
    groups = tuple(r.group_name for r in reports[0].rows)
    groups = tuple(g for g in COVARIATES if g in groups) + tuple(g for g in groups if g not in COVARIATES)
    means: dict[str, dict[str, float | None]] = {}
    for g in groups:
        rows = [rep.row(g) for rep in reports]
        stats: dict[str, float | None] = {}
        for s in STATS:
            vals = [getattr(r, s) for r in rows if getattr(r, s) is not None]
            stats[s] = mean(vals) if vals else None
        means[g] = stats
    return MonteCarloSummary(
        variant, len(reports), reports[0].n, B, groups, means,
        mean(r.err_oob for r in reports),
        asdict(params) if params is not None else {},
    )


def monte_carlo(params: CoxSimParams, M: int, B: int, master_seed: int,
                variant: str = "linear", *, df: int | None = None,
                method: NoiseMethod | str = NoiseMethod.ZERO_COEFFICIENT,
                jobs: int = 1) -> MonteCarloSummary:
    """Average ``M`` independent simulate-and-analyze runs.

    Run ``r`` (0-based) simulates from ``mix(mix(seed, r), 0)`` and
    bootstraps from ``mix(mix(seed, r), 1)``, so the result does not
    depend on ``jobs``.  Runs execute in worker processes when
    ``jobs > 1``.
    """
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    if B < 1:
        raise ConfigError(f"B must be >= 1, got {B}")
    method = NoiseMethod.parse(method)
    tasks = [(params, variant, df, B, master_seed, method, r) for r in range(M)]
    if jobs > 1 and M > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_mc_run, tasks))
    else:
        reports = [_mc_run(t) for t in tasks]
    return summarize_reports(reports, variant, B, params)


DEFAULT_FRACTIONS = (0.10, 0.25, 0.50, 0.75)
MIN_SUBSAMPLE = 10
MAX_REDRAWS = 10


@dataclass(frozen=True)
class RobustnessRecord:
    fraction: float
    repeat: int
    variable: str
    p_value: float | None
    delta: float


@dataclass(frozen=True)
class QuantileRow:
    fraction: float
    variable: str
    log_p: tuple[float, float, float] | None
    delta: tuple[float, float, float]


@dataclass(frozen=True)
class RobustnessResult:
    records: tuple[RobustnessRecord, ...]
    quantiles: tuple[QuantileRow, ...]


def _has_event(design: Design, rows: np.ndarray) -> bool:
    return design.family != "cox" or bool(np.any(np.asarray(design.event)[rows] == 1.0))


def subsample_robustness(design: Design, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                         repeats: int = 500, B: int = 1000, seed: int = 0,
                         method: NoiseMethod | str = NoiseMethod.ZERO_COEFFICIENT,
                         jobs: int = 1) -> RobustnessResult:
    """Re-run the analysis on random without-replacement subsamples.

    For each fraction and repeat, a subsample of ``round(fraction * n)``
    rows is drawn, the full model is fitted for Wald p-values, and VIMP
    is computed.  Quantiles (25/50/75%) of the natural-log p-value and of
    VIMP are reported per fraction and variable.
    """
    n = design.n_rows
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    sizes = []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ConfigError(f"fraction {f} must lie in (0, 1]")
        size = int(round(f * n))
        if size < MIN_SUBSAMPLE:
            raise ConfigError(f"fraction {f} of n={n} leaves {size} rows (< {MIN_SUBSAMPLE})")
        sizes.append(size)

    records: list[RobustnessRecord] = []
    for fi, (f, size) in enumerate(zip(fractions, sizes)):
        for r in range(repeats):
            cell_seed = mix(mix(seed, fi + 1), r + 1)
            rng = generator(cell_seed)
            for _ in range(MAX_REDRAWS):
                rows = np.sort(rng.permutation(n)[:size]) if size < n else np.arange(n)
                if _has_event(design, rows):
                    break
            else:
                raise AnalysisError(
                    f"fraction {f}, repeat {r + 1}: no events after {MAX_REDRAWS} draws"
                )
            sub = design.take_rows(rows)
            try:
                model = fit(sub)
                pvals = {w.group_name: w.p_value for w in wald_table(model, sub)} if model.converged else {}
            except (DegenerateFitError, UnusableReplicateError):
                pvals = {}
            report = vimp_analysis(sub, B, mix(cell_seed, 0), method,
                                   marginal=False, stepwise=False, jobs=jobs)
            for g in design.group_names:
                records.append(RobustnessRecord(f, r + 1, g, pvals.get(g), report.row(g).delta))
    return RobustnessResult(tuple(records), robustness_quantiles(records, fractions, design.group_names))


TINY = np.finfo(np.float64).tiny


def robustness_quantiles(records: Sequence[RobustnessRecord], fractions: Sequence[float],
                         variables: Sequence[str]) -> tuple[QuantileRow, ...]:
    """25/50/75% quantiles of log p (floored at the smallest normal double) and delta."""
    out = []
    probs = (0.25, 0.5, 0.75)
    for f in fractions:
        for v in variables:
            cell = [r for r in records if r.fraction == f and r.variable == v]
            deltas = np.array([r.delta for r in cell])
            ps = np.array([r.p_value for r in cell if r.p_value is not None])
            logp = (tuple(float(q) for q in np.quantile(np.log(np.maximum(ps, TINY)), probs))
                    if ps.size else None)
            out.append(QuantileRow(f, v, logp, tuple(float(q) for q in np.quantile(deltas, probs))))
    return tuple(out)
