"""Regression fitting for the linear, logistic and Cox families.

All fits take frequency weights so that a bootstrap sample can be fitted
from its draw multiplicities without replicating rows.  The Cox model
maximizes the Breslow partial likelihood; logistic regression uses
Newton/IRLS.  Both iterative solvers start at zero, halve the step
whenever the log-likelihood would decrease, and stop once the relative
log-likelihood change drops below ``TOL`` or after ``MAX_ITER`` steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .dataset import Dataset, check_roles, column
from .errors import ConfigError, DegenerateFitError, UnusableReplicateError

FAMILIES = ("linear", "logistic", "cox")

MAX_ITER = 50
TOL = 1e-9
MAX_HALVINGS = 40
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Design:
    """Model-ready matrix with named column groups.

    ``matrix`` holds covariate columns only; the intercept of the linear
    and logistic families is handled by the solver.  Each group names one
    scientific variable and lists the columns that encode it.
    """

    matrix: np.ndarray
    column_names: tuple[str, ...]
    groups: tuple[tuple[str, tuple[int, ...]], ...]
    family: str
    response: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None
    expanded: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            m = m.reshape(len(m), -1)
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if len(self.column_names) != m.shape[1]:
            raise ConfigError("column_names must match the matrix width")
        seen: list[int] = []
        names = [g for g, _ in self.groups]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate group names: {names}")
        for name, cols in self.groups:
            if not cols:
                raise ConfigError(f"group {name!r} has no columns")
            seen.extend(cols)
        if sorted(seen) != list(range(m.shape[1])):
            raise ConfigError("every column must belong to exactly one group")
        if self.family == "cox":
            if self.time is None or self.event is None:
                raise ConfigError("the cox family needs time and event vectors")
            for vec in (self.time, self.event):
                if len(vec) != m.shape[0]:
                    raise ConfigError("response length differs from the matrix rows")
        else:
            if self.response is None or len(self.response) != m.shape[0]:
                raise ConfigError("response length differs from the matrix rows")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def group_names(self) -> list[str]:
        return [g for g, _ in self.groups]

    def group_columns(self, name: str) -> tuple[int, ...]:
        for g, cols in self.groups:
            if g == name:
                return cols
        raise ConfigError(f"unknown group {name!r}")

    def select_groups(self, names: Sequence[str]) -> Design:
        """Design restricted to ``names``, kept in their original order."""
        wanted = set(names)
        for n in wanted:
            self.group_columns(n)
        cols: list[int] = []
        groups = []
        for g, gcols in self.groups:
            if g in wanted:
                groups.append((g, tuple(range(len(cols), len(cols) + len(gcols)))))
                cols.extend(gcols)
        return Design(
            matrix=self.matrix[:, cols],
            column_names=tuple(self.column_names[c] for c in cols),
            groups=tuple(groups),
            family=self.family,
            response=self.response,
            time=self.time,
            event=self.event,
            expanded=self.expanded & wanted,
        )

    def drop_group(self, name: str) -> Design:
        return self.select_groups([g for g in self.group_names if g != name])

    def take_rows(self, rows: np.ndarray) -> Design:
        idx = np.asarray(rows, dtype=np.intp)

        def sub(v):
            return None if v is None else np.asarray(v)[idx]

        return Design(
            matrix=self.matrix[idx],
            column_names=self.column_names,
            groups=self.groups,
            family=self.family,
            response=sub(self.response),
            time=sub(self.time),
            event=sub(self.event),
            expanded=self.expanded,
        )

    @cached_property
    def time_order(self) -> np.ndarray:
        """Stable ascending sort of survival times (cox only)."""
        return np.argsort(np.asarray(self.time), kind="stable")


def design_from_dataset(
    dataset: Dataset,
    family: str,
    covariates: Sequence[str] | None = None,
    *,
    response: str | None = None,
    time: str | None = None,
    event: str | None = None,
) -> Design:
    """Build a one-column-per-variable design from a dataset.

    Roles are taken from the keyword arguments when given, otherwise from
    the dataset schema.  ``covariates`` defaults to every column whose
    role is ``covariate``.
    """
    roles = {s.name: s.role for s in dataset.specs}
    for name, role in ((response, "response"), (time, "time"), (event, "event")):
        if name is not None:
            dataset.spec(name)
            for k, v in list(roles.items()):
                if v == role and k != name:
                    roles[k] = "covariate"
            roles[name] = role
    ds = dataset.with_roles(roles)
    check_roles(ds.specs, family)

    by_role = {s.role: s.name for s in ds.specs if s.role in ("response", "time", "event")}
    if covariates is None:
        covariates = [s.name for s in ds.specs if s.role == "covariate"]
    covariates = list(covariates)
    for c in covariates:
        if ds.spec(c).role != "covariate":
            raise ConfigError(f"column {c!r} is a {ds.spec(c).role} column, not a covariate")
    if not covariates:
        raise ConfigError("no covariates selected")
    if family == "logistic":
        y = column(ds, by_role["response"])
        if np.any((y != 0.0) & (y != 1.0)):
            raise ConfigError("the logistic family needs a 0/1 response")

    matrix = np.column_stack([column(ds, c) for c in covariates])
    groups = tuple((c, (i,)) for i, c in enumerate(covariates))
    if family == "cox":
        return Design(matrix, tuple(covariates), groups, family,
                      time=column(ds, by_role["time"]), event=column(ds, by_role["event"]))
    return Design(matrix, tuple(covariates), groups, family,
                  response=column(ds, by_role["response"]))


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Result of :func:`fit`.

    ``coefficients`` has one entry per design column; ``intercept`` is
    zero for the Cox family.  ``covariance`` is the inverse observed
    information restricted to the design columns.
    """

    family: str
    coefficients: np.ndarray
    intercept: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    loglik_path: tuple[float, ...] = ()


@dataclass(frozen=True)
class WaldRow:
    group_name: str
    beta_hat: float
    se: float
    z: float
    p_value: float


def normal_two_sided_p(z: float) -> float:
    """Two-sided standard-normal tail probability ``2 * (1 - Phi(|z|))``.

    Evaluated as ``erfc(|z| / sqrt 2)`` from the C math library, which is
    accurate to a few ulp and keeps precision deep into the tail.
    """
    return math.erfc(abs(z) / math.sqrt(2.0))


def _weights(design: Design, weights) -> np.ndarray:
    if weights is None:
        return np.ones(design.n_rows)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (design.n_rows,):
        raise ConfigError(f"weights must have length {design.n_rows}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights must be finite and non-negative")
    return w


def _check_rank(X: np.ndarray, w: np.ndarray, center: bool, offset: int = 0) -> None:
    """Raise DegenerateFitError if the weighted columns are linearly dependent.

    With ``center`` the columns are centered at their weighted means
    first, which is what identifiability means for a Cox model.  Column
    indices in the error are shifted by ``-offset`` (used to hide the
    intercept column).
    """
    if X.shape[1] == 0:
        return
    sw = np.sqrt(w)
    A = X
    if center:
        A = X - (w @ X) / w.sum()
    A = A * sw[:, None]
    norms = np.linalg.norm(A, axis=0)
    scale = np.linalg.norm(X * sw[:, None], axis=0)
    flat = norms <= RANK_TOL * np.maximum(scale, 1.0)
    if np.any(flat):
        cols = tuple(int(c) - offset for c in np.flatnonzero(flat) if c >= offset)
        raise DegenerateFitError(f"constant or empty columns {cols} among weighted rows", cols)
    _, R, piv = scipy.linalg.qr(A / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    if rank < A.shape[1]:
        cols = tuple(sorted(int(c) - offset for c in piv[rank:] if c >= offset))
        raise DegenerateFitError(f"linearly dependent columns {cols} among weighted rows", cols)


def _newton(evaluate: Callable, p: int) -> tuple[np.ndarray, float, np.ndarray, bool, int, list[float]]:
    """Damped Newton ascent from zero.

    ``evaluate(beta, need_derivs)`` returns ``(loglik, score, info)``;
    the derivatives may be None when not requested.
    """
    beta = np.zeros(p)
    ll, score, info = evaluate(beta, True)
    path = [ll]
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise DegenerateFitError("singular information matrix") from exc
        if not np.all(np.isfinite(step)):
            break
        new_ll = -np.inf
        for _ in range(MAX_HALVINGS):
            cand = beta + step
            new_ll = evaluate(cand, False)[0]
            if np.isfinite(new_ll) and new_ll >= ll:
                break
            step = step * 0.5
        else:
            # no ascent direction left at machine precision
            converged = True
            break
        change = abs(new_ll - ll) / max(abs(ll), 1e-300)
        beta = cand
        ll, score, info = evaluate(beta, True)
        path.append(ll)
        if change < TOL:
            converged = True
            break
    converged = converged and bool(np.all(np.isfinite(beta)))
    return beta, ll, info, converged, it, path


def _inverse(info: np.ndarray) -> np.ndarray:
    if info.size == 0:
        return np.zeros((0, 0))
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFitError("singular information matrix") from exc
    return (cov + cov.T) / 2.0


class _CoxProblem:
    """Breslow partial likelihood over the positively weighted rows."""

    def __init__(self, design: Design, w: np.ndarray):
        order = design.time_order
        order = order[w[order] > 0]
        if order.size < 2:
            raise UnusableReplicateError("fewer than 2 rows with positive weight")
        t = np.asarray(design.time)[order]
        d = np.asarray(design.event)[order]
        self.X = design.matrix[order]
        self.w = w[order]
        n = t.size
        start = np.ones(n, dtype=bool)
        start[1:] = t[1:] != t[:-1]
        first = np.maximum.accumulate(np.where(start, np.arange(n), 0))
        ev = d == 1.0
        if not np.any(ev):
            raise UnusableReplicateError("no events among weighted rows")
        self.n = n
        self.first_e = first[ev]
        self.Xe = self.X[ev]
        self.we = self.w[ev]

    def evaluate(self, beta: np.ndarray, derivs: bool):
        X, w = self.X, self.w
        eta = X @ beta
        shift = eta.max()
        r = w * np.exp(eta - shift)
        s0 = np.cumsum(r[::-1])[::-1][self.first_e]
        ll = float(self.we @ (self.Xe @ beta - shift - np.log(s0)))
        if not derivs:
            return ll, None, None
        rx = r[:, None] * X
        s1 = np.cumsum(rx[::-1], axis=0)[::-1][self.first_e]
        xbar = s1 / s0[:, None]
        score = self.we @ (self.Xe - xbar)
        # sum_e w_e S2_e / S0_e == sum_j r_j c_j x_j x_j^T with c_j the
        # cumulative w_e / S0_e over events whose risk set contains j
        acc = np.zeros(self.n)
        np.add.at(acc, self.first_e, self.we / s0)
        c = np.cumsum(acc)
        info = (rx * c[:, None]).T @ X - (xbar * self.we[:, None]).T @ xbar
        return ll, score, info


def cox_partial_loglik(design: Design, beta, weights=None) -> float:
    """Breslow partial log-likelihood at ``beta``."""
    w = _weights(design, weights)
    return _CoxProblem(design, w).evaluate(np.asarray(beta, dtype=np.float64), False)[0]


def cox_score(design: Design, beta, weights=None) -> np.ndarray:
    """Analytic gradient of :func:`cox_partial_loglik`."""
    w = _weights(design, weights)
    return _CoxProblem(design, w).evaluate(np.asarray(beta, dtype=np.float64), True)[1]


def _fit_cox(design: Design, w: np.ndarray) -> FittedModel:
    prob = _CoxProblem(design, w)
    p = design.n_cols
    if p == 0:
        ll = prob.evaluate(np.zeros(0), False)[0]
        return FittedModel("cox", np.zeros(0), 0.0, np.zeros((0, 0)), True, 0, ll, (ll,))
    keep = w > 0
    _check_rank(design.matrix[keep], w[keep], center=True)
    beta, ll, info, conv, it, path = _newton(prob.evaluate, p)
    cov = _inverse(info) if conv else np.full((p, p), np.nan)
    return FittedModel("cox", beta, 0.0, cov, conv, it, ll, tuple(path))


def _with_intercept(design: Design, w: np.ndarray):
    keep = w > 0
    if np.count_nonzero(keep) < 2:
        raise UnusableReplicateError("fewer than 2 rows with positive weight")
    X = design.matrix[keep]
    A = np.empty((X.shape[0], X.shape[1] + 1))
    A[:, 0] = 1.0
    A[:, 1:] = X
    y = np.asarray(design.response, dtype=np.float64)[keep]
    return A, y, w[keep]


def _fit_linear(design: Design, w: np.ndarray) -> FittedModel:
    A, y, ww = _with_intercept(design, w)
    _check_rank(A, ww, center=False, offset=1)
    sw = np.sqrt(ww)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    rss = float(ww @ (resid * resid))
    total = float(ww.sum())
    dof = total - A.shape[1]
    sigma2 = rss / dof if dof > 0 else 0.0
    xtwx = (A * ww[:, None]).T @ A
    cov = _inverse(xtwx / sigma2) if sigma2 > 0 else np.zeros_like(xtwx)
    with np.errstate(divide="ignore"):
        ll = -0.5 * total * (math.log(2 * math.pi) + np.log(rss / total) + 1.0)
    return FittedModel("linear", coef[1:], float(coef[0]), cov[1:, 1:], True, 1, float(ll), (float(ll),))


def _fit_logistic(design: Design, w: np.ndarray) -> FittedModel:
    A, y, ww = _with_intercept(design, w)
    _check_rank(A, ww, center=False, offset=1)

    def evaluate(beta, derivs):
        eta = A @ beta
        ll = float(ww @ (y * eta - np.logaddexp(0.0, eta)))
        if not derivs:
            return ll, None, None
        prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
        score = A.T @ (ww * (y - prob))
        info = (A * (ww * prob * (1.0 - prob))[:, None]).T @ A
        return ll, score, info

    beta, ll, info, conv, it, path = _newton(evaluate, A.shape[1])
    p = A.shape[1]
    cov = _inverse(info) if conv else np.full((p, p), np.nan)
    return FittedModel("logistic", beta[1:], float(beta[0]), cov[1:, 1:], conv, it, ll, tuple(path))


def fit(design: Design, weights=None) -> FittedModel:
    """Fit ``design`` with non-negative frequency ``weights`` (default all 1).

    Raises:
        DegenerateFitError: weighted columns are rank deficient; the
            exception carries the offending column indices.
        UnusableReplicateError: fewer than two positively weighted rows,
            or no events among them for the Cox family.
    """
    w = _weights(design, weights)
    if design.family == "cox":
        return _fit_cox(design, w)
    if design.family == "logistic":
        return _fit_logistic(design, w)
    return _fit_linear(design, w)


def linear_predictor(model: FittedModel, rows: np.ndarray, coefficients=None) -> np.ndarray:
    """Row-wise ``rows @ coefficients + intercept``.

    ``coefficients`` overrides the model's own vector (used for zeroing a
    group).  For the Cox family a higher score means higher hazard.
    """
    beta = model.coefficients if coefficients is None else coefficients
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise ValueError(
            f"dimension mismatch: rows have shape {X.shape}, model has {beta.shape[0]} coefficients"
        )
    return X @ beta + model.intercept


def wald_row(model: FittedModel, design: Design, group: str) -> WaldRow:
    cols = design.group_columns(group)
    if len(cols) != 1:
        raise ConfigError(f"group {group!r} spans {len(cols)} columns; no single Wald row")
    if not model.converged:
        raise ConfigError("Wald statistics need a converged model")
    j = cols[0]
    beta = float(model.coefficients[j])
    se = math.sqrt(max(float(model.covariance[j, j]), 0.0))
    if se > 0:
        z = beta / se
    else:
        z = 0.0 if beta == 0 else math.copysign(math.inf, beta)
    return WaldRow(group, beta, se, z, normal_two_sided_p(z))


def wald_table(model: FittedModel, design: Design, groups: Sequence[str] | None = None) -> list[WaldRow]:
    """Wald rows, by default for every single-column group in design order."""
    if groups is None:
        groups = [g for g, cols in design.groups if len(cols) == 1]
    return [wald_row(model, design, g) for g in groups]
