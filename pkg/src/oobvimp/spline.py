"""B-spline basis expansion with grouped columns.

The basis follows the usual regression convention: boundary knots sit at
the data range, interior knots default to empirical quantiles, and the
first basis function is dropped so the columns do not duplicate the
intercept.  The dropped function is still available through
``include_first=True``; together with it the columns form a partition of
unity on the boundary interval.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .regress import Design

DEFAULT_DF = 5


@dataclass(frozen=True)
class SplineSpec:
    """Basis request for one variable.

    ``interior_knots=None`` places ``df - degree`` knots at empirical
    quantiles; an explicit tuple (possibly empty) is used as given.
    """

    variable: str
    degree: int = 3
    interior_knots: tuple[float, ...] | None = None
    df: int | None = None

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ConfigError(f"spline degree must be >= 1, got {self.degree}")
        if self.interior_knots is not None:
            knots = tuple(float(k) for k in self.interior_knots)
            if any(b <= a for a, b in zip(knots, knots[1:])):
                raise ConfigError(f"interior knots must be strictly increasing: {knots}")
            object.__setattr__(self, "interior_knots", knots)
        elif self.df is not None and self.df < self.degree:
            raise ConfigError(f"df={self.df} is smaller than degree={self.degree}")


@dataclass(frozen=True)
class BasisMatrix:
    columns: np.ndarray
    column_names: tuple[str, ...]
    boundary_knots: tuple[float, float]
    interior_knots: tuple[float, ...]
    degree: int


def knot_vector(boundary: tuple[float, float], interior, degree: int) -> np.ndarray:
    lo, hi = boundary
    return np.concatenate([np.full(degree + 1, lo), np.asarray(interior, dtype=float),
                           np.full(degree + 1, hi)])


def resolve_knots(values: np.ndarray, spec: SplineSpec) -> tuple[float, ...]:
    """Interior knots for ``spec`` on ``values``."""
    if spec.interior_knots is not None:
        return spec.interior_knots
    df = DEFAULT_DF if spec.df is None else spec.df
    k = df - spec.degree
    if k <= 0:
        return ()
    probs = np.linspace(0.0, 1.0, k + 2)[1:-1]
    return tuple(float(q) for q in np.quantile(values, probs))


def cox_de_boor(x: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    """All ``len(knots) - degree - 1`` basis functions at points ``x``.

    Degree-zero pieces are right-open, except that the last non-empty
    knot interval is closed on the right so the upper boundary belongs
    to the basis support.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(knots, dtype=np.float64)
    m = len(t) - 1
    B = ((t[:-1] <= x[:, None]) & (x[:, None] < t[1:])).astype(np.float64)
    last = int(np.flatnonzero(t[:-1] < t[1:])[-1])
    B[x == t[last + 1], last] = 1.0
    for k in range(1, degree + 1):
        left_den = t[k:m] - t[: m - k]
        right_den = t[k + 1 : m + 1] - t[1 : m - k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[: m - k]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k + 1 : m + 1] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :-1] + right * B[:, 1:]
    return B


def bspline_basis(values, spec: SplineSpec, *, boundary: tuple[float, float] | None = None,
                  include_first: bool = False) -> BasisMatrix:
    """Evaluate the B-spline basis of ``spec`` at ``values``.

    ``boundary`` defaults to the range of ``values``.  Points outside the
    boundary are rejected rather than extrapolated.

    Raises:
        ConfigError: fewer than ``degree + 1`` distinct values, or a knot
            that is not strictly inside the boundary.
    """
    x = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"{spec.variable}: spline input must be finite")
    if np.unique(x).size < spec.degree + 1:
        raise ConfigError(
            f"{spec.variable}: need at least {spec.degree + 1} distinct values for a "
            f"degree-{spec.degree} spline"
        )
    lo, hi = (float(x.min()), float(x.max())) if boundary is None else boundary
    if np.any((x < lo) | (x > hi)):
        raise ConfigError(f"{spec.variable}: values outside boundary knots [{lo}, {hi}]")
    interior = resolve_knots(x, spec)
    for k in interior:
        if not lo < k < hi:
            raise ConfigError(f"{spec.variable}: knot {k} outside data range ({lo}, {hi})")
    if any(b <= a for a, b in zip(interior, interior[1:])):
        raise ConfigError(f"{spec.variable}: knots not strictly increasing {interior}")
    full = cox_de_boor(x, knot_vector((lo, hi), interior, spec.degree), spec.degree)
    cols = full if include_first else full[:, 1:]
    offset = 0 if include_first else 1
    names = tuple(f"{spec.variable}_bs{j + offset}" for j in range(cols.shape[1]))
    return BasisMatrix(cols, names, (lo, hi), tuple(interior), spec.degree)


def expand_variable(design: Design, spec: SplineSpec) -> Design:
    """Replace a single-column group by its B-spline columns.

    The basis (boundary and quantile knots) is computed from all rows of
    ``design``; do this before any resampling so that inbag and OOB rows
    share one basis.  The new columns stay in one group named after the
    variable, so noising and removal treat them jointly.
    """
    if spec.variable in design.expanded:
        raise ConfigError(f"variable {spec.variable!r} is already expanded")
    names = design.group_names
    if spec.variable not in names:
        raise ConfigError(f"variable {spec.variable!r} not found in the design")
    cols = design.group_columns(spec.variable)
    if len(cols) != 1:
        raise ConfigError(f"variable {spec.variable!r} is not a single-column group")
    basis = bspline_basis(design.matrix[:, cols[0]], spec)

    blocks, col_names, groups = [], [], []
    width = 0
    for g, gcols in design.groups:
        if g == spec.variable:
            block, bnames = basis.columns, basis.column_names
        else:
            block = design.matrix[:, list(gcols)]
            bnames = tuple(design.column_names[c] for c in gcols)
        blocks.append(block)
        col_names.extend(bnames)
        groups.append((g, tuple(range(width, width + block.shape[1]))))
        width += block.shape[1]
    return Design(
        matrix=np.column_stack(blocks),
        column_names=tuple(col_names),
        groups=tuple(groups),
        family=design.family,
        response=design.response,
        time=design.time,
        event=design.event,
        expanded=design.expanded | {spec.variable},
    )


_FLAG = re.compile(r"^\s*([^=]+?)\s*=\s*(.+?)\s*$")


def parse_spline_flag(text: str) -> SplineSpec:
    """Parse ``var=df`` or ``var=degree:k1,k2,...`` (knot list may be empty)."""
    m = _FLAG.match(text)
    if not m:
        raise ConfigError(f"bad --spline value {text!r}; expected var=df or var=degree:k1,k2")
    var, rhs = m.groups()
    try:
        if ":" in rhs:
            deg, knots = rhs.split(":", 1)
            knot_list = tuple(float(k) for k in knots.split(",") if k.strip())
            return SplineSpec(var, degree=int(deg), interior_knots=knot_list)
        return SplineSpec(var, df=int(rhs))
    except ValueError as exc:
        raise ConfigError(f"bad --spline value {text!r}: {exc}") from exc
