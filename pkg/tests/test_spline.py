from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from oobvimp.errors import ConfigError
from oobvimp.regress import fit, linear_predictor
from oobvimp.simulate import cox_design
from oobvimp.spline import (
    SplineSpec,
    bspline_basis,
    cox_de_boor,
    expand_variable,
    knot_vector,
    parse_spline_flag,
)
from oobvimp.vimp import vimp_analysis


def recursive_basis(i, k, x, t):
    """Textbook recursion, one term at a time (0/0 taken as 0)."""
    if k == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        # the right boundary belongs to the last non-degenerate interval
        last = max(j for j in range(len(t) - 1) if t[j] < t[j + 1])
        return 1.0 if (i == last and x == t[i + 1]) else 0.0
    out = 0.0
    if t[i + k] > t[i]:
        out += (x - t[i]) / (t[i + k] - t[i]) * recursive_basis(i, k - 1, x, t)
    if t[i + k + 1] > t[i + 1]:
        out += (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * recursive_basis(i + 1, k - 1, x, t)
    return out


def test_linear_hat_functions():
    b = bspline_basis([0.0, 0.5, 1.0], SplineSpec("x", degree=1, interior_knots=(0.5,)),
                      include_first=True)
    np.testing.assert_allclose(b.columns, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert np.all(b.columns.sum(axis=1) == 1.0)
    dropped = bspline_basis([0.0, 0.5, 1.0], SplineSpec("x", degree=1, interior_knots=(0.5,)))
    assert dropped.columns.shape == (3, 2)


def test_column_count_knots_plus_degree():
    x = np.linspace(0, 10, 50)
    b = bspline_basis(x, SplineSpec("x", degree=3, interior_knots=(3.0, 6.0)))
    assert b.columns.shape == (50, 5)
    assert b.column_names == tuple(f"x_bs{j}" for j in range(1, 6))


def test_df_places_quantile_knots():
    x = np.arange(101.0)
    b = bspline_basis(x, SplineSpec("x", df=5))
    np.testing.assert_allclose(b.interior_knots, (100 / 3, 200 / 3))
    assert b.columns.shape[1] == 5


def test_matches_recursive_oracle():
    x = np.linspace(0.0, 10.0, 200)
    t = knot_vector((0.0, 10.0), (1.5, 4.0, 4.5, 8.0), 3)
    ours = cox_de_boor(x, t, 3)
    oracle = np.array([[recursive_basis(i, 3, xv, t) for i in range(len(t) - 4)] for xv in x])
    assert np.max(np.abs(ours - oracle)) < 1e-12


def test_matches_scipy_inside():
    x = np.linspace(0.0, 9.999, 300)
    t = knot_vector((0.0, 10.0), (2.0, 5.0, 7.0), 3)
    ref = BSpline.design_matrix(x, t, 3).toarray()
    np.testing.assert_allclose(cox_de_boor(x, t, 3), ref, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.lists(st.floats(0.01, 0.99), min_size=0, max_size=5, unique=True),
       st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30))
def test_partition_of_unity_and_nonnegativity(degree, knots, xs):
    knots = tuple(sorted(knots))
    if any(b - a < 1e-6 for a, b in zip(knots, knots[1:])):
        return
    t = knot_vector((0.0, 1.0), knots, degree)
    B = cox_de_boor(np.array(xs), t, degree)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(B >= -1e-15)


def test_local_support():
    t = knot_vector((0.0, 10.0), (2.0, 4.0, 6.0, 8.0), 3)
    x = np.linspace(0, 10, 401)
    B = cox_de_boor(x, t, 3)
    for i in range(B.shape[1]):
        outside = (x < t[i]) | (x > t[i + 4])
        assert np.all(B[outside, i] == 0.0)


def test_rejects_bad_input():
    with pytest.raises(ConfigError):
        bspline_basis([1.0, 1.0, 1.0, 2.0], SplineSpec("x", degree=3))
    with pytest.raises(ConfigError):
        bspline_basis(np.linspace(0, 1, 20), SplineSpec("x", degree=1, interior_knots=(2.0,)))
    with pytest.raises(ConfigError):
        SplineSpec("x", degree=0)
    with pytest.raises(ConfigError):
        SplineSpec("x", degree=1, interior_knots=(0.5, 0.2))


def test_expand_simulated_design(sim200):
    design = cox_design(sim200)
    ex = expand_variable(design, SplineSpec("tumor_volume", df=5))
    assert ex.group_names == design.group_names
    assert len(ex.group_columns("tumor_volume")) == 5
    for g in ("psa", "X1", "X2", "X3"):
        (c,) = ex.group_columns(g)
        np.testing.assert_array_equal(ex.matrix[:, c], design.matrix[:, design.group_columns(g)[0]])
    with pytest.raises(ConfigError):
        expand_variable(ex, SplineSpec("tumor_volume", df=5))
    with pytest.raises(ConfigError):
        expand_variable(design, SplineSpec("nope", df=5))


def test_degree_one_no_knots_is_reparameterization(sim200):
    design = cox_design(sim200)
    ex = expand_variable(design, SplineSpec("tumor_volume", degree=1, interior_knots=()))
    assert len(ex.group_columns("tumor_volume")) == 1
    a, b = fit(design), fit(ex)
    assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-9)
    lp_a = linear_predictor(a, design.matrix)
    lp_b = linear_predictor(b, ex.matrix)
    # Cox scores are identified up to an additive constant
    np.testing.assert_allclose(lp_a - lp_a.mean(), lp_b - lp_b.mean(), atol=1e-6)


def test_grouped_vimp_reports_one_row(sim200):
    small = cox_design(sim200).take_rows(np.arange(50))
    ex = expand_variable(small, SplineSpec("tumor_volume", df=5))
    report = vimp_analysis(ex, 10, 3, marginal=False, stepwise=False)
    assert sorted(r.group_name for r in report.rows) == sorted(small.group_names)
    assert report.row("tumor_volume").beta_hat is None


@pytest.mark.parametrize("text,spec", [
    ("tv=5", SplineSpec("tv", df=5)),
    ("tv=3:2.5,5", SplineSpec("tv", degree=3, interior_knots=(2.5, 5.0))),
    ("tv=1:", SplineSpec("tv", degree=1, interior_knots=())),
])
def test_parse_flag(text, spec):
    assert parse_spline_flag(text) == spec


@pytest.mark.parametrize("text", ["tv", "tv=x", "=5", "tv=3:a"])
def test_parse_flag_rejects(text):
    with pytest.raises(ConfigError):
        parse_spline_flag(text)
