"""Out-of-bag prediction error, variable importance and marginal VIMP
for linear, logistic and Cox regression."""

from __future__ import annotations

from .dataset import ColumnSpec, Dataset, load_csv, write_csv
from .errors import (
    AnalysisError,
    ConfigError,
    DataError,
    DegenerateFitError,
    OobVimpError,
)
from .regress import Design, design_from_dataset, fit, wald_table
from .simulate import CoxSimParams, monte_carlo, simulate_cox_data, subsample_robustness
from .spline import SplineSpec, bspline_basis, expand_variable
from .vimp import NoiseMethod, VimpReport, vimp_analysis

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "ColumnSpec",
    "ConfigError",
    "CoxSimParams",
    "DataError",
    "Dataset",
    "DegenerateFitError",
    "Design",
    "NoiseMethod",
    "OobVimpError",
    "SplineSpec",
    "VimpReport",
    "bspline_basis",
    "design_from_dataset",
    "expand_variable",
    "fit",
    "load_csv",
    "monte_carlo",
    "simulate_cox_data",
    "subsample_robustness",
    "vimp_analysis",
    "wald_table",
    "write_csv",
]
