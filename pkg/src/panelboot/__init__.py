"""Fixed-effect panel MLE with parametric-bootstrap confidence sets.

The package fits nonlinear panel models with one effect per stratum by
a partitioned Newton method, quantifies uncertainty with a parametric
bootstrap (percentile, bootstrap-t, and Wald-ellipsoid constructions),
and ships exact finite-sample distribution theory for the normal-means
benchmark plus a seeded Monte Carlo harness for coverage studies.
"""

from ._backend import BACKEND
from .bootstrap import (
    BootstrapDraws,
    IntervalReport,
    delta_bootstrap_ci,
    ellipsoid_critical,
    ellipsoid_interval,
    normal_ci,
    percentile_ci,
    percentile_t_ci,
    quantile,
    resample,
    run_bootstrap,
    write_intervals_csv,
)
from .contract import AverageEffectSpec, ModelContract
from .data import PanelDataset, assemble_z, load_csv, save_csv
from .errors import (
    DataError,
    DegenerateFitError,
    NumericalError,
    PanelbootError,
    UsageError,
)
from .harness import (
    ExperimentConfig,
    ExperimentRow,
    emit_table,
    eta_profile,
    read_table_csv,
    run_experiment,
    table2_configs,
    table3_configs,
    truth_delta,
    truth_delta_limit,
)
from .inference import (
    SigmaHat,
    delta_hat,
    sigma_from_profile,
    sigma_hat,
    studentize,
    wald_quadratic,
)
from .models import get_model
from .newton import (
    BlockScoreHessian,
    FitOptions,
    FitResult,
    assemble,
    estimate,
    fit,
    newton_direction,
)
from .oracle import (
    Gamma3,
    InvGamma3,
    bootstrap_exact_law,
    corrected_mle_exact_law,
    eps0_bootstrap_law,
    exact_coverage,
    figure1_curves,
    mle_exact_law,
    percentile_coverage_quadrature,
    second_moment_truth,
    studentized_exact_law,
    table1_rows,
)
from .params import ParameterPoint

__version__ = "1.0.0"

__all__ = [
    "BACKEND",
    "__version__",
    "PanelbootError",
    "DataError",
    "NumericalError",
    "DegenerateFitError",
    "UsageError",
    "PanelDataset",
    "assemble_z",
    "load_csv",
    "save_csv",
    "ParameterPoint",
    "ModelContract",
    "AverageEffectSpec",
    "get_model",
    "BlockScoreHessian",
    "FitOptions",
    "FitResult",
    "assemble",
    "newton_direction",
    "fit",
    "estimate",
    "SigmaHat",
    "sigma_hat",
    "sigma_from_profile",
    "studentize",
    "wald_quadratic",
    "delta_hat",
    "BootstrapDraws",
    "IntervalReport",
    "resample",
    "run_bootstrap",
    "quantile",
    "percentile_ci",
    "percentile_t_ci",
    "normal_ci",
    "ellipsoid_critical",
    "ellipsoid_interval",
    "delta_bootstrap_ci",
    "write_intervals_csv",
    "Gamma3",
    "InvGamma3",
    "mle_exact_law",
    "corrected_mle_exact_law",
    "bootstrap_exact_law",
    "eps0_bootstrap_law",
    "studentized_exact_law",
    "exact_coverage",
    "percentile_coverage_quadrature",
    "second_moment_truth",
    "table1_rows",
    "figure1_curves",
    "ExperimentConfig",
    "ExperimentRow",
    "eta_profile",
    "truth_delta",
    "truth_delta_limit",
    "run_experiment",
    "emit_table",
    "read_table_csv",
    "table2_configs",
    "table3_configs",
]
