"""Instrumental-variable estimation by minimizing HSIC between residuals and instruments."""

from .dataset import Dataset, read_csv, write_csv
from .estimators import (
    FitConfig,
    FitResult,
    bias_correct,
    fit_2sls,
    fit_anchor,
    fit_hsic_x,
    fit_hsic_x_pen,
    fit_ols,
    select_lambda,
)
from .funclass import LinearInBasis, Mlp, poly_bump_basis, radial_bump_basis, raw_basis
from .civ import CivResult, fit_joint_civ, fit_residualized_civ, nadaraya_watson
from .indtest import hsic_gamma_test, hsic_permutation_test
from .inference import (
    ConfidenceRegion,
    anderson_rubin_test,
    confidence_region_ar,
    confidence_region_hsic,
)
from .kernels import KernelSpec, hsic_biased, kernel_matrix, median_heuristic
from .regressors import AnchorRegressor, HSICXRegressor, OLSRegressor, TwoStageLeastSquares

__version__ = "0.1.0"
