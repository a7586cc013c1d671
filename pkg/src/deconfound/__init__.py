"""Direct-effect estimation under unobserved, interacting confounders.

The package estimates the p x m direct-effect matrix of a multivariate
response regression when hidden variables confound the observed
covariates, including through covariate-hidden interactions. The hidden
signal is removed by projecting the responses onto the orthogonal
complement of a learned singular space.
"""

__version__ = "0.1.0"

from .bench import (
    CVReport,
    ExperimentGrid,
    ExperimentReport,
    KSelectionReport,
    cross_validate,
    pmse_log,
    run_grid,
    run_k_selection,
    snr,
    sse_log,
)
from .errors import (
    DataError,
    DeconfoundError,
    DegenerateBasisWarning,
    DimensionMismatchError,
    NonFiniteError,
    NumericalError,
    RankDeficientError,
)
from .estimators import (
    fit_heteroscedastic,
    fit_homoscedastic,
    fit_method,
    fit_non_interaction,
    fit_ols_baseline,
    fit_oracle,
)
from .model import (
    METHODS,
    CovarianceFit,
    Dataset,
    DebiasedEstimate,
    FirstStageFit,
    GroundTruth,
    NoiseSpec,
    ProjectionBasis,
    SimulationConfig,
    validate,
)
from .regress import expand_interactions, fit_covariance_regression, fit_first_stage, fit_projected_ols, least_squares
from .simulate import generate, generate_test_split
from .spectral import (
    SpectrumSummary,
    build_projection,
    default_k_star,
    hetero_pca,
    select_k,
    sin_theta,
    top_k_eigenvectors,
)
