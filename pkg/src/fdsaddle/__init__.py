"""Frequency domain saddlepoint inference for stationary time series.

The package estimates ARFIMA and FEXP spectral models by Whittle
M-estimation, builds exponential-based and empirical saddlepoint
approximations to the distribution of the estimator, and computes
importance-sampled p-values and density curves for frequency domain test
statistics.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: F401
    AllWeightsZero,
    BoundaryHit,
    ConfigError,
    Degenerate,
    DegenerateProposal,
    DomainViolation,
    EmptySeries,
    FdsaddleError,
    FormatError,
    InfeasibleTilt,
    InvalidParameter,
    MissingYears,
    NonConvergence,
    ParseError,
    SingularCovariance,
    SingularInformation,
    SingularJacobian,
    SingularTilt,
    TooShort,
)
from .spectral import (  # noqa: F401
    ArfimaModel,
    FexpModel,
    ParamVector,
    SpectralModel,
    model_from_config,
)
from .periodogram import (  # noqa: F401
    Periodogram,
    Taper,
    compute_periodogram,
    fourier_frequencies,
    standardized_ordinates,
)
from .whittle import (  # noqa: F401
    WhittleEstimator,
    WhittleFit,
    asymptotic_covariance,
    solve_whittle,
    wald_statistic,
    whittle_neg_loglik,
)
from .saddlepoint import (  # noqa: F401
    DensityGrid,
    EmpiricalCgfContext,
    SaddlepointSolution,
    emp_cgf,
    emp_density_at,
    emp_density_grid_1d,
    exp_cgf,
    exp_legendre,
    exp_sadd_test_composite,
    exp_sadd_test_simple,
    fdel_owen_statistic,
    fdet_statistic,
    solve_emp_saddlepoint,
)
from .testing import (  # noqa: F401
    HypothesisSpec,
    IsConfig,
    TestReport,
    cdf_approx,
    importance_sample,
    p_value_chi2,
    p_value_fdes,
    p_value_fdes_composite,
    quantiles_table,
)
from .simulation import (  # noqa: F401
    McNullResult,
    SwStudyResult,
    frac_diff_weights,
    mc_null_distribution,
    power_curve,
    shapiro_wilk_study,
    simulate_arfima,
)
from .cli import (  # noqa: F401
    PdoPipelineSpec,
    TimeSeriesData,
    ingest_csv,
    pdo_pipeline,
)
