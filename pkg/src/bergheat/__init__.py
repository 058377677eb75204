"""Heat kernel random Bergman metrics on the Riemann sphere.

Samplers for the heat kernel measure on positive Hermitian matrices, the
induced random Kahler potentials, Monte Carlo estimators of their one- and
two-point statistics, an analytic oracle for the closed-form correlation
formulas, and the Gaussian random-zeros boundary ensemble.
"""

from .geometry import (
    BerezinValue,
    ManifoldModel,
    PointPair,
    SectionBasis,
    bergman_kernel,
    berezin_rho,
    build_basis,
    diastasis,
    scaled_pair,
)
from .heat import (
    HeatKernelSampler,
    HeatParams,
    brownian_sample,
    concentration_report,
    eigen_log_density,
    haar_unitary,
    heat_normalization,
    mcmc_sample,
)
from .matrix_metric import (
    KahlerPotentialSample,
    PolarBatch,
    PolarCoords,
    PositiveMatrix,
    kahler_potential,
    metric_density,
    polar_decompose,
)
from .oracle import (
    BiPotentialQuery,
    QuadratureReport,
    d_rho_bipotential,
    dilog,
    energy_entropy_exponent,
    gaussian_vandermonde_identity,
    hciz,
    small_rho_integral,
)
from .statistics import (
    EstimatorResult,
    LinearStatistic,
    PotentialFluctuation,
    TwoPointGrid,
    linear_statistic_value,
    normality_test,
    one_point_flatness,
    smooth_variance_check,
    two_point_covariance,
)
from .zeros import (
    GaussianSection,
    GaussianZeros,
    RayDirection,
    ZeroSet,
    l1_convergence,
    number_variance,
    ray_potential,
    sample_section,
    weak_limit_check,
    zeros_of,
)

__version__ = "0.1.0"
