"""Pure-DP and ex-post privacy bounds for Gaussian selection mechanisms."""

from puregauss.bounds import (
    AtNoise,
    BoundedQueryParams,
    DpGuarantee,
    GuaranteeKind,
    RdpCurve,
    RnmNoise,
    at_epsilon_max,
    at_expost_epsilon,
    at_rdp_curve,
    classical_rnm_epsilon,
    gaussian_rdp_curve,
    rdp_gaussian,
    rdp_gaussian_at,
    rdp_to_pdp,
    rnm_pure_epsilon,
)
from puregauss.composition import (
    FsrcReport,
    filtered_composition_baseline,
    fsrc_run,
    whitehouse_continue,
)
from puregauss.errors import (
    ConfigError,
    DataError,
    DomainError,
    QuadratureNotConverged,
)
from puregauss.mechanisms import (
    QueryVector,
    run_above_threshold,
    run_rnm_gaussian,
    simulate_worst_case_stopping,
)
from puregauss.numerics import (
    QuadratureConfig,
    log_expectation_std_normal,
    log_gaussian_cdf,
    mc_expectation_std_normal,
)

__version__ = "0.1.0"

__all__ = [
    "AtNoise",
    "BoundedQueryParams",
    "ConfigError",
    "DataError",
    "DomainError",
    "DpGuarantee",
    "FsrcReport",
    "GuaranteeKind",
    "QuadratureConfig",
    "QuadratureNotConverged",
    "QueryVector",
    "RdpCurve",
    "RnmNoise",
    "at_epsilon_max",
    "at_expost_epsilon",
    "at_rdp_curve",
    "classical_rnm_epsilon",
    "filtered_composition_baseline",
    "fsrc_run",
    "gaussian_rdp_curve",
    "log_expectation_std_normal",
    "log_gaussian_cdf",
    "mc_expectation_std_normal",
    "rdp_gaussian",
    "rdp_gaussian_at",
    "rdp_to_pdp",
    "rnm_pure_epsilon",
    "run_above_threshold",
    "run_rnm_gaussian",
    "simulate_worst_case_stopping",
    "whitehouse_continue",
]
