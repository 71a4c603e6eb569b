"""mdlab: exact and Monte Carlo tail-ratio verification for five model families."""

from .dist import (
    ExactDistribution,
    ZeroBiasDensity,
    convolve,
    convolve_many,
    convolve_power,
    total_variation,
    zero_bias,
)
from .errors import (
    DegenerateError,
    DomainError,
    MDLabError,
    ModelIntegrityError,
    ResourceError,
)
from .normal import (
    NormalEval,
    log_normal_tail,
    mills_ratio,
    normal_cdf,
    normal_eval,
    normal_tail,
    stein_bracket,
    stein_solution,
    stein_solution_derivative_g,
)
from .stein import (
    DiagnosticsReport,
    MgfBoundCheck,
    PairSample,
    RatioTable,
    SteinBudget,
    Variant,
    band,
    check_mgf_bound,
    check_tail_integral,
    conditional_regression,
    fit_constant,
    pair_antisymmetry_check,
    ratio_table,
    tail_ratio_table,
    zero_bias_band,
)

__version__ = "0.1.0"
