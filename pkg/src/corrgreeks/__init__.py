"""Monte Carlo correlation Greeks for Gaussian-copula basket credit derivatives."""

from .corelin import (
    CholeskyFactor,
    CorrelationGradient,
    CorrelationMatrix,
    FlopCounter,
    LowerTriangularSeed,
    bump_pair,
    cholesky_adjoint,
    cholesky_factorize,
    cholesky_tangent,
    pair_index,
    pair_list,
    uniform_correlation,
    validate_correlation,
)
from .copula import PathAdjoint, PathTape, adjoint_sweep, forward_path_sensitivity, simulate_path
from .greeks import (
    BinAccumulator,
    EngineConfig,
    GreeksEstimate,
    MonteCarloValue,
    combine_bins,
    compute_greeks,
    correlation_greeks_aad,
    correlation_greeks_bump,
    correlation_greeks_forward,
    price,
)
from .payout import BasketDefaultSwap, PayoutResult, evaluate_sharp, evaluate_smoothed, regular_schedule
from .stochastics import (
    ExponentialMarginal,
    RngStream,
    inverse_normal_cdf,
    marginal_inverse,
    marginal_pdf,
    normal_cdf,
    normal_pdf,
    sample_standard_normals,
)

__version__ = "0.1.0"
