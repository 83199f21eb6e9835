"""European index call option pricing and calibration.

Models: Black-Scholes, Heston SV/SVJ, jump-diffusion with non-iid jump
sizes, and exponential-Levy families (GH, NIG, CGMY) priced by
characteristic-function methods, plus a Vega-weighted least-squares
calibration layer and quote-file utilities.
"""

from .blackscholes import bs_call, bs_vega, implied_vol
from .calibration import (
    CalibrationResult,
    ErrorMetrics,
    ModelKind,
    ParamSpace,
    PricerBinding,
    default_param_space,
    evaluate_metrics,
    optimize,
    sse_objective,
)
from .errors import ConvergenceError, DomainError, NumericalError
from .heston import HestonParams, IntegrationConfig, VolSource, heston_call, probability_pi
from .jumps_noniid import NonIidSpec, NonIidVariant, SeriesConfig, effective_params, noniid_call
from .levy import (
    CgmyParams,
    FftConfig,
    GhParams,
    NigParams,
    fft_call_prices,
    levy_call,
    mc_call,
    quadrature_call,
    raw_char_fn,
    risk_neutral_char_fn,
)
from .quotes import (
    BucketKey,
    BucketSummary,
    FilterConfig,
    MaturityBucket,
    MoneynessBucket,
    OptionQuote,
    apply_filters,
    load_quotes,
    passes_no_arbitrage,
    summarize,
)
from .sweep import Direction, SweepReport, SweepSpec, run_sweep

__version__ = "0.1.0"
