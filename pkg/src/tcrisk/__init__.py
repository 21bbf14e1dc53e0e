"""Time-consistent VaR/AVaR for GARCH(1,1) losses with a GPD noise tail."""

__version__ = "0.1.0"

from .timeseries import PriceSeries, LossSeries, load_prices, to_losses, sample_acf, ljung_box
from .garch import (
    GarchParams,
    VolatilityPath,
    QmleFit,
    fit_qmle,
    forecast_sigma_next,
    quasi_loglik,
    simulate,
)
from .evt import (
    GpdParams,
    TailModel,
    GpdFit,
    NoiseModel,
    StandardNormalNoise,
    SplicedNoise,
    gpd_cdf,
    gpd_pdf,
    gpd_quantile,
    excess_cdf,
    select_threshold,
    fit_gpd,
    tail_quantile,
    kappa,
    sq_quantile,
    kappa2,
    j_factor,
    mean_excess_curve,
    build_spliced_noise,
)
from .riskcore import (
    RiskQuery,
    VariancePoly,
    RiskTable,
    AggregateAvarBounds,
    poly_eval,
    one_day_var,
    one_day_avar,
    tc_var_single,
    tc_var_aggregate,
    tc_avar_squared,
    tc_avar_exact_mc,
    avar_upper,
    avar_lower,
    avar_aggregate_bounds,
    sqrt_scaling,
    build_risk_table,
)
from .oracle import (
    McReport,
    AxiomsReport,
    InconsistencyReport,
    mc_var_empirical,
    mc_avar_empirical,
    composed_var_check,
    composed_avar_sq_check,
    inconsistency_demo,
    axioms_check,
)
from .garch import filter as filter_volatility  # `filter` shadows the builtin
