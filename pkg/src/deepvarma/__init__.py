"""Multivariate time-series forecasting: VARMA/VARMAX maximum likelihood, a
compact LSTM trained by backpropagation through time, and the hybrid
trend-plus-residual pipelines that combine them."""

from .panel import (
    Panel,
    DiffSeries,
    SplitRatios,
    ScalerParams,
    StatsRow,
    load_panel,
    impute_linear,
    log_transform,
    difference,
    inverse_difference,
    continuation_anchors,
    split,
    descriptive_stats,
    correlation_matrix,
    fit_scaler,
    apply_scaler,
)
from .stationarity import AdfResult, StationarityReport, adf_test, stationarity_report
from .varma import (
    VarmaSpec,
    VarmaParams,
    FittedVarma,
    ForecastResult,
    simulate,
    compute_residuals,
    conditional_loglik,
    hannan_rissanen_init,
    estimate_mle,
    forecast,
    aic,
    select_order,
    check_roots,
)
from .lstm import (
    LstmConfig,
    LstmState,
    AdamState,
    TrainedLstm,
    EmbeddingSequence,
    init_weights,
    cell_forward,
    forward,
    bptt_gradients,
    adam_update,
    windowize,
    train,
    predict_recursive,
    encode,
    grid_search,
)
from .hybrid import (
    HybridConfig,
    HybridModel,
    HybridForecast,
    fit_deepvarma_re,
    fit_deepvarma_en,
    fit_deepvarma,
    forecast_hybrid,
)
from .metrics import MetricReport, HorizonTable, CompareReport, metrics, horizon_eval, compare
from .benchmark import make_benchmark

__version__ = "0.1.0"
