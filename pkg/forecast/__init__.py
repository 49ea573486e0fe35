from forecast.correlation import (
    CORRELATION_VARIABLES,
    CorrelationTable,
    correlation_table,
    lagged_correlations,
    pearson,
)
from forecast.dataset import (
    GHG_FEATURES,
    InsufficientHistoryError,
    SPEED_FEATURES,
    SequenceDataset,
    Standardizer,
    build_dataset,
    build_windows,
    split_dataset,
)
from forecast.lstm import ShapeMismatchError
from forecast.predictors import (
    PredictorModel,
    clamp,
    identity_predictor,
    load_model,
    oracle_predictor,
    predict_link,
    predict_links,
    save_model,
)
from forecast.trainer import (
    Hyper,
    Metrics,
    TrainResult,
    TrainingDivergedError,
    grid_search,
    load_default_hyper,
    metrics,
    train,
)
