"""Bus arrival-time prediction: ingestion, features, models, and serving."""

from .errors import (
    IntegrityError,
    SchemaError,
    TrainingDivergedError,
    TransitEtaError,
    UnknownLineError,
    VersionMismatchError,
)
from .features import (
    FeaturePipeline,
    FeatureVector,
    LineVocabulary,
    MinMaxScaler,
    StopVocabulary,
    build_features,
    compute_trip_time,
    derive_day_type,
    derive_far_status,
    derive_rush_hour,
    fit_scaler,
    fit_vocabularies,
    split,
)
from .ingest import CleanRecord, CleaningStats, RawRecord, clean, parse_csv, serialize_csv
from .metrics import EvalReport, delay_stats, five_number_summary, per_line_report, rmse
from .model_store import ModelBundle, load, save
from .neuralnet import (
    DEFAULT_LAYER_SIZES,
    Network,
    NetworkSpec,
    NeuralNetRegressor,
    TrainConfig,
    backward,
    forward,
    init_network,
    mac_count,
    mse_loss,
    param_count,
    predict_batch,
    train,
)
from .scalability import ComparisonTable, scalability_experiment
from .server import PredictionServer, serve
from .svr import SupportVectorRegressor, SvrConfig, SvrModel, fit_svr, predict_svr, rbf_kernel
from .synth import SynthConfig, generate

__version__ = "0.1.0"
