"""airtraq: traffic congestion estimation from roadside pollutant-gas
sensor arrays.

Simulated street scenarios stream per-minute gas readings through a
replayable gateway; a QC + baseline pipeline turns them into features,
recursive least squares keeps the per-gas constants calibrated against
vehicle counts, and the node array is fused into a segment-level estimate.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibState,
    Checkpoint,
    FitReport,
    batch_fit,
    evaluate,
    features,
    load_checkpoint,
    nnls,
    rls_update,
    save_checkpoint,
)
from .errors import (
    AirtraqError,
    ConfigError,
    EmptyInputError,
    EmptySeriesError,
    InsufficientNodesError,
    NonPositiveCapacityError,
    NoOverlapError,
    RankDeficientError,
    StorageError,
    WireError,
)
from .estimator import (
    EnvCorrectionParams,
    TrafficEstimate,
    WeightVector,
    array_fuse,
    co_temperature_factor,
    congestion_index,
    gas_features,
    node_estimate,
    wind_dilution_correct,
)
from .gateway import GatewayStore, replay_log, serve_gateway
from .pipeline import AppConfig, load_config, run_pipeline
from .preprocess import (
    BaselineVector,
    QcConfig,
    baseline_estimate,
    impute_gaps,
    minute_aggregate,
    qc_filter,
)
from .simulator import (
    DiurnalProfile,
    ScenarioConfig,
    Schedule,
    SensorParams,
    default_scenario,
    diurnal_profile,
    emission_step,
    run_scenario,
    sensor_observe,
)
from .types import (
    SPECIES,
    EnvConditions,
    GasSpecies,
    GasVector,
    GroundTruthCount,
    NodeSample,
    SensorRecord,
    validate_record,
)
from .wire import decode_record, encode_record
