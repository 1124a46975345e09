"""Asynchronous Kalman fusion of event-rate and frame-rate feature tracks."""

from .fusion import (
    FusionEngine,
    FusionMode,
    OOOPolicy,
    SourcedMeasurement,
    TrackConfig,
    Tracker,
    TrackOutput,
    anchor_to_absolute,
    init_track,
    run_scenario,
)
from .kalman import (
    DegenerateCovarianceError,
    Observation,
    OutOfOrderError,
    ProcessModel,
    StateEstimate,
    UpdateIntermediates,
    predict,
    predict_update,
    update,
)
from .metrics import EvalConfig, EvalReport, delta_avg, evaluate, expected_fa, feature_age
from .synth import ScenarioSpec, SourceModel, benchmark_suite, build_scenario, generate_tracks
from .uncertainty import NoiseMap, VisibilityReport, remap

__version__ = "0.1.0"
