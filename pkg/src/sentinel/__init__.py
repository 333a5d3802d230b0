"""Continuous implicit authentication from accelerometer, orientation and magnetometer traces."""

from .authenticator import (
    Decision,
    Profile,
    StreamMonitor,
    Verdict,
    authenticate_window,
    balanced_training_set,
    build_profile,
    daily_retrain,
    monitor_trace,
    stream_monitor,
)
from .core import FeatureVector, Sensor, SensorSample, SensorSet, SentinelError, Trace, project
from .evaluation import CVMode, EvalConfig, EvalReport, evaluate_cell, kfold_split, sweep, timing_curve
from .ingest import DatasetManifest, load_dataset, parse_trace, write_trace
from .resample import ResampleSpec, effective_count, resample
from .svm import LinearModel, Scaler, SolverConfig, fit_scaler, hinge_loss, objective, predict, train
from .syngen import ScenarioSpec, UserParams, generate_population, generate_trace, make_population

__version__ = "0.1.0"
