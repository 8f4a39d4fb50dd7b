"""Simulation-based background workload prediction for private IaaS clouds."""

from .cloudsim import CloudModel, SimConfig, SimLog, SimResult, batch_simulate, build_cloud, simulate
from .evaluation import Corpus, golden_study, parameter_sweep, random_baseline
from .exceptions import BgloadError
from .metrics import ErrorCache, ErrorFunction, build_error_cache, error, future_error
from .predictor import PredictionOutcome, PredictorConfig, predict, should_predict
from .traces import TraceArchive, enumerate_fragments, parse_trace, prefilter
from .workflow import EnactmentPlan, SectionShape, build_plan, k_real, parse_workflow_description

__all__ = [
    "BgloadError", "CloudModel", "Corpus", "EnactmentPlan", "ErrorCache", "ErrorFunction",
    "PredictionOutcome", "PredictorConfig", "SectionShape", "SimConfig", "SimLog", "SimResult",
    "TraceArchive", "batch_simulate", "build_cloud", "build_error_cache", "build_plan",
    "enumerate_fragments", "error", "future_error", "golden_study", "k_real",
    "parameter_sweep", "parse_trace", "parse_workflow_description", "predict", "prefilter",
    "random_baseline", "should_predict", "simulate",
]
