"""Staged training, evaluation and cross-split reporting."""
from .config import (SCOPES, RunConfig, Stage, TrainConfig, preset_single_stream,
                     preset_two_branch, parse_override)
from .evaluate import EvalResult, evaluate, network_predictor
from .pipeline import InputPipeline
from .report import (STANDARD_ROWS, MetricsReport, collect_runs, cross_split_report, row_label,
                     write_report)
from .runs import load_run, load_tables, resolve_plan, run_eval, run_hash, run_train
from .train import TrainResult, is_saturated, scope_parameters, train_staged

__all__ = [
    "SCOPES", "RunConfig", "Stage", "TrainConfig", "preset_single_stream", "preset_two_branch",
    "parse_override", "EvalResult", "evaluate", "network_predictor", "InputPipeline",
    "STANDARD_ROWS", "MetricsReport", "collect_runs", "cross_split_report", "row_label",
    "write_report", "load_run", "load_tables", "resolve_plan", "run_eval", "run_hash",
    "run_train", "TrainResult", "is_saturated", "scope_parameters", "train_staged",
]
