"""Experiment runner: configuration, benchmark, SHAP reporting and the CLI."""
from .benchmark import BenchmarkTable, CellResult, run_benchmark
from .config import ExperimentConfig, ShapConfig, config_from_dict, load_config
from .interpret import ExplainReport, run_explain

__all__ = ["BenchmarkTable", "CellResult", "ExperimentConfig", "ExplainReport", "ShapConfig",
           "config_from_dict", "load_config", "run_benchmark", "run_explain"]
