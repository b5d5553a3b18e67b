"""Benchmark harness: replicated experiments, summaries and figures."""

from .experiment import (ExperimentPlan, run_ablation, run_experiment, run_sensitivity,
                         summarize_experiment)
from .figures import emit_figures

__all__ = ["ExperimentPlan", "emit_figures", "run_ablation", "run_experiment", "run_sensitivity",
           "summarize_experiment"]
