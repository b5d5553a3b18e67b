"""Spectral-risk simulation optimisation under decision-dependent uncertainty.

The main entry points are :func:`run_acfs` (the four-phase optimiser), the
competitor runners in :mod:`acfs.baselines`, the benchmark processes in
:mod:`acfs.scenarios` and the paired statistics in :mod:`acfs.stats`.
"""

from ._validation import DomainError, OptimizationError, derive_seed
from .baselines import BaselineConfig, run_cem_so, run_gp_bo, run_kde_so, run_sgd_cvar
from .forest import ConditionalForestSampler, silverman_bandwidth, systematic_resample
from .gp import SEARDGaussianProcess
from .kde import DecisionKernelSampler
from .ledger import OracleLedger, Solution
from .oracles import QuadraticOracle
from .pipeline import ACFS, AcfsConfig, run_acfs
from .risk import RiskEstimate, RiskParams, bootstrap_ci, empirical_cvar, oracle_evaluate, spectral_risk
from .scenarios import DgpSpec, ScenarioMatrix, feasible_project

__version__ = "0.1.0"

__all__ = [
    "ACFS", "AcfsConfig", "BaselineConfig", "ConditionalForestSampler", "DecisionKernelSampler",
    "DgpSpec", "DomainError", "OptimizationError", "OracleLedger", "QuadraticOracle", "RiskEstimate",
    "RiskParams", "SEARDGaussianProcess", "ScenarioMatrix", "Solution", "bootstrap_ci", "derive_seed",
    "empirical_cvar", "feasible_project", "oracle_evaluate", "run_acfs", "run_cem_so", "run_gp_bo",
    "run_kde_so", "run_sgd_cvar", "silverman_bandwidth", "spectral_risk", "systematic_resample",
]
