"""Time-slotted MapReduce cluster simulator with SRPT-ordered machine sharing,
task cloning, and speculative-execution baselines."""

__version__ = "0.1.0"

from .core import (
    ClusterState,
    ContractViolation,
    CopyInstance,
    FlowtimeBound,
    JobSpec,
    Phase,
    RiskFactor,
    TaskRef,
    ZeroWorkloadError,
    effective_workload,
    higher_priority_backlog,
    order_by_priority,
    priority,
    theorem1_bound,
)
from .engine import LaunchDirective, SimulationConfig, SimulationResult, TruncatedSimulation, run
from .metrics import CdfSeries, SummaryMetrics, cdf, export, summarize
from .policies import POLICIES, PolicyParams, make_scheduler
from .stochastic import Deterministic, LogNormal, Pareto, RngStreams, expected_min_of, speedup, validate_speedup
from .workload import SyntheticConfig, dump_job_summaries, gen_synthetic, load_job_summaries

__all__ = [
    "POLICIES",
    "CdfSeries",
    "ClusterState",
    "ContractViolation",
    "CopyInstance",
    "Deterministic",
    "FlowtimeBound",
    "JobSpec",
    "LaunchDirective",
    "LogNormal",
    "Pareto",
    "Phase",
    "PolicyParams",
    "RiskFactor",
    "RngStreams",
    "SimulationConfig",
    "SimulationResult",
    "SummaryMetrics",
    "SyntheticConfig",
    "TaskRef",
    "TruncatedSimulation",
    "ZeroWorkloadError",
    "cdf",
    "dump_job_summaries",
    "effective_workload",
    "expected_min_of",
    "export",
    "gen_synthetic",
    "higher_priority_backlog",
    "load_job_summaries",
    "make_scheduler",
    "order_by_priority",
    "priority",
    "run",
    "speedup",
    "summarize",
    "theorem1_bound",
    "validate_speedup",
]
