"""Deterministic cross-layer fluid simulator: BBR-style congestion
control over a shared (optionally MU-OFDMA-modelled) bottleneck under
drop-tail, flow-queued, and host-fair queue disciplines."""

from .aqm import AqmConfig
from .bbr import BbrFlowState, BbrParams, CompetitorState, Phase
from .engine import FlowSpec, SimState, SimTrace, Simulation, run_scenario
from .mac import MacConfig, MacRates, compute_rates
from .report import SummaryReport, emit_csv, emit_plot_data, jain_index, summarize
from .scenario import Scenario, parse_scenario, scenario_to_json

__version__ = "0.1.0"

__all__ = [
    "AqmConfig", "BbrFlowState", "BbrParams", "CompetitorState", "Phase",
    "FlowSpec", "SimState", "SimTrace", "Simulation", "run_scenario",
    "MacConfig", "MacRates", "compute_rates",
    "SummaryReport", "emit_csv", "emit_plot_data", "jain_index", "summarize",
    "Scenario", "parse_scenario", "scenario_to_json",
    "__version__",
]
