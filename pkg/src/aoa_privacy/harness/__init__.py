"""Scenario configuration, Monte-Carlo driver, CSV outputs and the CLI."""
from .config import ScenarioConfig, build_config, dump_resolved, load_config
from .experiment import ApObservation, TrialRecord, run_experiment, run_trial
from .outputs import Summary, emit_outputs, empirical_cdf, summarize, write_summary, write_trials

__all__ = [
    "ApObservation", "ScenarioConfig", "Summary", "TrialRecord", "build_config",
    "dump_resolved", "emit_outputs", "empirical_cdf", "load_config", "run_experiment",
    "run_trial", "summarize", "write_summary", "write_trials",
]
