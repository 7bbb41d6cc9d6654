"""Swarm foraging simulator and swarm-level metrics."""

from ._swarmscale import (
    ExperimentConfig,
    PerformanceCurve,
    adaptability,
    compute_report,
    condition_signals,
    derive_seed,
    dtw,
    minmax_map,
    perf_lost,
    phi,
    reactivity,
    run_batch,
    scalability_e,
    self_org_z,
    simulate,
    step_down,
    step_up,
)

__all__ = [
    "ExperimentConfig",
    "PerformanceCurve",
    "adaptability",
    "compute_report",
    "condition_signals",
    "derive_seed",
    "dtw",
    "minmax_map",
    "perf_lost",
    "phi",
    "reactivity",
    "run_batch",
    "scalability_e",
    "self_org_z",
    "simulate",
    "step_down",
    "step_up",
]
