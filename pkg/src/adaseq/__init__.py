"""Adaptive per-step sample sizes for sequences of drifting learning problems."""
from adaseq.core import ConvexityConstants, ProblemSequence, RunRecord, project_to_domain
from adaseq.core.loop import EvalConfig, run_sequence

__version__ = "0.1.0"

__all__ = [
    "ConvexityConstants",
    "EvalConfig",
    "ProblemSequence",
    "RunRecord",
    "project_to_domain",
    "run_sequence",
]
