from adaseq.core.rng import Stream, keyed_generator
from adaseq.core.types import (
    ConvexityConstants,
    NumericalError,
    ProblemSequence,
    RunRecord,
    Scenario,
    project_to_domain,
)

__all__ = [
    "ConvexityConstants",
    "NumericalError",
    "ProblemSequence",
    "RunRecord",
    "Scenario",
    "Stream",
    "keyed_generator",
    "project_to_domain",
]
