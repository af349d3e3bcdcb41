"""Co-evolutionary co-design of heterogeneous robot swarms.

Evolves robot designs (task-planning behavior trees plus hardware morphology)
for collaborative foraging, with dynamic speciation, tag-based partner
selection, dominance-weighted swarm assembly, marginal-contribution fitness,
and fabrication-budget constraints.
"""

__version__ = "0.1.0"

from .errors import ConfigError, EvaluationError, PlanError, ScenarioError, ShapeError

__all__ = [
    "ConfigError",
    "EvaluationError",
    "PlanError",
    "ScenarioError",
    "ShapeError",
    "__version__",
]
