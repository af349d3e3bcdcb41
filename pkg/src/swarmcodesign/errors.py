"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented bounds."""


class ShapeError(ValueError):
    """Two genomes or arrays that must share a shape do not."""


class ScenarioError(ValueError):
    """A scenario file is invalid or physically infeasible."""


class PlanError(ValueError):
    """An evaluation plan cannot be satisfied (e.g. swarm too small)."""


class EvaluationError(RuntimeError):
    """A simulation trial failed; carries the offending trial context."""
