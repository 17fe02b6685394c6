"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: config errors exit 2, data errors
exit 3, degenerate-geometry errors exit 4.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EngineError):
    """Invalid configuration (bad chunk parameters, malformed config file)."""


class FormatError(EngineError):
    """A file does not conform to its interchange format contract."""


class ConsistencyError(EngineError):
    """Inputs are individually valid but mutually inconsistent."""


class ValidationError(EngineError):
    """A value violates a numeric contract (e.g. non-rigid rotation block)."""


class DegenerateGeometryError(EngineError):
    """Point configuration too degenerate for the requested estimate."""


class InsufficientOverlapError(DegenerateGeometryError):
    """Fewer overlap correspondences than the estimator requires."""


class DegenerateInstanceError(DegenerateGeometryError):
    """An instance mask is empty where a non-empty one is required."""


class DegenerateRowError(DegenerateGeometryError):
    """An attention row has every key masked; weights are undefined."""


class EmptySetError(DegenerateGeometryError):
    """A nearest-neighbour query against an empty point set."""
