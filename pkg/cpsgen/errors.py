class ConfigurationError(ValueError):
    """Invalid input specification, count, or experiment configuration."""


class ModelLoadError(ValueError):
    """A model document violates the schema or the graph invariants."""


class ContractError(ValueError):
    """Arguments are inconsistent with each other (dimensions, lengths)."""


class CapabilityError(ValueError):
    """A generator cannot run on this model."""


class UndefinedMetricError(ValueError):
    """A metric or score is undefined for its input."""
