"""Exception types shared across the package."""


class CloudClearError(Exception):
    """Base class for all package-specific errors."""


class EmptyCloudError(CloudClearError):
    """An operation that requires at least one point received an empty cloud."""


class ScenarioError(CloudClearError):
    """Scenario randomization could not satisfy its constraints within budget."""


class SimulationDivergedError(CloudClearError):
    """A physics state became non-finite.

    env_indices lists the offending environments within the batch so callers
    can reset just those.
    """

    def __init__(self, message, env_indices=()):
        super().__init__(message)
        self.env_indices = tuple(env_indices)


class ConfigError(CloudClearError):
    """A configuration file or dictionary is malformed."""


class CheckpointError(CloudClearError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class StaleObservationError(CloudClearError):
    """A sensor channel stayed missing for too many consecutive steps."""
