"""Exception types shared across the pipeline.

The CLI maps these onto process exit codes: bad usage or configuration is 2,
malformed or missing data is 3, numeric failures during training are 4.
"""


class ConfigError(Exception):
    """A config file or command invocation is invalid."""


class DataLayoutError(Exception):
    """A dataset directory, annotation, flow file, or checkpoint violates the expected layout."""


class NumericError(Exception):
    """A non-finite value reached the optimization loop."""
