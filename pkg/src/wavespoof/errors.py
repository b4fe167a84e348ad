"""Exception types shared across the toolkit, mapped to CLI exit codes."""


class ToolError(Exception):
    """Base class for toolkit errors; carries the CLI exit code."""

    exit_code = 1


class FormatError(ToolError):
    """A file is not in the expected container format."""

    exit_code = 4


class InputError(ToolError):
    """Invalid argument values, ranges, or data shapes."""

    exit_code = 5


class ConfigError(ToolError):
    """Inconsistent or incomplete run configuration."""

    exit_code = 6


class CapacityError(ToolError):
    """A requested allocation exceeds the configured memory cap."""

    exit_code = 7
