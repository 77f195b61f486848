"""Shared exception types."""


class InputError(ValueError):
    """An argument violates an operation's preconditions."""


class ParseError(ValueError):
    """Malformed annotation or manifest data.

    Carries the 1-based line (or record) number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage input is absent; names the subcommand that produces it."""
