"""Exception hierarchy shared by every flowvae module."""


class FlowVaeError(Exception):
    """Base class for all library errors."""


class DimensionError(FlowVaeError, ValueError):
    """Array shapes do not line up."""


class StateError(FlowVaeError, RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class ConsistencyError(FlowVaeError, KeyError):
    """Parameter and gradient stores disagree."""


class DataError(FlowVaeError, ValueError):
    """Dataset content is unusable (empty, degenerate, one-sided)."""


class SchemaError(FlowVaeError, KeyError):
    """Columns or feature names missing from a schema."""

    def __str__(self):
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class ContaminationError(DataError):
    """Benign-only training data contains malicious rows."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class IsolationViolationError(FlowVaeError, RuntimeError):
    """A frozen model's weights changed while they should not have."""


class DivergedError(FlowVaeError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite loss at step {step}")
        self.step = step


class ConfigError(FlowVaeError, ValueError):
    """Invalid run configuration or preset name."""
