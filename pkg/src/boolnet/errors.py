"""Exception hierarchy shared by all boolnet modules.

The CLI maps these onto distinct process exit codes, so raising the right
subclass matters for scripting users.
"""


class BoolnetError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(BoolnetError):
    """A model, circuit, or matrix violates a structural invariant
    (shape mismatch, width mismatch, out-of-range index, ...)."""


class ConfigError(BoolnetError):
    """Invalid configuration value, unknown key, or out-of-range threshold."""


class IngestionError(BoolnetError):
    """A dataset file is missing, truncated, or has a bad header."""


class UsageError(BoolnetError):
    """An operation was called in the wrong sequence (e.g. backward pass
    without a cached forward pass)."""


class OversizedConeError(BoolnetError):
    """A gate's input cone exceeds the configured support limit; exact
    enumeration is no longer practical for this gate."""

    def __init__(self, layer: int, gate: int, support_size: int, limit: int):
        self.layer = layer
        self.gate = gate
        self.support_size = support_size
        self.limit = limit
        super().__init__(
            f"cone of gate {gate} in layer {layer} depends on "
            f"{support_size} inputs, above the limit of {limit}"
        )
