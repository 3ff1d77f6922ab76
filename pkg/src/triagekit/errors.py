"""Exception types shared across triagekit modules."""


class ConfigurationError(ValueError):
    """Raised when a config object violates its invariants."""


class StateError(RuntimeError):
    """Raised when an operation is invalid for the object's current state,
    e.g. injecting LoRA adapters twice or merging an unadapted model."""


class UnsupportedHeadError(RuntimeError):
    """Raised when an operation requires a classification head the model
    was not built with (e.g. explanations need the label-attention head)."""
