"""Exception types shared across the package."""


class InputError(ValueError):
    """Bad arguments: wrong dimension, violated precondition, bad config."""


class IntegrationError(RuntimeError):
    """Adaptive integration gave up (step underflow or step budget exhausted)."""

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class TrappingRegionError(IntegrationError):
    """A flow line left the box the system is declared on."""


class DegenerateSplittingError(RuntimeError):
    """Stable and central frames became (numerically) tangent."""


class NumericalFailure(RuntimeError):
    """Frame degeneration or similar loss of precision in a cocycle computation."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
