"""Exception types raised by the analysis modules."""


class ParasqueezeError(Exception):
    """Base class for every numerical failure the package reports."""


class SingularThreshold(ParasqueezeError):
    """A linear solve was attempted exactly on an instability line."""


class DetunedInput(ParasqueezeError):
    """A zero-detuning formula was called with nonzero detuning."""


class NoRealRoot(ParasqueezeError):
    pass


class NoConvergence(ParasqueezeError):
    pass


class NotOnHopfLine(ParasqueezeError):
    pass


class NoSignChange(ParasqueezeError):
    pass


class NonFinite(ParasqueezeError):
    """Slow-flow integration produced a non-finite state."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-finite state at step {index}")


class TooShort(ParasqueezeError):
    pass


class ConfigError(ParasqueezeError):
    pass
