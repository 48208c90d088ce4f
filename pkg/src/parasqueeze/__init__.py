"""Parametric resonator with lock-in feedback: stability thresholds and the response to signals and noise."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (ConfigError, DetunedInput, NoConvergence, NonFinite, NoRealRoot,
                     NoSignChange, NotOnHopfLine, ParasqueezeError, SingularThreshold, TooShort)
from .model import DriveSignal, NoiseSpec, ResonatorParams, StateVector, susceptibility

__all__ = [
    "__version__", "ResonatorParams", "DriveSignal", "NoiseSpec", "StateVector", "susceptibility",
    "ParasqueezeError", "SingularThreshold", "DetunedInput", "NoRealRoot", "NoConvergence",
    "NotOnHopfLine", "NoSignChange", "NonFinite", "TooShort", "ConfigError",
]
