"""Exception hierarchy shared by all simulator modules.

The CLI maps these onto process exit codes: config errors exit 2,
backend/protocol errors exit 3, numerical and validation errors exit 4.
"""

from __future__ import annotations


class UhlmError(Exception):
    """Base class for all simulator errors."""


class ConfigError(UhlmError):
    """Invalid, incomplete, or unknown configuration input."""


class ValidationError(UhlmError):
    """A numerical contract was violated (bad distribution, logits, ...)."""


class InvalidLogitsError(ValidationError):
    """Logit vector contains NaN or infinite entries."""


class InvalidDistributionError(ValidationError):
    """Probability vector is negative somewhere or does not sum to one."""


class InvalidTemperatureError(ValidationError):
    """Sampling temperature below the configured minimum."""


class InvalidDraftProbabilityError(ValidationError):
    """Draft token has non-positive probability under the draft model."""


class DegenerateResidualError(ValidationError):
    """Residual distribution requested where target == draft distribution."""


class DegenerateFitError(ValidationError):
    """Linear calibration fit is undefined or unusable (flat or decreasing)."""


class CalibrationInfeasibleError(ValidationError):
    """Requested planted rejection statistics cannot be realized."""


class BackendError(UhlmError):
    """A model backend failed (training, lookup, or remote call)."""


class ProtocolError(BackendError):
    """External backend violated the wire protocol."""


class BackendTimeoutError(BackendError):
    """External backend did not reply within the configured timeout."""
