"""Target-side verification of a single draft token.

Implements immediate/probabilistic acceptance, rejection with resampling
from the residual distribution, and an exact closed-form oracle for the
law of the response token (which must equal the target distribution —
the losslessness property of speculative verification).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import RandomStream, TokenId, sample_categorical, validate_distribution
from .errors import DegenerateResidualError, InvalidDraftProbabilityError

# Below this residual mass a drawn rejection is numerically inconsistent
# (no mass to resample from) and is downgraded to a probabilistic accept.
_RESIDUAL_MASS_FLOOR = 1e-15


class Decision(enum.Enum):
    IMMEDIATE_ACCEPT = "immediate_accept"
    PROBABILISTIC_ACCEPT = "probabilistic_accept"
    REJECTED = "rejected"


@dataclass(frozen=True)
class VerificationOutcome:
    """Result of verifying one draft token.

    ``beta`` is the rejection probability of the draft under the target;
    ``residual`` is present only on rejection and is the distribution the
    response token was resampled from.
    """

    decision: Decision
    response: TokenId
    beta: float
    residual: np.ndarray | None = None

    @property
    def accepted(self) -> bool:
        return self.decision is not Decision.REJECTED


def rejection_probability(x_d: float, y_d: float) -> float:
    """``max(1 - y_d/x_d, 0)`` for a draft with draft/target probabilities
    ``x_d``/``y_d``. The draft was sampled from the draft distribution, so
    ``x_d`` must be strictly positive."""
    if not x_d > 0.0:
        raise InvalidDraftProbabilityError(f"draft token probability must be > 0, got {x_d!r}")
    return max(1.0 - y_d / x_d, 0.0)


def residual_distribution(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized positive part of ``y - x``, the law rejected drafts are
    resampled from."""
    x = validate_distribution(x)
    y = validate_distribution(y)
    excess = np.maximum(y - x, 0.0)
    total = excess.sum()
    if total <= 0.0:
        raise DegenerateResidualError("target distribution does not exceed draft anywhere")
    return excess / total


def verify(
    x: np.ndarray, y: np.ndarray, d: TokenId, rng: RandomStream
) -> VerificationOutcome:
    """Verify draft token ``d`` sampled from ``x`` against target ``y``.

    If ``x_d <= y_d`` the draft is accepted outright with no randomness.
    Otherwise one uniform decides rejection with probability ``1 - y_d/x_d``;
    a rejection consumes one more draw to resample the response from the
    residual distribution. The fixed draw budget keeps traces replayable.
    """
    x = validate_distribution(x)
    y = validate_distribution(y)
    x_d = float(x[d])
    y_d = float(y[d])
    beta = rejection_probability(x_d, y_d)
    if beta == 0.0:
        return VerificationOutcome(Decision.IMMEDIATE_ACCEPT, d, 0.0)
    u = rng.uniform()
    if u < beta:
        excess_mass = float(np.maximum(y - x, 0.0).sum())
        if excess_mass < _RESIDUAL_MASS_FLOOR:
            return VerificationOutcome(Decision.PROBABILISTIC_ACCEPT, d, beta)
        residual = residual_distribution(x, y)
        response = sample_categorical(residual, rng)
        return VerificationOutcome(Decision.REJECTED, response, beta, residual)
    return VerificationOutcome(Decision.PROBABILISTIC_ACCEPT, d, beta)


def effective_distribution(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact law of the response token produced by :func:`verify`.

    Enumerates both routes a token can take — draft accepted, or rejected
    and resampled — without simulating either. Serves as the brute-force
    oracle for the losslessness identity: the result equals ``y``.
    """
    x = validate_distribution(x)
    y = validate_distribution(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        accept_prob = np.where(x > 0.0, np.minimum(1.0, y / np.where(x > 0.0, x, 1.0)), 0.0)
    accepted = x * accept_prob
    rejected_mass = float(np.maximum(x - y, 0.0).sum())
    excess = np.maximum(y - x, 0.0)
    excess_total = float(excess.sum())
    if rejected_mass > 0.0 and excess_total > 0.0:
        return accepted + rejected_mass * (excess / excess_total)
    return accepted
