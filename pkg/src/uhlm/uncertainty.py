"""Draft-token uncertainty from temperature perturbation, and the skip rule.

The device resamples the next token K times at randomly drawn softmax
temperatures; the fraction of resamples that disagree with the draft is
the uncertainty score. Rounds with uncertainty at or below the threshold
skip the uplink entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    THETA_MIN,
    RandomStream,
    TokenId,
    sample_categorical,
    temperature_softmax,
    validate_logits,
)
from .errors import ValidationError


@dataclass(frozen=True)
class PerturbationConfig:
    """Temperature-perturbation settings: K resamples at temperatures drawn
    uniformly from ``[theta_min, theta_max]``.

    The resamples ride along with the draft forward pass, so they cost no
    extra time by default; ``perturbation_cost`` adds that fraction of the
    device compute time per gated round for sensitivity studies.
    """

    K: int = 20
    theta_max: float = 2.0
    theta_min: float = THETA_MIN
    perturbation_cost: float = 0.0

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if not 0.0 < self.theta_min < self.theta_max:
            raise ValidationError(
                f"need 0 < theta_min < theta_max, got {self.theta_min}, {self.theta_max}"
            )
        if self.perturbation_cost < 0.0:
            raise ValidationError("perturbation_cost must be >= 0")


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Disagreement score on the 1/K lattice: u = mismatches / K."""

    u: float
    mismatches: int


def sample_temperatures(cfg: PerturbationConfig, rng: RandomStream) -> np.ndarray:
    """K i.i.d. temperatures, uniform on [theta_min, theta_max]."""
    return cfg.theta_min + (cfg.theta_max - cfg.theta_min) * rng.uniforms(cfg.K)


def measure_uncertainty(
    z: np.ndarray, d: TokenId, cfg: PerturbationConfig, rng: RandomStream
) -> UncertaintyEstimate:
    """Fraction of K temperature-perturbed resamples that differ from ``d``.

    Consumes exactly 2K draws (K temperatures, then K token samples) and
    never mutates the logits. Each resample draws a fresh temperature, then
    one token from the rescaled softmax by inverse CDF.
    """
    z = validate_logits(z)
    thetas = sample_temperatures(cfg, rng)
    mismatches = 0
    for theta in thetas:
        probs = temperature_softmax(z, float(theta))
        if sample_categorical(probs, rng) != d:
            mismatches += 1
    return UncertaintyEstimate(u=mismatches / cfg.K, mismatches=mismatches)


def skip_decision(u: float, u_th: float) -> int:
    """The uplink gate: 0 (skip, draft becomes the response) when
    ``u <= u_th``, else 1 (transmit). Ties skip."""
    if not 0.0 <= u <= 1.0:
        raise ValidationError(f"uncertainty must lie in [0,1], got {u!r}")
    return 0 if u <= u_th else 1
