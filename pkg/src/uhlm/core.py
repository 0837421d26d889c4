"""Foundational types and numerically careful primitives.

Vocabularies, logits, probability vectors over the vocabulary, softmax and
temperature-scaled softmax, inverse-CDF categorical sampling, and the
deterministic labeled random-stream contract used by every other module.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidDistributionError,
    InvalidLogitsError,
    InvalidTemperatureError,
    ValidationError,
)

# Lower clamp for sampling temperatures: near-zero temperature collapses to
# argmax, which the clamp preserves without division hazards.
THETA_MIN = 1e-3

# Absolute tolerance on the sum of a probability vector.
DIST_SUM_TOL = 1e-9

TokenId = int
TokenSequence = list[int]


@dataclass(frozen=True)
class Vocabulary:
    """Shared token inventory of the draft and target models.

    Tokens are opaque integer ids in ``[0, size)``; ``eos_id`` marks the
    end-of-sentence token that terminates generation.
    """

    size: int
    eos_id: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValidationError(f"vocabulary size must be >= 2, got {self.size}")
        if not 0 <= self.eos_id < self.size:
            raise ValidationError(
                f"eos_id {self.eos_id} outside vocabulary of size {self.size}"
            )

    def contains(self, token: TokenId) -> bool:
        return 0 <= token < self.size


def _stream_key(seed: int, label: str) -> np.random.SeedSequence:
    """Derive a SeedSequence from (seed, label) so that distinct labels give
    statistically independent streams while identical pairs replay exactly."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *words])


@dataclass
class RandomStream:
    """A labeled, replayable source of uniform randomness.

    Identical ``(seed, label)`` pairs produce identical draw sequences;
    distinct labels are independent. A stream is single-owner: concurrent
    consumers must each hold their own stream, obtained via :meth:`derive`.
    """

    seed: int
    label: str
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._gen = np.random.Generator(np.random.PCG64(_stream_key(self.seed, self.label)))

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator, for bulk draws in the same sequence."""
        return self._gen

    def uniform(self) -> float:
        """One U[0,1) draw."""
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` U[0,1) draws; identical values to ``n`` calls of uniform()."""
        return self._gen.random(n)

    def derive(self, sublabel: str) -> "RandomStream":
        """Child stream with an extended label; independent of the parent."""
        return RandomStream(self.seed, f"{self.label}/{sublabel}")


def validate_logits(z: np.ndarray) -> np.ndarray:
    """Return ``z`` as a float64 vector, rejecting NaN/inf entries."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidLogitsError(f"logits must be a non-empty 1-d vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidLogitsError("logits contain non-finite entries")
    return z


def validate_distribution(p: np.ndarray) -> np.ndarray:
    """Return ``p`` as a float64 vector, checking non-negativity and unit sum."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError(
            f"distribution must be a non-empty 1-d vector, got shape {p.shape}"
        )
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError("distribution contains non-finite entries")
    if np.any(p < 0.0):
        raise InvalidDistributionError("distribution contains negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > DIST_SUM_TOL:
        raise InvalidDistributionError(f"distribution sums to {total!r}, not 1")
    return p


def softmax(z: np.ndarray) -> np.ndarray:
    """Normalize logits into a probability vector.

    Uses max-subtraction for overflow safety; output is invariant under
    adding a constant to all logits.
    """
    z = validate_logits(z)
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def temperature_softmax(z: np.ndarray, theta: float) -> np.ndarray:
    """Softmax of ``z / theta``.

    ``theta`` must be at least :data:`THETA_MIN`; small temperatures sharpen
    toward argmax, large ones flatten toward uniform.
    """
    if not np.isfinite(theta) or theta < THETA_MIN:
        raise InvalidTemperatureError(f"temperature {theta!r} below minimum {THETA_MIN}")
    z = validate_logits(z)
    return softmax(z / theta)


def sample_categorical(p: np.ndarray, rng: RandomStream) -> TokenId:
    """Draw one token index from ``p`` by inverse CDF over a single uniform.

    Consumes exactly one draw from ``rng``, making traces replayable.
    """
    p = validate_distribution(p)
    u = rng.uniform()
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, p.size - 1)
