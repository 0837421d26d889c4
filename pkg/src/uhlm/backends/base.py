"""Backend interface: role-tagged next-token logit providers.

A backend pair bundles the device-side draft model and the server-side
target model over one shared vocabulary. ``next_logits`` must be pure:
identical sequences yield identical logits for the life of the backend.
"""

from __future__ import annotations

import enum
import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..core import TokenSequence, Vocabulary
from ..errors import BackendError


class Role(enum.Enum):
    SLM = "slm"
    LLM = "llm"


class ModelBackend(ABC):
    """Next-token logit provider for one role."""

    role: Role
    vocab: Vocabulary

    @abstractmethod
    def next_logits(self, sequence: TokenSequence) -> np.ndarray:
        """Finite logits of length ``vocab.size`` for the next token."""

    def next_distribution(self, sequence: TokenSequence) -> np.ndarray | None:
        """The exact next-token distribution, for backends whose native
        product is a probability vector; None means derive it by softmaxing
        :meth:`next_logits`. Overriding avoids log/exp round-trip noise in
        exact-equality comparisons downstream."""
        return None

    def _check_sequence(self, sequence: TokenSequence) -> None:
        for tok in sequence:
            if not self.vocab.contains(tok):
                raise BackendError(f"token {tok} outside vocabulary of size {self.vocab.size}")


@dataclass(frozen=True)
class BackendPair:
    """Draft and target backends sharing one vocabulary."""

    slm: ModelBackend
    llm: ModelBackend

    def __post_init__(self) -> None:
        if self.slm.vocab != self.llm.vocab:
            raise BackendError("draft and target backends must share a vocabulary")

    @property
    def vocab(self) -> Vocabulary:
        return self.slm.vocab


def sequence_digest(seed: int, sequence: TokenSequence) -> str:
    """Stable fingerprint of (seed, token sequence) for purity-preserving
    per-sequence randomness in generated backends."""
    h = hashlib.blake2b(digest_size=16)
    h.update(seed.to_bytes(8, "little", signed=True))
    for tok in sequence:
        h.update(int(tok).to_bytes(4, "little"))
    return h.hexdigest()


class DistributionPairModel(ABC):
    """A generator that produces the (draft, target) distribution pair for a
    sequence directly; adapted to two ``ModelBackend`` roles via log-probs."""

    vocab: Vocabulary

    @abstractmethod
    def distributions(self, sequence: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
        """(draft distribution, target distribution), both strictly positive."""

    def as_pair(self) -> BackendPair:
        return BackendPair(
            slm=_PairRoleView(self, Role.SLM), llm=_PairRoleView(self, Role.LLM)
        )


class _PairRoleView(ModelBackend):
    """One role of a distribution-pair generator, exposed as logits."""

    def __init__(self, model: DistributionPairModel, role: Role) -> None:
        self.model = model
        self.role = role
        self.vocab = model.vocab

    def next_distribution(self, sequence: TokenSequence) -> np.ndarray:
        self._check_sequence(sequence)
        x, y = self.model.distributions(sequence)
        return x if self.role is Role.SLM else y

    def next_logits(self, sequence: TokenSequence) -> np.ndarray:
        return np.log(self.next_distribution(sequence))
