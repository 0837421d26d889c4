"""Byte-level n-gram draft/target pair.

Count-based conditional models with add-epsilon smoothing; the draft model
conditions on a short context, the target on a longer one. Smoothing keeps
every next-token probability strictly positive, so any sampled draft is a
legal input to the verifier. Unseen contexts fall back to the smoothed
uniform distribution.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import TokenSequence, Vocabulary
from ..errors import BackendError, ValidationError
from .base import BackendPair, ModelBackend, Role

NGRAM_MAGIC = "UHLM-NGRAM-1"

BYTE_VOCAB_SIZE = 256
BYTE_EOS_ID = 0


@dataclass(frozen=True)
class NGramPairConfig:
    """Training settings for the draft/target n-gram pair.

    ``order`` is the context length in tokens; the draft model must look at
    strictly less context than the target.
    """

    corpus_path: str | Path
    order_slm: int = 1
    order_llm: int = 3
    smoothing_epsilon: float = 1e-4
    vocab_size: int = BYTE_VOCAB_SIZE
    eos_id: int = BYTE_EOS_ID

    def __post_init__(self) -> None:
        if self.order_slm < 1 or self.order_llm < 1:
            raise ValidationError("n-gram orders must be >= 1")
        if self.order_slm >= self.order_llm:
            raise ValidationError(
                f"draft order {self.order_slm} must be smaller than target order {self.order_llm}"
            )
        if self.smoothing_epsilon <= 0:
            raise ValidationError("smoothing epsilon must be positive")


class NGramModel(ModelBackend):
    """Conditional next-token model over fixed-length contexts."""

    def __init__(
        self,
        role: Role,
        vocab: Vocabulary,
        order: int,
        epsilon: float,
        counts: dict[tuple[int, ...], Counter] | None = None,
    ) -> None:
        self.role = role
        self.vocab = vocab
        self.order = order
        self.epsilon = epsilon
        self.counts: dict[tuple[int, ...], Counter] = counts if counts is not None else {}

    def train(self, tokens: TokenSequence) -> None:
        order = self.order
        for i in range(order, len(tokens)):
            ctx = tuple(tokens[i - order : i])
            self.counts.setdefault(ctx, Counter())[tokens[i]] += 1

    def next_distribution(self, sequence: TokenSequence) -> np.ndarray:
        self._check_sequence(sequence)
        size = self.vocab.size
        probs = np.full(size, self.epsilon)
        if len(sequence) >= self.order:
            ctx = tuple(sequence[len(sequence) - self.order :])
            for tok, n in self.counts.get(ctx, {}).items():
                probs[tok] += n
        return probs / probs.sum()

    def next_logits(self, sequence: TokenSequence) -> np.ndarray:
        return np.log(self.next_distribution(sequence))


def train_ngram(cfg: NGramPairConfig) -> BackendPair:
    """Train the draft/target pair from a byte corpus."""
    data = Path(cfg.corpus_path).read_bytes()
    if not data:
        raise BackendError(f"corpus {cfg.corpus_path} is empty")
    return train_ngram_from_tokens(cfg, list(data))


def train_ngram_from_tokens(cfg: NGramPairConfig, tokens: TokenSequence) -> BackendPair:
    if not tokens:
        raise BackendError("cannot train on an empty token stream")
    vocab = Vocabulary(cfg.vocab_size, cfg.eos_id)
    slm = NGramModel(Role.SLM, vocab, cfg.order_slm, cfg.smoothing_epsilon)
    llm = NGramModel(Role.LLM, vocab, cfg.order_llm, cfg.smoothing_epsilon)
    slm.train(tokens)
    llm.train(tokens)
    return BackendPair(slm=slm, llm=llm)


def save_ngram(model: NGramModel, path: str | Path) -> None:
    """Serialize the count tables as a versioned JSON document."""
    doc = {
        "magic": NGRAM_MAGIC,
        "role": model.role.value,
        "vocab_size": model.vocab.size,
        "eos_id": model.vocab.eos_id,
        "order": model.order,
        "epsilon": model.epsilon,
        "counts": {
            ",".join(map(str, ctx)): dict(counter) for ctx, counter in model.counts.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_ngram(path: str | Path) -> NGramModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("magic") != NGRAM_MAGIC:
        raise BackendError(f"{path} is not a {NGRAM_MAGIC} model file")
    counts: dict[tuple[int, ...], Counter] = {}
    for ctx_key, table in doc["counts"].items():
        ctx = tuple(int(v) for v in ctx_key.split(",")) if ctx_key else ()
        counts[ctx] = Counter({int(tok): int(n) for tok, n in table.items()})
    return NGramModel(
        role=Role(doc["role"]),
        vocab=Vocabulary(doc["vocab_size"], doc["eos_id"]),
        order=int(doc["order"]),
        epsilon=float(doc["epsilon"]),
        counts=counts,
    )
