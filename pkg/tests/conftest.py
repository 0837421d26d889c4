from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

STUB_PATH = Path(__file__).parent / "stubs" / "logit_stub.py"


def stub_command(*args: str) -> str:
    return " ".join([sys.executable, str(STUB_PATH), *args])


def make_corpus(seed: int = 0, size: int = 120_000) -> bytes:
    """Deterministic word-like byte stream for n-gram training.

    Zipf-weighted words over a small lexicon give the higher-order model a
    real advantage over the unigram one, so draft/target disagreement is
    guaranteed without shipping a prose file.
    """
    rng = np.random.default_rng(seed)
    letters = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz", dtype=np.uint8)
    lexicon = [
        bytes(rng.choice(letters, size=rng.integers(2, 9)).tolist()) for _ in range(200)
    ]
    weights = 1.0 / np.arange(1, len(lexicon) + 1)
    weights /= weights.sum()
    chunks: list[bytes] = []
    total = 0
    while total < size:
        word = lexicon[int(rng.choice(len(lexicon), p=weights))]
        sep = b". " if rng.random() < 0.05 else b" "
        chunks.append(word + sep)
        total += len(word) + len(sep)
    return b"".join(chunks)[:size]


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("corpus") / "corpus.txt"
    path.write_bytes(make_corpus())
    return path
