"""Scriptable logit server speaking the NDJSON protocol, for client tests.

Usage: logit_stub.py MODE [VOCAB_SIZE] [EOS_ID]

Modes:
    uniform   all-zero logits (softmax -> uniform); empty tokens -> error frame
    seeded    deterministic role/sequence-dependent logits
    wronglen  replies with vocab_size-1 logits
    errorframe  every request answered with an error frame
    hang      handshake, then never replies
    die       handshake, then exits
    dieafter  seeded replies, exits after N requests (4th argument)
    badjson   one garbage line before each valid reply
"""

from __future__ import annotations

import hashlib
import json
import sys

import numpy as np


def main() -> None:
    mode = sys.argv[1] if len(sys.argv) > 1 else "uniform"
    vocab_size = int(sys.argv[2]) if len(sys.argv) > 2 else 32000
    eos_id = int(sys.argv[3]) if len(sys.argv) > 3 else 2
    die_after = int(sys.argv[4]) if len(sys.argv) > 4 else 0

    out = sys.stdout
    out.write(json.dumps({"hello": {"vocab_size": vocab_size, "eos_id": eos_id}}) + "\n")
    out.flush()
    if mode == "die":
        return

    served = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        req_id = req.get("id")
        if mode == "dieafter" and served >= die_after:
            return
        served += 1
        if mode == "hang":
            continue
        if mode == "badjson":
            out.write("this is not json\n")
            out.flush()
        if mode == "errorframe":
            out.write(json.dumps({"id": req_id, "error": "refused by stub"}) + "\n")
            out.flush()
            continue
        tokens = req.get("tokens", [])
        if not tokens and mode in ("uniform", "seeded"):
            out.write(json.dumps({"id": req_id, "error": "empty sequence"}) + "\n")
            out.flush()
            continue
        if mode == "wronglen":
            logits = [0.0] * (vocab_size - 1)
        elif mode in ("seeded", "dieafter"):
            digest = hashlib.blake2b(
                (req.get("role", "") + "," + ",".join(map(str, tokens))).encode(),
                digest_size=8,
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            logits = rng.normal(size=vocab_size).tolist()
        else:
            logits = [0.0] * vocab_size
        out.write(json.dumps({"id": req_id, "logits": logits}) + "\n")
        out.flush()


if __name__ == "__main__":
    main()
