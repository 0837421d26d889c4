"""Golden-transcript conformance suite for the external-backend protocol.

The transcript file pins the handshake and a request/response exchange
covering determinism, role separation, error frames, and connection
survival after an error. It runs here against the Python stub and, when
built, against the adapter package; the adapter's own test suite replays
the same file.
"""

import json
import shlex
import shutil
import subprocess
from pathlib import Path

import pytest

from conftest import stub_command

GOLDEN = Path(__file__).parent / "golden" / "transcripts.json"
ADAPTER_ENTRY = Path(__file__).parent.parent / "adapter" / "dist" / "main.js"


class TranscriptFailure(AssertionError):
    pass


def run_golden_suite(command: str, timeout_s: float = 30.0) -> None:
    transcript = json.loads(GOLDEN.read_text())
    proc = subprocess.Popen(
        shlex.split(command),
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        handshake = json.loads(proc.stdout.readline())
        expected = transcript["handshake"]
        if handshake.get("hello", {}).get("vocab_size") != expected["vocab_size"]:
            raise TranscriptFailure(f"handshake vocab mismatch: {handshake}")
        if handshake.get("hello", {}).get("eos_id") != expected["eos_id"]:
            raise TranscriptFailure(f"handshake eos mismatch: {handshake}")

        logits_by_id: dict[int, list[float]] = {}
        for step in transcript["steps"]:
            proc.stdin.write(json.dumps(step["send"]) + "\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            req_id = step["send"]["id"]
            if reply.get("id") != req_id:
                raise TranscriptFailure(f"id mismatch: sent {req_id}, got {reply.get('id')}")
            if step["expect"] == "error":
                if "error" not in reply:
                    raise TranscriptFailure(f"expected error frame, got {reply.keys()}")
                continue
            logits = reply.get("logits")
            if not isinstance(logits, list) or len(logits) != expected["vocab_size"]:
                raise TranscriptFailure(
                    f"step {req_id}: expected {expected['vocab_size']} logits"
                )
            if not all(isinstance(v, (int, float)) for v in logits[:100]):
                raise TranscriptFailure(f"step {req_id}: non-numeric logits")
            logits_by_id[req_id] = logits
            if "same_as" in step and logits != logits_by_id[step["same_as"]]:
                raise TranscriptFailure(f"step {req_id}: logits not deterministic")
            if "different_from" in step and logits == logits_by_id[step["different_from"]]:
                raise TranscriptFailure(f"step {req_id}: roles returned identical logits")
    finally:
        proc.stdin.close()
        proc.terminate()
        proc.wait(timeout=timeout_s)


def test_python_stub_passes_golden_suite():
    run_golden_suite(stub_command("seeded", "32000", "2"))


@pytest.mark.skipif(not ADAPTER_ENTRY.exists(), reason="adapter not built")
def test_adapter_passes_golden_suite():
    node = shutil.which("node")
    assert node is not None
    run_golden_suite(f"{node} {ADAPTER_ENTRY} --listen stdio")


@pytest.mark.skipif(not ADAPTER_ENTRY.exists(), reason="adapter not built")
def test_generation_through_adapter():
    """End-to-end: the engine drives the adapter purely over the wire."""
    from uhlm.backends.external import external_backend
    from uhlm.engine import EngineConfig, Method, run_generation, throughput_identity_check

    node = shutil.which("node")
    pair = external_backend(
        f"{node} {ADAPTER_ENTRY} --listen stdio --vocab-size 64 --eos-id 0", timeout_s=30
    )
    try:
        assert pair.vocab.size == 64
        cfg = EngineConfig(method=Method.HLM, r_max=6, seed=12, prompt=[1, 2])
        records, summary = run_generation(cfg, pair)
        assert summary.tokens_generated >= 1
        assert throughput_identity_check(records, summary, cfg.latency, Method.HLM).ok
        repeat, _ = run_generation(cfg, pair)
        assert [r.response for r in repeat] == [r.response for r in records]
    finally:
        pair.slm.connection.close()
