"""Client for external logit servers speaking the newline-delimited JSON
wire protocol.

On startup the server sends one handshake line::

    {"hello": {"vocab_size": <int>, "eos_id": <int>}}

then answers requests one at a time::

    request:  {"id": <int>, "role": "slm"|"llm", "tokens": [<int>, ...]}
    response: {"id": <int>, "logits": [<float> x vocab_size]}
    error:    {"id": <int>, "error": "<message>"}

Transport is a spawned subprocess (stdio) or a TCP connection. Exactly one
request is in flight per connection.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import threading
import time
from typing import Callable

import numpy as np

from ..core import TokenSequence, Vocabulary
from ..errors import BackendError, BackendTimeoutError, ProtocolError
from .base import BackendPair, ModelBackend, Role

DEFAULT_TIMEOUT_S = 60.0


class _LineChannel:
    """Deadline-aware NDJSON framing over a readable fd and a writer."""

    def __init__(self, read_fd: int, write: Callable[[bytes], None], close: Callable[[], None]):
        self._read_fd = read_fd
        self._write = write
        self._close = close
        self._buf = b""

    def send_line(self, payload: bytes) -> None:
        try:
            self._write(payload + b"\n")
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"backend connection lost while sending: {exc}") from exc

    def recv_line(self, timeout_s: float) -> bytes:
        deadline = time.monotonic() + timeout_s
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendTimeoutError(f"no reply within {timeout_s} s")
            ready, _, _ = select.select([self._read_fd], [], [], remaining)
            if not ready:
                raise BackendTimeoutError(f"no reply within {timeout_s} s")
            chunk = os.read(self._read_fd, 1 << 16)
            if not chunk:
                raise ProtocolError("backend closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self) -> None:
        self._close()


class ExternalConnection:
    """One handshaken protocol session; thread-safe, one request in flight."""

    def __init__(self, channel: _LineChannel, timeout_s: float = DEFAULT_TIMEOUT_S):
        self._channel = channel
        self._timeout_s = timeout_s
        self._lock = threading.Lock()
        self._next_id = 0
        self.vocab = self._read_handshake()

    @classmethod
    def spawn(cls, argv: list[str], timeout_s: float = DEFAULT_TIMEOUT_S) -> "ExternalConnection":
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

        def write(data: bytes) -> None:
            assert proc.stdin is not None
            proc.stdin.write(data)
            proc.stdin.flush()

        def close() -> None:
            if proc.poll() is None:
                proc.terminate()
                try:
                    proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    proc.kill()

        assert proc.stdout is not None
        return cls(_LineChannel(proc.stdout.fileno(), write, close), timeout_s)

    @classmethod
    def connect(cls, host: str, port: int, timeout_s: float = DEFAULT_TIMEOUT_S) -> "ExternalConnection":
        sock = socket.create_connection((host, port), timeout=timeout_s)
        sock.setblocking(True)
        return cls(_LineChannel(sock.fileno(), sock.sendall, sock.close), timeout_s)

    def _read_handshake(self) -> Vocabulary:
        doc = self._parse(self._channel.recv_line(self._timeout_s))
        hello = doc.get("hello")
        if not isinstance(hello, dict):
            raise ProtocolError(f"expected handshake, got {doc!r}")
        try:
            return Vocabulary(int(hello["vocab_size"]), int(hello["eos_id"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed handshake {hello!r}") from exc

    @staticmethod
    def _parse(line: bytes) -> dict:
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"backend sent invalid JSON: {line[:200]!r}") from exc
        if not isinstance(doc, dict):
            raise ProtocolError(f"backend sent a non-object frame: {doc!r}")
        return doc

    def request_logits(self, role: str, tokens: TokenSequence) -> np.ndarray:
        with self._lock:
            self._next_id += 1
            req_id = self._next_id
            frame = json.dumps({"id": req_id, "role": role, "tokens": list(tokens)})
            self._channel.send_line(frame.encode("utf-8"))
            reply = self._parse(self._channel.recv_line(self._timeout_s))
        if reply.get("id") != req_id:
            raise ProtocolError(f"reply id {reply.get('id')!r} does not match request {req_id}")
        if "error" in reply:
            raise BackendError(f"backend error: {reply['error']}")
        logits = reply.get("logits")
        if not isinstance(logits, list) or len(logits) != self.vocab.size:
            got = len(logits) if isinstance(logits, list) else type(logits).__name__
            raise ProtocolError(f"logit length mismatch: expected {self.vocab.size}, got {got}")
        arr = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ProtocolError("backend sent non-finite logits")
        return arr

    def close(self) -> None:
        self._channel.close()


class ExternalBackend(ModelBackend):
    """One role of a shared external connection."""

    def __init__(self, connection: ExternalConnection, role: Role):
        self.connection = connection
        self.role = role
        self.vocab = connection.vocab

    def next_logits(self, sequence: TokenSequence) -> np.ndarray:
        self._check_sequence(sequence)
        return self.connection.request_logits(self.role.value, sequence)


def external_backend(endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> BackendPair:
    """Connect to an external logit server and expose it as a backend pair.

    ``endpoint`` is either ``tcp://host:port`` or a command line to spawn
    (tokens split with shell quoting rules, no shell interpolation).
    """
    if endpoint.startswith("tcp://"):
        rest = endpoint[len("tcp://") :]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise BackendError(f"malformed TCP endpoint {endpoint!r}")
        conn = ExternalConnection.connect(host, int(port), timeout_s)
    else:
        argv = shlex.split(endpoint)
        if not argv:
            raise BackendError("empty external backend command")
        conn = ExternalConnection.spawn(argv, timeout_s)
    return BackendPair(
        slm=ExternalBackend(conn, Role.SLM), llm=ExternalBackend(conn, Role.LLM)
    )
