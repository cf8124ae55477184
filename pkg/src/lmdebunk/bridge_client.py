"""Client for an out-of-process scorer speaking newline-delimited JSON.

One request object per line, one response object per line, UTF-8. The
bridge may add fields to a response (for example its token unit); the
client reads only what it needs. Requests are serialized under a lock
so a bridge never sees interleaved lines from concurrent scoring.

Requests:
    {"op": "ground", "evidence": [...], "epochs": N, "learning_rate": F}
    {"op": "score", "text": "..."}
    {"op": "reset"}

Responses:
    {"ok": true, ...}           ground and reset
    {"ok": true, "ppl": 12.3}   score
    {"ok": false, "error": "..."}
"""

from __future__ import annotations

import json
import math
import os
import shlex
import socket
import subprocess
import threading
from pathlib import Path

from sklearn.base import BaseEstimator

__all__ = ["BridgeError", "ExternalScorer", "BRIDGE_ENV_VAR"]

BRIDGE_ENV_VAR = "LMDEBUNK_BRIDGE"


class BridgeError(RuntimeError):
    """The bridge failed, answered with ok=false, or broke protocol."""


class _StdioTransport:
    def __init__(self, argv: list[str]):
        self.process = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )

    def send_line(self, line: bytes) -> None:
        self.process.stdin.write(line)
        self.process.stdin.flush()

    def recv_line(self) -> bytes:
        return self.process.stdout.readline()

    def close(self) -> None:
        try:
            if self.process.poll() is None:
                self.process.stdin.close()
                self.process.wait(timeout=5)
        except Exception:
            self.process.kill()
            self.process.wait()
        finally:
            for stream in (self.process.stdin, self.process.stdout):
                if stream is not None and not stream.closed:
                    stream.close()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.reader = self.sock.makefile("rb")

    def send_line(self, line: bytes) -> None:
        self.sock.sendall(line)

    def recv_line(self) -> bytes:
        return self.reader.readline()

    def close(self) -> None:
        try:
            self.reader.close()
        finally:
            self.sock.close()


def _parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bridge address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class ExternalScorer(BaseEstimator):
    """Scorer backed by a bridge process over stdio or TCP.

    Exactly one of command (argv launched as a subprocess) or address
    (host:port) selects the transport; with neither given, the
    LMDEBUNK_BRIDGE environment variable supplies the address. The
    connection opens lazily on first use.
    """

    def __init__(self, command: list[str] | str | None = None,
                 address: str | None = None, epochs: int = 5,
                 learning_rate: float = 5e-5, timeout: float = 60.0,
                 transcript_path: str | Path | None = None):
        self.command = command
        self.address = address
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.timeout = timeout
        self.transcript_path = transcript_path

    def _ensure_transport(self):
        if getattr(self, "_transport", None) is not None:
            return self._transport
        command, address = self.command, self.address
        if command is not None and address is not None:
            raise ValueError("pass either command or address, not both")
        if command is None and address is None:
            address = os.environ.get(BRIDGE_ENV_VAR)
            if not address:
                raise BridgeError(
                    f"no bridge configured: pass command or address, "
                    f"or set {BRIDGE_ENV_VAR}"
                )
        try:
            if command is not None:
                argv = shlex.split(command) if isinstance(command, str) else list(command)
                self._transport = _StdioTransport(argv)
            else:
                host, port = _parse_address(address)
                self._transport = _TcpTransport(host, port, self.timeout)
        except (OSError, ValueError) as exc:
            raise BridgeError(f"cannot reach bridge: {exc}") from exc
        self._lock = threading.Lock()
        return self._transport

    def _record(self, request: dict, response: dict) -> None:
        if self.transcript_path is None:
            return
        with open(self.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"request": request, "response": response},
                                ensure_ascii=False) + "\n")

    def _request(self, payload: dict) -> dict:
        transport = self._ensure_transport()
        line = (json.dumps(payload, ensure_ascii=False) + "\n").encode("utf-8")
        with self._lock:
            try:
                transport.send_line(line)
                raw = transport.recv_line()
            except OSError as exc:
                raise BridgeError(f"bridge transport failed: {exc}") from exc
        if not raw:
            raise BridgeError("bridge closed the connection")
        try:
            response = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BridgeError(f"bridge sent a malformed line: {raw[:200]!r}") from exc
        if not isinstance(response, dict) or "ok" not in response:
            raise BridgeError(f"bridge response missing 'ok': {response!r}")
        self._record(payload, response)
        if response["ok"] is not True:
            raise BridgeError(str(response.get("error", "bridge reported failure")))
        return response

    # Scorer protocol.
    def ground(self, texts: list[str]) -> None:
        texts = list(texts)
        if not texts:
            raise ValueError("cannot ground on an empty text list")
        response = self._request({
            "op": "ground",
            "evidence": texts,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
        })
        self.grounded_ = True
        # The bridge declares what a token is (word, subword, ...);
        # reports carry this so magnitudes are never naively compared.
        self.unit_ = str(response.get("unit", "unknown"))

    def score(self, text: str) -> float:
        response = self._request({"op": "score", "text": text})
        ppl = response.get("ppl")
        if not isinstance(ppl, (int, float)) or isinstance(ppl, bool) \
                or not math.isfinite(ppl) or ppl <= 0:
            raise BridgeError(f"bridge returned a bad perplexity: {ppl!r}")
        return float(ppl)

    def reset(self) -> None:
        # Nothing to do before the connection exists; a fresh bridge is reset.
        if getattr(self, "_transport", None) is None:
            return
        self._request({"op": "reset"})
        self.grounded_ = False

    def close(self) -> None:
        transport = getattr(self, "_transport", None)
        if transport is not None:
            transport.close()
            self._transport = None

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
