"""Protocol conformance: stream handling, transcript replay, transports."""

from __future__ import annotations

import io
import json
import math
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from lmdebunk_bridge import CausalLmScorer, serve_stream

from conftest import make_evidence

# Transcript recorded by the consumer's client against its reference
# scorer; the requests are the protocol contract, the recorded ppl
# values are model-specific and deliberately ignored here.
TRANSCRIPT = Path(__file__).resolve().parents[2] / "tests" / "data" / "protocol_transcript.jsonl"

FAST_LR = 1e-3


def run_stream(scorer, lines: list[str]) -> list[dict]:
    reader = io.BytesIO("".join(line + "\n" for line in lines).encode("utf-8"))
    writer = io.BytesIO()
    serve_stream(scorer, reader, writer)
    out = writer.getvalue().decode("utf-8").splitlines()
    return [json.loads(line) for line in out]


def request(op: str, **fields) -> str:
    return json.dumps({"op": op, **fields})


class TestStreamHandling:
    def test_ground_score_reset_roundtrip(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        evidence = make_evidence(3)
        responses = run_stream(scorer, [
            request("ground", evidence=evidence, epochs=1, learning_rate=FAST_LR),
            request("score", text=evidence[0]),
            request("reset"),
            request("score", text=evidence[0]),
        ])
        ground, score, reset, after_reset = responses
        assert ground["ok"] is True
        assert ground["unit"] == "subword"
        assert ground["n_texts"] == 3
        assert score["ok"] is True
        assert score["ppl"] > 0
        assert reset == {"ok": True}
        assert after_reset["ok"] is False
        assert "not grounded" in after_reset["error"]

    def test_malformed_line_answered_and_connection_survives(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        responses = run_stream(scorer, [
            "{this is not json",
            request("ground", evidence=["one piece of evidence."],
                    epochs=1, learning_rate=FAST_LR),
        ])
        assert responses[0]["ok"] is False
        assert "bad json" in responses[0]["error"]
        assert responses[1]["ok"] is True

    def test_non_object_request(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        (response,) = run_stream(scorer, ['["ground"]'])
        assert response["ok"] is False
        assert "object" in response["error"]

    def test_unknown_op(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        (response,) = run_stream(scorer, [request("train")])
        assert response["ok"] is False
        assert "unknown op" in response["error"]

    def test_score_before_ground(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        (response,) = run_stream(scorer, [request("score", text="hello there.")])
        assert response["ok"] is False
        assert "not grounded" in response["error"]

    def test_missing_fields_are_errors_not_crashes(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        responses = run_stream(scorer, [
            request("ground"),
            request("ground", evidence=[]),
            request("ground", evidence=["fine."], epochs=0),
        ])
        assert all(r["ok"] is False for r in responses)
        assert "evidence" in responses[0]["error"]
        assert "evidence" in responses[1]["error"]
        assert "epochs" in responses[2]["error"]

    def test_blank_lines_skipped(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        responses = run_stream(scorer, [
            "",
            request("ground", evidence=["one piece of evidence."],
                    epochs=1, learning_rate=FAST_LR),
            "   ",
        ])
        assert len(responses) == 1
        assert responses[0]["ok"] is True

    def test_ground_defaults(self, tiny_model_dir):
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        (response,) = run_stream(scorer, [
            request("ground", evidence=["one piece of evidence."]),
        ])
        assert response["ok"] is True
        assert response["epochs"] == 5
        assert response["learning_rate"] == 5e-5


class TestTranscriptReplay:
    def test_recorded_requests_get_schema_valid_responses(self, tiny_model_dir):
        entries = [json.loads(line)
                   for line in TRANSCRIPT.read_text().splitlines() if line.strip()]
        assert entries, "transcript fixture is empty"
        scorer = CausalLmScorer(tiny_model_dir, seed=0, max_length=64)
        requests = [entry["request"] for entry in entries]
        responses = run_stream(scorer, [json.dumps(r) for r in requests])
        assert len(responses) == len(requests)
        for req, resp in zip(requests, responses):
            assert resp["ok"] is True, f"{req['op']} failed: {resp}"
            if req["op"] == "ground":
                assert isinstance(resp["unit"], str)
                assert resp["n_texts"] == len(req["evidence"])
            if req["op"] == "score":
                ppl = resp["ppl"]
                assert isinstance(ppl, float) and not isinstance(ppl, bool)
                assert math.isfinite(ppl) and ppl > 0


def read_response(stream) -> dict:
    line = stream.readline()
    assert line, "bridge closed the stream early"
    return json.loads(line)


class TestStdioProcess:
    def test_end_to_end(self, tiny_model_dir):
        proc = subprocess.Popen(
            [sys.executable, "-m", "lmdebunk_bridge",
             "--model", tiny_model_dir, "--seed", "0", "--max-length", "64"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )
        try:
            def ask(line: str) -> dict:
                proc.stdin.write((line + "\n").encode("utf-8"))
                proc.stdin.flush()
                return read_response(proc.stdout)

            evidence = make_evidence(3)
            ground = ask(request("ground", evidence=evidence,
                                 epochs=1, learning_rate=FAST_LR))
            assert ground["ok"] is True and ground["unit"] == "subword"
            score = ask(request("score", text=evidence[0]))
            assert score["ok"] is True and score["ppl"] > 0
            assert ask(request("reset")) == {"ok": True}
            proc.stdin.close()
            assert proc.wait(timeout=30) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

    def test_unloadable_model_answers_on_protocol(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "lmdebunk_bridge",
             "--model", str(tmp_path / "no-such-model")],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        try:
            proc.stdin.write((request("score", text="hi there.") + "\n").encode())
            proc.stdin.flush()
            response = read_response(proc.stdout)
            assert response["ok"] is False
            assert "model failed to load" in response["error"]
            proc.stdin.close()
            assert proc.wait(timeout=30) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestTcpServer:
    def test_state_persists_across_connections(self, tiny_model_dir):
        port = free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "lmdebunk_bridge",
             "--model", tiny_model_dir, "--seed", "0", "--max-length", "64",
             "--port", str(port)],
            stderr=subprocess.DEVNULL,
        )
        try:
            deadline = time.monotonic() + 30
            while True:
                try:
                    sock = socket.create_connection(("127.0.0.1", port), timeout=1)
                    break
                except OSError:
                    assert time.monotonic() < deadline, "server never came up"
                    assert proc.poll() is None, "server exited during startup"
                    time.sleep(0.05)

            def ask(sock, line: str) -> dict:
                sock.sendall((line + "\n").encode("utf-8"))
                with sock.makefile("rb") as reader:
                    return read_response(reader)

            evidence = make_evidence(3)
            with sock:
                ground = ask(sock, request("ground", evidence=evidence,
                                           epochs=1, learning_rate=FAST_LR))
                assert ground["ok"] is True

            # A new connection talks to the same grounded scorer.
            with socket.create_connection(("127.0.0.1", port), timeout=5) as again:
                score = ask(again, request("score", text=evidence[0]))
                assert score["ok"] is True and score["ppl"] > 0
        finally:
            proc.terminate()
            proc.wait(timeout=10)
