"""Serves the scorer over newline-delimited JSON on stdio or TCP.

One request object per line, one response object per line, UTF-8.
Every failure is answered on the protocol as {"ok": false, "error":
...}; the connection is never dropped in response to a bad request.
Requests are handled strictly in arrival order.

Requests:
    {"op": "ground", "evidence": [...], "epochs": N, "learning_rate": F}
    {"op": "score", "text": "..."}
    {"op": "reset"}
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

__all__ = ["handle_line", "serve_stream", "main"]

DEFAULT_EPOCHS = 5
DEFAULT_LEARNING_RATE = 5e-5


def handle_line(scorer, line: str, load_error: str | None = None) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"ok": False, "error": f"bad json: {exc}"}
    if not isinstance(request, dict):
        return {"ok": False, "error": "request must be an object"}
    if load_error is not None:
        return {"ok": False, "error": f"model failed to load: {load_error}"}
    op = request.get("op")
    try:
        if op == "ground":
            ack = scorer.ground(request.get("evidence"),
                                request.get("epochs", DEFAULT_EPOCHS),
                                request.get("learning_rate", DEFAULT_LEARNING_RATE))
            return {"ok": True, **ack}
        if op == "score":
            return {"ok": True, "ppl": scorer.score(request.get("text"))}
        if op == "reset":
            scorer.reset()
            return {"ok": True}
        return {"ok": False, "error": f"unknown op: {op!r}"}
    except ValueError as exc:
        return {"ok": False, "error": str(exc)}
    except Exception as exc:
        # OOM and friends must surface as an answer, not a dead pipe.
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def serve_stream(scorer, reader, writer, load_error: str | None = None) -> None:
    for raw in reader:
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        response = handle_line(scorer, line, load_error)
        writer.write((json.dumps(response) + "\n").encode("utf-8"))
        writer.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lmdebunk-bridge",
        description="Serve causal-LM perplexity scoring over line-delimited JSON.",
    )
    parser.add_argument("--model", required=True,
                        help="model name or local directory (Hugging Face format)")
    parser.add_argument("--port", type=int, default=None,
                        help="serve TCP on this port instead of stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0,
                        help="RNG seed applied at every ground request")
    parser.add_argument("--max-length", type=int, default=256,
                        help="token budget per text, BOS included")
    args = parser.parse_args(argv)

    # session pulls in torch; skip that cost for --help and usage errors.
    from .session import CausalLmScorer

    scorer, load_error = None, None
    try:
        scorer = CausalLmScorer(args.model, device=args.device,
                                seed=args.seed, max_length=args.max_length)
    except Exception as exc:
        load_error = str(exc)
        print(f"model load failed, serving errors: {exc}", file=sys.stderr)

    if args.port is None:
        serve_stream(scorer, sys.stdin.buffer, sys.stdout.buffer, load_error)
        return 0
    server = socket.create_server((args.host, args.port))
    print(f"listening on {args.host}:{args.port}", file=sys.stderr)
    try:
        while True:
            conn, _ = server.accept()
            # One connection at a time; the scorer and its grounded
            # state outlive connections, reset is the only wipe.
            with conn, conn.makefile("rb") as reader, conn.makefile("wb") as writer:
                try:
                    serve_stream(scorer, reader, writer, load_error)
                except OSError:
                    pass
    except KeyboardInterrupt:
        return 0
    finally:
        server.close()


if __name__ == "__main__":
    sys.exit(main())
