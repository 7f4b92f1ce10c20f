"""The protocol server: line-delimited JSON over stdio or a TCP socket.

Requests are handled strictly in order, one response line per request line.
Malformed input produces an error payload and the session continues; only a
closed transport ends the loop.
"""

from __future__ import annotations

import json
import socket
import sys


def _error(message: str) -> str:
    return json.dumps({"error": message})


def _validate(request: dict) -> tuple[str, int, int, str, int] | str:
    """Extract and type-check the request fields; returns an error string on failure."""
    prompt = request.get("prompt", "")
    if not isinstance(prompt, str):
        return "invalid-request: prompt"
    n = request.get("n", 1)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        return "invalid-request: n"
    max_tokens = request.get("max_tokens", 32)
    if not isinstance(max_tokens, int) or isinstance(max_tokens, bool) or max_tokens < 1:
        return "invalid-request: max_tokens"
    mode = request.get("mode", "sample")
    if mode not in ("argmax", "sample"):
        return "invalid-request: mode"
    seed = request.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        return "invalid-request: seed"
    return prompt, n, max_tokens, mode, seed


def handle_line(adapter, line: str) -> str:
    """One request line to one response line; never raises on bad input."""
    line = line.strip()
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return _error("parse")
    if not isinstance(request, dict):
        return _error("invalid-request: not an object")
    fields = _validate(request)
    if isinstance(fields, str):
        return _error(fields)
    prompt, n, max_tokens, mode, seed = fields
    try:
        candidates = adapter.generate(prompt, n, max_tokens, mode, seed)
    except Exception as exc:  # adapter faults must not kill the session
        return _error(f"adapter: {exc}")
    if not isinstance(candidates, list) or not all(isinstance(c, str) for c in candidates):
        return _error("adapter: returned a non string-list")
    return json.dumps({"candidates": candidates[:n]})


def serve(adapter, in_stream, out_stream) -> int:
    """Serve until the input stream closes; returns the request count."""
    handled = 0
    for line in in_stream:
        if not line.strip():
            continue
        out_stream.write(handle_line(adapter, line) + "\n")
        out_stream.flush()
        handled += 1
    return handled


def serve_stdio(adapter) -> int:
    return serve(adapter, sys.stdin, sys.stdout)


def serve_tcp(adapter, port: int, host: str = "127.0.0.1", connections: int = 1) -> int:
    """Accept sequential connections and serve each until it closes."""
    handled = 0
    with socket.socket() as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(1)
        served = 0
        while connections <= 0 or served < connections:
            conn, _ = listener.accept()
            served += 1
            with conn:
                reader = conn.makefile("r", encoding="utf-8", newline="\n")
                writer = conn.makefile("w", encoding="utf-8", newline="\n")
                handled += serve(adapter, reader, writer)
    return handled
