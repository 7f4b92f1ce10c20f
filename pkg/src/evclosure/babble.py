"""The unconstrained candidate generator and its plug-in protocol client.

The internal model is an order-k Markov chain over normalized tokens with
additive smoothing, so it can emit sentences it never saw; that reachability
of novel (and possibly false) strings is the point, the pipeline's prune
stage is what filters them. External generators speak a one-line-JSON
request/response protocol over process pipes or a TCP socket.
"""

from __future__ import annotations

import json
import math
import os
import queue
import random
import shlex
import socket
import subprocess
import threading
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field

from .text import canon, normalize_tokens

START = "<s>"
END = "</s>"

DEADLINE_ENV = "EVCLOSURE_GENERATOR_DEADLINE"
DEFAULT_DEADLINE = 30.0


class GeneratorError(RuntimeError):
    """The external generator broke the protocol, errored, or timed out."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str = ""
    num_candidates: int = 1
    max_tokens: int = 32
    mode: str = "sample"
    seed: int = 0
    top_k: int | None = None

    def __post_init__(self):
        if self.num_candidates < 1 or self.max_tokens < 1:
            raise ValueError("num_candidates and max_tokens must be positive")
        if self.mode not in ("argmax", "sample"):
            raise ValueError(f"mode must be 'argmax' or 'sample', got {self.mode!r}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be positive when given")


@dataclass
class NgramModel:
    """Order-k token model with additive smoothing.

    `vocab` is the prediction vocabulary: every corpus token plus the end
    marker, sorted; the start marker is context-only and never predicted.
    For a context with total count T, P(t | ctx) = (count + alpha) /
    (T + alpha * |vocab|).
    """

    order: int
    alpha: float
    vocab: tuple[str, ...]
    counts: dict[tuple, Counter]
    context_totals: dict[tuple, int]
    _cums: dict[tuple, tuple[list[str], list[int]]] = field(default_factory=dict, repr=False)

    def probability(self, token: str, context) -> float:
        ctx = self._clip(context)
        count = self.counts.get(ctx, _EMPTY).get(token, 0)
        total = self.context_totals.get(ctx, 0)
        return (count + self.alpha) / (total + self.alpha * len(self.vocab))

    def distribution(self, context) -> dict[str, float]:
        """Full smoothed next-token distribution for a context."""
        ctx = self._clip(context)
        seen = self.counts.get(ctx, _EMPTY)
        total = self.context_totals.get(ctx, 0)
        denom = total + self.alpha * len(self.vocab)
        return {t: (seen.get(t, 0) + self.alpha) / denom for t in self.vocab}

    def _clip(self, context) -> tuple:
        ctx = tuple(context)
        if len(ctx) > self.order - 1:
            ctx = ctx[len(ctx) - (self.order - 1):]
        return ctx

    def _cumulative(self, ctx: tuple) -> tuple[list[str], list[int]]:
        cached = self._cums.get(ctx)
        if cached is None:
            items = sorted(self.counts[ctx].items())
            tokens = [t for t, _ in items]
            cums = []
            running = 0
            for _, c in items:
                running += c
                cums.append(running)
            cached = (tokens, cums)
            self._cums[ctx] = cached
        return cached


_EMPTY: Counter = Counter()


def train(corpus, order: int, alpha: float = 0.1) -> NgramModel:
    """Count order-k transitions over the normalized corpus.

    Every sentence is padded with start markers and one end marker, so
    sentence boundaries are part of the model. Deterministic: counts
    reflect the corpus exactly.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0 so novel strings stay reachable")
    sentences = [normalize_tokens(canon(s)) for s in corpus]
    if not sentences:
        raise ValueError("empty corpus")
    counts: dict[tuple, Counter] = {}
    totals: dict[tuple, int] = {}
    vocab: set[str] = {END}
    for tokens in sentences:
        vocab.update(tokens)
        seq = (START,) * (order - 1) + tokens + (END,)
        for i in range(order - 1, len(seq)):
            ctx = seq[i - order + 1:i]
            counts.setdefault(ctx, Counter())[seq[i]] += 1
            totals[ctx] = totals.get(ctx, 0) + 1
    return NgramModel(
        order=order,
        alpha=alpha,
        vocab=tuple(sorted(vocab)),
        counts=counts,
        context_totals=totals,
    )


def _argmax_token(model: NgramModel, ctx: tuple) -> str:
    seen = model.counts.get(ctx)
    if not seen:
        return model.vocab[0]
    best_count = max(seen.values())
    best = min(t for t, c in seen.items() if c == best_count)
    # any observed token beats every unseen one (count + alpha > alpha)
    return best


def _sample_token(model: NgramModel, ctx: tuple, rng: random.Random, top_k: int | None) -> str:
    if top_k is not None:
        dist = sorted(model.distribution(ctx).items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
        total = sum(p for _, p in dist)
        u = rng.random() * total
        running = 0.0
        for token, p in dist:
            running += p
            if u < running:
                return token
        return dist[-1][0]
    total = model.context_totals.get(ctx, 0)
    denom = total + model.alpha * len(model.vocab)
    u = rng.random() * denom
    if u < total:
        tokens, cums = model._cumulative(ctx)
        return tokens[bisect_right(cums, u)]
    # smoothing mass: uniform over the vocabulary
    return model.vocab[rng.randrange(len(model.vocab))]


def _generate_one(model: NgramModel, prompt_tokens, max_tokens: int, mode: str,
                  rng: random.Random | None, top_k: int | None) -> str:
    history = [START] * (model.order - 1) + list(prompt_tokens)
    out: list[str] = []
    for _ in range(max_tokens):
        ctx = model._clip(history)
        token = _argmax_token(model, ctx) if mode == "argmax" else _sample_token(model, ctx, rng, top_k)
        if token == END:
            break
        out.append(token)
        history.append(token)
    return " ".join(out)


def babble(model: NgramModel, request: GenerationRequest) -> list[str]:
    """Generate candidate sentences, unconstrained by truth.

    The context window is seeded with the prompt's tokens. Argmax decoding
    is deterministic with lexicographic tie-breaks and returns a single
    candidate; sampling is reproducible from the request seed.
    """
    prompt_tokens = normalize_tokens(request.prompt)
    if request.mode == "argmax":
        return [_generate_one(model, prompt_tokens, request.max_tokens, "argmax", None, None)]
    rng = random.Random(request.seed)
    return [
        _generate_one(model, prompt_tokens, request.max_tokens, "sample", rng, request.top_k)
        for _ in range(request.num_candidates)
    ]


def sentence_logprob(model: NgramModel, sentence) -> float:
    """Natural-log probability of a sentence, end marker included."""
    tokens = normalize_tokens(canon(sentence))
    seq = (START,) * (model.order - 1) + tokens + (END,)
    logp = 0.0
    for i in range(model.order - 1, len(seq)):
        logp += math.log(model.probability(seq[i], seq[i - model.order + 1:i]))
    return logp


def perplexity(model: NgramModel, corpus) -> float:
    """Per-token perplexity of the corpus under the model."""
    total_logp = 0.0
    transitions = 0
    for sentence in corpus:
        tokens = normalize_tokens(canon(sentence))
        total_logp += sentence_logprob(model, sentence)
        transitions += len(tokens) + 1
    if transitions == 0:
        raise ValueError("empty corpus")
    return math.exp(-total_logp / transitions)


def _wire_request(request: GenerationRequest) -> str:
    payload = {
        "prompt": request.prompt,
        "n": request.num_candidates,
        "max_tokens": request.max_tokens,
        "mode": request.mode,
        "seed": request.seed,
    }
    return json.dumps(payload, sort_keys=True)


def default_deadline() -> float:
    raw = os.environ.get(DEADLINE_ENV)
    if raw is None:
        return DEFAULT_DEADLINE
    try:
        return float(raw)
    except ValueError:
        raise GeneratorError(f"{DEADLINE_ENV} must be a number, got {raw!r}") from None


class ExternalGenerator:
    """Client for the generator wire protocol, one request in flight at a time.

    Addresses: "cmd:<command line>" spawns a subprocess and talks over its
    pipes; "tcp:<host>:<port>" connects a socket. Responses are read by a
    background thread so the deadline is enforced even on a wedged peer.
    """

    def __init__(self, write_line, read_queue: queue.Queue, deadline: float, closer):
        self._write_line = write_line
        self._queue = read_queue
        self.deadline = deadline
        self._closer = closer
        self._closed = False

    @classmethod
    def from_address(cls, address: str, deadline: float | None = None) -> "ExternalGenerator":
        if deadline is None:
            deadline = default_deadline()
        if address.startswith("cmd:"):
            return cls.spawn(shlex.split(address[len("cmd:"):]), deadline=deadline)
        if address.startswith("tcp:"):
            host, _, port = address[len("tcp:"):].rpartition(":")
            if not host or not port.isdigit():
                raise GeneratorError(f"bad tcp address {address!r}; expected tcp:host:port")
            return cls.connect(host, int(port), deadline=deadline)
        raise GeneratorError(f"unknown generator address {address!r}; expected cmd:... or tcp:host:port")

    @classmethod
    def spawn(cls, argv, deadline: float | None = None) -> "ExternalGenerator":
        if deadline is None:
            deadline = default_deadline()
        try:
            proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise GeneratorError(f"cannot spawn generator {argv!r}: {exc}") from exc
        q = _reader_queue(proc.stdout)

        def write_line(line: str):
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise GeneratorError(f"generator process closed its input: {exc}") from exc

        def closer():
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.terminate()
                proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                proc.kill()

        return cls(write_line, q, deadline, closer)

    @classmethod
    def connect(cls, host: str, port: int, deadline: float | None = None) -> "ExternalGenerator":
        if deadline is None:
            deadline = default_deadline()
        try:
            sock = socket.create_connection((host, port), timeout=deadline)
        except OSError as exc:
            raise GeneratorError(f"cannot connect to generator at {host}:{port}: {exc}") from exc
        reader = sock.makefile("r", encoding="utf-8", newline="\n")
        q = _reader_queue(reader)

        def write_line(line: str):
            try:
                sock.sendall((line + "\n").encode("utf-8"))
            except OSError as exc:
                raise GeneratorError(f"generator socket closed: {exc}") from exc

        def closer():
            try:
                sock.close()
            except OSError:
                pass

        return cls(write_line, q, deadline, closer)

    def generate(self, request: GenerationRequest) -> list[str]:
        """One request, one response line; candidates normalized on receipt."""
        if self._closed:
            raise GeneratorError("generator channel already closed")
        self._write_line(_wire_request(request))
        try:
            line = self._queue.get(timeout=self.deadline)
        except queue.Empty:
            raise GeneratorError(f"no response within {self.deadline}s deadline") from None
        if line is None:
            raise GeneratorError("generator closed the stream")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GeneratorError(f"response is not valid JSON: {line!r}") from exc
        if not isinstance(payload, dict):
            raise GeneratorError(f"response is not an object: {line!r}")
        if "error" in payload:
            raise GeneratorError(f"generator reported an error: {payload['error']}")
        candidates = payload.get("candidates")
        if not isinstance(candidates, list) or not all(isinstance(c, str) for c in candidates):
            raise GeneratorError(f"response lacks a string candidate list: {line!r}")
        if len(candidates) > request.num_candidates:
            raise GeneratorError(
                f"generator returned {len(candidates)} candidates for n={request.num_candidates}"
            )
        return [canon(c) for c in candidates]

    def close(self):
        if not self._closed:
            self._closed = True
            self._closer()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _reader_queue(stream) -> queue.Queue:
    q: queue.Queue = queue.Queue()

    def pump():
        try:
            for line in stream:
                q.put(line.rstrip("\n"))
        except (OSError, ValueError):
            pass
        q.put(None)

    threading.Thread(target=pump, daemon=True).start()
    return q


def babble_external(endpoint, request: GenerationRequest) -> list[str]:
    """Run the babble phase against an external generator.

    `endpoint` is an open ExternalGenerator or an address string; an
    address is opened for the single request and closed again.
    """
    if isinstance(endpoint, ExternalGenerator):
        return endpoint.generate(request)
    with ExternalGenerator.from_address(endpoint) as gen:
        return gen.generate(request)
