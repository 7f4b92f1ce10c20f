"""Model adapters behind the protocol server.

An adapter maps one generation request to a candidate list. The stubs are
deterministic given the request seed, so integration tests against the
server are reproducible.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Callable, Protocol


class Adapter(Protocol):
    def generate(self, prompt: str, n: int, max_tokens: int, mode: str, seed: int) -> list[str]:
        ...


class EchoAdapter:
    """Returns the prompt itself as the single candidate."""

    def generate(self, prompt: str, n: int, max_tokens: int, mode: str, seed: int) -> list[str]:
        return [prompt]


DEFAULT_FIXTURE = (
    "the sun is up",
    "the moon is out",
    "the tide is high",
)


class FixedListAdapter:
    """Serves a fixed candidate list, truncated to the requested n."""

    def __init__(self, candidates=DEFAULT_FIXTURE):
        self.candidates = list(candidates)

    @classmethod
    def from_file(cls, path) -> "FixedListAdapter":
        lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise ValueError(f"fixture file {path} has no candidates")
        return cls(lines)

    def generate(self, prompt: str, n: int, max_tokens: int, mode: str, seed: int) -> list[str]:
        return self.candidates[:n]


class SeededShuffleAdapter:
    """Fixed list in a seed-determined order; same seed, same answer."""

    def __init__(self, candidates=DEFAULT_FIXTURE):
        self.candidates = list(candidates)

    def generate(self, prompt: str, n: int, max_tokens: int, mode: str, seed: int) -> list[str]:
        ordered = list(self.candidates)
        if mode == "sample":
            random.Random(seed).shuffle(ordered)
        return ordered[:n]


class CallableAdapter:
    """Thin hook for attaching a real model client.

    Wraps any callable with the adapter signature, e.g. a closure around an
    LM SDK call. The server stays transport-only; all model concerns live in
    the callable.
    """

    def __init__(self, fn: Callable[[str, int, int, str, int], list[str]]):
        self.fn = fn

    def generate(self, prompt: str, n: int, max_tokens: int, mode: str, seed: int) -> list[str]:
        return self.fn(prompt, n, max_tokens, mode, seed)


def make_adapter(name: str, fixture_path=None) -> Adapter:
    if name == "echo":
        return EchoAdapter()
    if name == "fixed":
        if fixture_path:
            return FixedListAdapter.from_file(fixture_path)
        return FixedListAdapter()
    if name == "shuffle":
        if fixture_path:
            return SeededShuffleAdapter(FixedListAdapter.from_file(fixture_path).candidates)
        return SeededShuffleAdapter()
    raise ValueError(f"unknown adapter {name!r}; known: echo, fixed, shuffle")
