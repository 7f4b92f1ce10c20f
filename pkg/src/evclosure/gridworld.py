"""Simulated perceptual and extensional learners over a synthetic grid world.

Each atomic fact is a (cell, object) proposition with its own state id. A
perceptual pass reads every fact either exactly (oracle) or through
independent per-fact bit flips (noisy). A template renderer is the
extensional map: it turns each state into one canonical sentence, so the
sentence stream downstream is grounded in readings by construction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .evidence import LabeledString
from .semantics import DomainError
from .text import Sentence

DEFAULT_TEMPLATE = "there is a {obj} at cell {x} {y}"


class TemplateError(ValueError):
    """A state cannot be rendered because no template covers it."""


def state_id(x: int, y: int, obj: str) -> str:
    return f"cell-{x}-{y}-{obj}"


def parse_state_id(state: str) -> tuple[int, int, str]:
    parts = state.split("-", 3)
    if len(parts) != 4 or parts[0] != "cell":
        raise DomainError(f"not a grid state id: {state!r}")
    return int(parts[1]), int(parts[2]), parts[3]


@dataclass(frozen=True)
class GridWorld:
    """Ground truth: a total 0/1 assignment over cell-object propositions."""

    width: int
    height: int
    vocabulary: tuple[str, ...]
    facts: dict[str, int]
    seed: int | None = None

    def states(self) -> tuple[str, ...]:
        return tuple(
            state_id(x, y, obj)
            for x in range(self.width)
            for y in range(self.height)
            for obj in self.vocabulary
        )


def generate_world(width: int, height: int, vocabulary, density: float, seed: int) -> GridWorld:
    """Deterministically sample a world: each fact true with probability `density`."""
    if width <= 0 or height <= 0 or not vocabulary:
        raise DomainError("grid must have at least one cell and one object kind")
    if not 0.0 <= density <= 1.0:
        raise DomainError(f"density must be in [0, 1], got {density}")
    vocab = tuple(vocabulary)
    rng = random.Random(seed)
    facts = {}
    for x in range(width):
        for y in range(height):
            for obj in vocab:
                facts[state_id(x, y, obj)] = 1 if rng.random() < density else 0
    return GridWorld(width=width, height=height, vocabulary=vocab, facts=facts, seed=seed)


@dataclass(frozen=True)
class PerceptualReading:
    """One sensor reading of one fact."""

    state: str
    observed: int
    mode: str
    epsilon: float = 0.0


def perceive(world: GridWorld, mode: str = "oracle", epsilon: float = 0.0, seed: int = 0) -> list[PerceptualReading]:
    """Read every fact once; oracle readings equal ground truth exactly.

    In noisy mode each reading flips independently with probability epsilon,
    driven by the seed, so a run can be replayed bit for bit.
    """
    if mode not in ("oracle", "noisy"):
        raise DomainError(f"unknown perception mode {mode!r}")
    if mode == "noisy" and not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must be in [0, 1), got {epsilon}")
    rng = random.Random(seed)
    readings = []
    for state in world.states():
        truth = world.facts[state]
        if mode == "noisy":
            observed = 1 - truth if rng.random() < epsilon else truth
            readings.append(PerceptualReading(state=state, observed=observed, mode="noisy", epsilon=epsilon))
        else:
            readings.append(PerceptualReading(state=state, observed=truth, mode="oracle"))
    return readings


@dataclass(frozen=True)
class TemplateRenderer:
    """Extensional map from grid states to canonical sentences.

    `templates` overrides the default per object kind; placeholders are
    {obj}, {x}, {y}. Rendering must be injective per state, which the
    default template guarantees.
    """

    templates: dict[str, str] = field(default_factory=dict)
    default_template: str | None = DEFAULT_TEMPLATE

    def render(self, state: str) -> Sentence:
        x, y, obj = parse_state_id(state)
        template = self.templates.get(obj, self.default_template)
        if template is None:
            raise TemplateError(f"no template for state {state!r}")
        return Sentence.of(template.format(obj=obj, x=x, y=y))


def render_source(readings, renderer: TemplateRenderer) -> list[LabeledString]:
    """Turn readings into the canonical source sentences with observed labels.

    Every state yields exactly one sentence; the label is the observed bit.
    A template collision (two states rendering to the same sentence) breaks
    the extensional map and is an error.
    """
    out = []
    rendered: dict[str, str] = {}
    for reading in readings:
        sentence = renderer.render(reading.state)
        prior = rendered.get(sentence.text)
        if prior is not None and prior != reading.state:
            raise TemplateError(
                f"states {prior!r} and {reading.state!r} both render to {sentence.text!r}"
            )
        rendered[sentence.text] = reading.state
        out.append(LabeledString(sentence=sentence, label=reading.observed))
    return out


def source_reference(world: GridWorld, renderer: TemplateRenderer) -> dict[str, str]:
    """The reference map over the canonical source language: text -> state."""
    reference = {}
    for state in world.states():
        text = renderer.render(state).text
        if text in reference:
            raise TemplateError(f"states {reference[text]!r} and {state!r} both render to {text!r}")
        reference[text] = state
    return reference


def load_world_spec(path) -> GridWorld:
    """Build a world from its JSON spec: dimensions, vocabulary, density, seed."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("width", "height", "vocabulary", "density", "seed"):
        if key not in raw:
            raise DomainError(f"world spec missing {key!r}")
    return generate_world(
        width=int(raw["width"]),
        height=int(raw["height"]),
        vocabulary=[str(v) for v in raw["vocabulary"]],
        density=float(raw["density"]),
        seed=int(raw["seed"]),
    )


def world_from_spec(spec: dict) -> GridWorld:
    return generate_world(
        width=int(spec["width"]),
        height=int(spec["height"]),
        vocabulary=[str(v) for v in spec["vocabulary"]],
        density=float(spec["density"]),
        seed=int(spec["seed"]),
    )


def dump_readings(readings, path) -> None:
    """Write readings as JSON lines for replay."""
    lines = [
        json.dumps(
            {"epsilon": r.epsilon, "mode": r.mode, "observed": r.observed, "state": r.state},
            sort_keys=True,
        )
        for r in readings
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_readings(path) -> list[PerceptualReading]:
    readings = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            readings.append(
                PerceptualReading(
                    state=str(entry["state"]),
                    observed=int(entry["observed"]),
                    mode=str(entry["mode"]),
                    epsilon=float(entry.get("epsilon", 0.0)),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"{path}:{lineno}: bad readings line: {exc}") from exc
    return readings
