"""Finite interpreted languages: states, valuations, reference, truth, synonymy.

A world model bundles a finite language, a non-empty set of world states, a
family of structures (total 0/1 valuations over the states, one of them
designated as the structure describing the actual world), and a total
single-valued reference map from sentences to states. Truth of a sentence
under a structure is the structure's value at the sentence's referent; two
sentences are synonymous when every structure in the family values their
referents identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .text import canon

DESIGNATED_NAME = "s0"

STRUCTURE_ENUM_BOUND = 20


class DomainError(ValueError):
    """An operation was applied outside its declared domain."""


class CapacityError(RuntimeError):
    """A brute-force enumeration would exceed its configured bound."""


class InvalidWorldError(ValueError):
    """A world model violates one of its structural invariants."""


@dataclass(frozen=True)
class Structure:
    """A named total valuation over world states."""

    name: str
    valuation: dict[str, int]

    def value(self, state: str) -> int:
        try:
            return self.valuation[state]
        except KeyError:
            raise DomainError(f"structure {self.name!r} has no value for state {state!r}") from None


@dataclass(frozen=True)
class WorldModel:
    """Language, states, structure family, and reference map, validated together.

    - `language` holds canonical sentence texts, sorted.
    - `reference` is total over the language and single-valued.
    - every structure's valuation is total over `states`.
    - exactly one structure carries the designated name (default "s0"),
      playing the role of the structure that describes the actual world.
    """

    states: tuple[str, ...]
    structures: tuple[Structure, ...]
    reference: dict[str, str]
    language: tuple[str, ...] = field(default=())
    designated: str = DESIGNATED_NAME

    def __post_init__(self):
        if not self.states:
            raise InvalidWorldError("state space must be non-empty")
        if len(set(self.states)) != len(self.states):
            raise InvalidWorldError("state ids must be unique")
        state_set = set(self.states)
        named = [s for s in self.structures if s.name == self.designated]
        if len(named) != 1:
            raise InvalidWorldError(
                f"exactly one structure must be named {self.designated!r}, found {len(named)}"
            )
        for s in self.structures:
            missing = state_set - set(s.valuation)
            if missing:
                raise InvalidWorldError(
                    f"structure {s.name!r} is not total: missing {sorted(missing)}"
                )
            bad = [v for v in s.valuation.values() if v not in (0, 1)]
            if bad:
                raise InvalidWorldError(f"structure {s.name!r} has non-bit values {bad[:3]}")
        reference = {}
        for text, state in self.reference.items():
            key = canon(text)
            if key in reference and reference[key] != state:
                raise InvalidWorldError(
                    f"strings normalizing to {key!r} map to different states; reference must be single-valued"
                )
            reference[key] = state
        object.__setattr__(self, "reference", reference)
        lang = tuple(sorted({canon(t) for t in self.language} or set(reference)))
        object.__setattr__(self, "language", lang)
        for text in self.language:
            if text not in self.reference:
                raise InvalidWorldError(f"reference map is not total: missing {text!r}")
            if self.reference[text] not in state_set:
                raise InvalidWorldError(
                    f"reference of {text!r} is {self.reference[text]!r}, not a known state"
                )
        extra = set(self.reference) - set(self.language)
        if extra:
            raise InvalidWorldError(f"reference map covers strings outside the language: {sorted(extra)[:3]}")

    def structure(self, name: str) -> Structure:
        for s in self.structures:
            if s.name == name:
                return s
        raise DomainError(f"unknown structure {name!r}")

    @property
    def v0(self) -> Structure:
        return self.structure(self.designated)

    def referent(self, sentence) -> str:
        text = canon(sentence)
        try:
            return self.reference[text]
        except KeyError:
            raise DomainError(f"string not in language: {text!r}") from None

    def has_full_structure_family(self) -> bool:
        """True when the structure family is the full 2^|states| enumeration."""
        if len(self.structures) != 2 ** len(self.states):
            return False
        seen = {tuple(sorted(s.valuation.items())) for s in self.structures}
        return len(seen) == len(self.structures)


def evaluate_truth(world: WorldModel, structure, sentence) -> int:
    """Truth of a sentence under a structure: the valuation at its referent."""
    if isinstance(structure, Structure):
        if all(s is not structure and s != structure for s in world.structures):
            raise DomainError(f"structure {structure.name!r} is not part of this world")
        s = structure
    else:
        s = world.structure(structure)
    return s.value(world.referent(sentence))


def are_synonymous(world: WorldModel, first, second) -> int:
    """1 iff every structure in the family values the two referents identically.

    Over the full structure family this is equivalent to sharing a referent;
    over a partial family it is synonymy relative to the given structures only.
    """
    a = world.referent(first)
    b = world.referent(second)
    for s in world.structures:
        if s.value(a) != s.value(b):
            return 0
    return 1


def enumerate_structures(states, bound: int = STRUCTURE_ENUM_BOUND) -> tuple[Structure, ...]:
    """Materialize all 2^|states| valuations, for brute-force checks.

    Structure i assigns state j the j-th bit of i over the sorted state
    order; names are "e0" .. "e{2^n-1}".
    """
    ordered = sorted(states)
    if not ordered:
        raise DomainError("state space must be non-empty")
    if len(set(ordered)) != len(ordered):
        raise InvalidWorldError("state ids must be unique")
    if len(ordered) > bound:
        raise CapacityError(f"{len(ordered)} states exceeds enumeration bound {bound}")
    out = []
    for i in range(2 ** len(ordered)):
        valuation = {state: (i >> j) & 1 for j, state in enumerate(ordered)}
        out.append(Structure(name=f"e{i}", valuation=valuation))
    return tuple(out)


def load_world(path) -> WorldModel:
    """Load a world model from its JSON file format.

    Expected shape: {"states": [...], "structures": [{"name":..., "valuation":
    {state: 0|1}}, ...], "reference": {string: state}, "language": [strings]}.
    Strings are normalized on load; the structure named "s0" is required.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("states", "structures", "reference"):
        if key not in raw:
            raise InvalidWorldError(f"world file missing {key!r}")
    structures = []
    for entry in raw["structures"]:
        valuation = {str(k): int(v) for k, v in entry["valuation"].items()}
        structures.append(Structure(name=str(entry["name"]), valuation=valuation))
    reference = {str(text): str(state) for text, state in raw["reference"].items()}
    language = tuple({canon(t) for t in raw.get("language", [])} | {canon(t) for t in reference})
    return WorldModel(
        states=tuple(str(s) for s in raw["states"]),
        structures=tuple(structures),
        reference=reference,
        language=language,
        designated=str(raw.get("designated", DESIGNATED_NAME)),
    )


def save_world(world: WorldModel, path) -> None:
    payload = {
        "states": list(world.states),
        "structures": [
            {"name": s.name, "valuation": {k: s.valuation[k] for k in sorted(s.valuation)}}
            for s in world.structures
        ],
        "reference": {text: world.reference[text] for text in world.language},
        "language": list(world.language),
        "designated": world.designated,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
