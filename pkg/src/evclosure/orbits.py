"""Paraphrase maps, semantic orbits, and the partition machinery behind them.

An orbit partition groups sentences that share a referent. Built from a
reference map it is exact; built from rewrite rules and declared paraphrase
pairs it is a learned stand-in whose agreement with the reference can be
checked but is never assumed. Paraphrase maps themselves are permutations of
the language constrained to preserve reference, and a brute-force axiom
checker verifies they form a symmetry group.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .semantics import CapacityError, WorldModel
from .text import canon

GROUP_CHECK_BOUND = 10

_VAR_TOKEN = re.compile(r"^\?([a-zA-Z][a-zA-Z0-9_]*)$")


class UnionFind:
    """Mergeable-set forest with union by size and path compression."""

    def __init__(self):
        self.parent: dict[str, str] = {}
        self.size: dict[str, int] = {}

    def add(self, item: str) -> None:
        if item not in self.parent:
            self.parent[item] = item
            self.size[item] = 1

    def find(self, item: str) -> str:
        self.add(item)
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> str:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for item in self.parent:
            out.setdefault(self.find(item), []).append(item)
        return out


@dataclass(frozen=True)
class Orbit:
    """The block containing a queried sentence.

    `in_language` is False when the query was outside the partition domain;
    the orbit is then the singleton of the query itself.
    """

    members: tuple[str, ...]
    in_language: bool = True

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, item) -> bool:
        return canon(item) in self.members

    def __len__(self) -> int:
        return len(self.members)


class OrbitPartition:
    """Immutable partition of a sentence set into shared-referent blocks."""

    def __init__(self, blocks: dict[str, tuple[str, ...]], notes: tuple[str, ...] = ()):
        self._blocks = blocks
        self._index = {member: rep for rep, members in blocks.items() for member in members}
        self.notes = notes

    @classmethod
    def from_union_find(cls, uf: UnionFind, notes: tuple[str, ...] = ()) -> "OrbitPartition":
        blocks = {}
        for members in uf.groups().values():
            ordered = tuple(sorted(members))
            blocks[ordered[0]] = ordered
        return cls(blocks, notes=notes)

    @property
    def domain(self) -> frozenset[str]:
        return frozenset(self._index)

    def blocks(self) -> dict[str, tuple[str, ...]]:
        return dict(self._blocks)

    def orbit_of(self, sentence) -> Orbit:
        text = canon(sentence)
        rep = self._index.get(text)
        if rep is None:
            return Orbit(members=(text,), in_language=False)
        return Orbit(members=self._blocks[rep])

    def representative(self, sentence) -> str:
        text = canon(sentence)
        return self._index.get(text, text)

    def same_orbit(self, a, b) -> bool:
        return self.representative(a) == self.representative(b)

    def __len__(self) -> int:
        return len(self._blocks)


@dataclass(frozen=True)
class ClosureCaps:
    """Bounds on rule-driven closure so it always terminates."""

    max_depth: int = 3
    max_derived: int = 10_000


@dataclass(frozen=True)
class RewriteRule:
    """Token-template rewrite declared referent-preserving by its author.

    Templates are token sequences where `?name` matches one or more tokens
    (non-greedy, anchored to the whole sentence). Variables bound by the
    pattern are substituted into the replacement.
    """

    pattern: str
    replacement: str
    bidirectional: bool = True
    note: str = ""

    def __post_init__(self):
        pat_vars = {m.group(1) for t in self.pattern.split() if (m := _VAR_TOKEN.match(t))}
        rep_vars = {m.group(1) for t in self.replacement.split() if (m := _VAR_TOKEN.match(t))}
        unbound = rep_vars - pat_vars
        if unbound:
            raise ValueError(f"replacement uses unbound variables {sorted(unbound)}")
        if self.bidirectional:
            unbound_rev = pat_vars - rep_vars
            if unbound_rev:
                raise ValueError(
                    f"bidirectional rule drops variables {sorted(unbound_rev)}; reverse direction is not well-formed"
                )

    def apply(self, text: str) -> list[str]:
        """All rewrites of a canonical sentence under this rule (0, 1, or 2)."""
        out = []
        forward = _rewrite(text, self.pattern, self.replacement)
        if forward is not None:
            out.append(forward)
        if self.bidirectional:
            backward = _rewrite(text, self.replacement, self.pattern)
            if backward is not None and backward not in out:
                out.append(backward)
        return out


def _template_regex(template: str) -> re.Pattern:
    parts = []
    for token in canon(template).split():
        m = _VAR_TOKEN.match(token)
        if m:
            parts.append(f"(?P<{m.group(1)}>\\S+(?: \\S+)*?)")
        else:
            parts.append(re.escape(token))
    return re.compile("^" + " ".join(parts) + "$")


def _rewrite(text: str, pattern: str, replacement: str) -> str | None:
    m = _template_regex(pattern).match(text)
    if m is None:
        return None
    out_tokens = []
    for token in canon(replacement).split():
        var = _VAR_TOKEN.match(token)
        if var:
            out_tokens.append(m.group(var.group(1)))
        else:
            out_tokens.append(token)
    return " ".join(out_tokens)


@dataclass(frozen=True)
class ParaphrasePair:
    """An explicitly declared paraphrase pair.

    `valid` records the fixture author's ground-truth claim; pairs marked
    invalid are still merged (they model a learner that believes them), the
    flag exists so experiments can measure the damage.
    """

    a: str
    b: str
    valid: bool = True


def orbits_from_reference(world: WorldModel) -> OrbitPartition:
    """The exact partition: blocks are the preimages of the reference map."""
    by_state: dict[str, list[str]] = {}
    for text in world.language:
        by_state.setdefault(world.reference[text], []).append(text)
    blocks = {}
    for members in by_state.values():
        ordered = tuple(sorted(members))
        blocks[ordered[0]] = ordered
    return OrbitPartition(blocks)


def orbits_from_rules(
    language,
    rules=(),
    pairs=(),
    caps: ClosureCaps = ClosureCaps(),
) -> OrbitPartition:
    """Learned partition: closure of rule rewrites and declared pairs.

    Breadth-first from the language, applying every rule to every reachable
    string up to `caps.max_depth` rewrites and at most `caps.max_derived`
    strings beyond the language. Hitting a cap records a partial-closure note
    on the partition instead of truncating silently. Iteration is in sorted
    order throughout, so the result is deterministic for fixed inputs.
    """
    uf = UnionFind()
    known: set[str] = set()
    for sentence in sorted(canon(s) for s in language):
        uf.add(sentence)
        known.add(sentence)
    notes: list[str] = []
    derived = 0
    level = sorted(known)
    for depth in range(caps.max_depth):
        next_level: set[str] = set()
        for text in level:
            for rule in rules:
                for rewritten in rule.apply(text):
                    if rewritten == text:
                        continue
                    if rewritten not in known:
                        if derived >= caps.max_derived:
                            if f"derived-string cap {caps.max_derived} reached" not in notes:
                                notes.append(f"derived-string cap {caps.max_derived} reached")
                            continue
                        derived += 1
                        known.add(rewritten)
                        next_level.add(rewritten)
                    uf.union(text, rewritten)
        if not next_level:
            break
        level = sorted(next_level)
    else:
        # depth exhausted with an unexpanded frontier: warn only if expanding
        # it would actually add strings or merge blocks
        incomplete = False
        for text in level:
            for rule in rules:
                for rewritten in rule.apply(text):
                    if rewritten == text:
                        continue
                    if rewritten not in known or uf.find(rewritten) != uf.find(text):
                        incomplete = True
        if incomplete:
            notes.insert(0, f"depth cap {caps.max_depth} reached")
    injected = []
    for pair in pairs:
        a, b = canon(pair.a), canon(pair.b)
        uf.add(a)
        uf.add(b)
        uf.union(a, b)
        if not pair.valid:
            injected.append((a, b))
    for a, b in sorted(injected):
        notes.append(f"false-paraphrase pair merged: {a!r} <-> {b!r}")
    return OrbitPartition.from_union_find(uf, notes=tuple(notes))


def partition_matches_reference(partition: OrbitPartition, world: WorldModel) -> list[str]:
    """Check the learned-partition claim against a true reference map.

    Returns the list of violations: blocks containing strings with distinct
    referents (restricted to strings the world knows). Empty means the
    partition refines or equals the true one.
    """
    violations = []
    for rep, members in sorted(partition.blocks().items()):
        refs = {world.reference[m] for m in members if m in world.reference}
        if len(refs) > 1:
            violations.append(f"block of {rep!r} spans referents {sorted(refs)}")
    return violations


@dataclass(frozen=True)
class ParaphraseMap:
    """A candidate paraphrase map: a function on canonical sentence texts."""

    name: str
    mapping: dict[str, str]

    def __call__(self, text: str) -> str:
        return self.mapping[text]

    def compose(self, other: "ParaphraseMap") -> dict[str, str]:
        return {text: self.mapping[other.mapping[text]] for text in other.mapping}


@dataclass
class AxiomReport:
    """Outcome of brute-force group-axiom verification, with witnesses."""

    symmetry: bool = True
    referent_preserving: bool = True
    closed_under_composition: bool = True
    associative: bool = True
    has_identity: bool = True
    has_inverses: bool = True
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.symmetry
            and self.referent_preserving
            and self.closed_under_composition
            and self.associative
            and self.has_identity
            and self.has_inverses
        )


def verify_group_axioms(world: WorldModel, maps, bound: int = GROUP_CHECK_BOUND) -> AxiomReport:
    """Brute-force check that `maps` is a symmetry group of the language
    whose members all preserve reference.

    Each axiom failure is reported with a witness: the map (and string or
    pair of maps) on which it fails.
    """
    if len(world.language) > bound:
        raise CapacityError(f"|language| = {len(world.language)} exceeds group-check bound {bound}")
    report = AxiomReport()
    domain = set(world.language)
    table = {m.name: dict(m.mapping) for m in maps}

    for m in maps:
        if set(m.mapping) != domain or set(m.mapping.values()) != domain:
            report.symmetry = False
            report.failures.append(f"map {m.name!r} is not a permutation of the language")
            continue
        for text in sorted(domain):
            if world.reference[text] != world.reference[m.mapping[text]]:
                report.referent_preserving = False
                report.failures.append(
                    f"map {m.name!r} moves {text!r} across referents "
                    f"({world.reference[text]} -> {world.reference[m.mapping[text]]})"
                )
                break
    if not report.symmetry:
        return report

    def compose(f: dict[str, str], g: dict[str, str]) -> dict[str, str]:
        return {text: f[g[text]] for text in domain}

    def as_key(mapping: dict[str, str]):
        return tuple(sorted(mapping.items()))

    mappings = sorted(table.items())
    known = {as_key(mapping): name for name, mapping in mappings}

    for (na, a), (nb, b) in itertools.product(mappings, repeat=2):
        if as_key(compose(a, b)) not in known:
            report.closed_under_composition = False
            report.failures.append(f"composition {na!r} . {nb!r} is not in the set")

    for (na, a), (nb, b), (nc, c) in itertools.product(mappings, repeat=3):
        if compose(a, compose(b, c)) != compose(compose(a, b), c):
            report.associative = False
            report.failures.append(f"composition not associative on ({na!r}, {nb!r}, {nc!r})")
            break

    identity = {text: text for text in domain}
    if as_key(identity) not in known:
        report.has_identity = False
        report.failures.append("identity map is not in the set")

    for name, mapping in mappings:
        inverse = {v: k for k, v in mapping.items()}
        if as_key(inverse) not in known:
            report.has_inverses = False
            report.failures.append(f"map {name!r} has no inverse in the set")

    return report


def paraphrase_group(world: WorldModel, bound: int = GROUP_CHECK_BOUND) -> list[ParaphraseMap]:
    """Enumerate every referent-preserving permutation of the language.

    The group is the product of the symmetric groups on each referent class,
    so its size is the product of factorials of class sizes; the language
    bound keeps that enumerable.
    """
    if len(world.language) > bound:
        raise CapacityError(f"|language| = {len(world.language)} exceeds group-check bound {bound}")
    classes: dict[str, list[str]] = {}
    for text in world.language:
        classes.setdefault(world.reference[text], []).append(text)
    per_class = []
    for state in sorted(classes):
        members = sorted(classes[state])
        per_class.append([dict(zip(members, perm)) for perm in itertools.permutations(members)])
    maps = []
    for i, combo in enumerate(itertools.product(*per_class)):
        mapping: dict[str, str] = {}
        for piece in combo:
            mapping.update(piece)
        maps.append(ParaphraseMap(name=f"pi{i}", mapping=mapping))
    return maps


def load_rules(path) -> list[RewriteRule]:
    """Read rewrite rules from a JSON-lines file.

    Each line: {"pattern": ..., "replacement": ..., "bidirectional": true|false,
    "note": optional}.
    """
    rules = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            rules.append(
                RewriteRule(
                    pattern=str(entry["pattern"]),
                    replacement=str(entry["replacement"]),
                    bidirectional=bool(entry.get("bidirectional", True)),
                    note=str(entry.get("note", "")),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad rule line: {exc}") from exc
    return rules


def load_pairs(path) -> list[ParaphrasePair]:
    """Read declared paraphrase pairs from a JSON-lines file.

    Each line: {"a": ..., "b": ..., "valid": true|false}.
    """
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            pairs.append(
                ParaphrasePair(a=str(entry["a"]), b=str(entry["b"]), valid=bool(entry.get("valid", True)))
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad pair line: {exc}") from exc
    return pairs
