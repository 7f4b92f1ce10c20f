"""Brute-force verification of the engine's defining identities on small instances.

Every check here is exhaustive over its declared bounds: witnesses are
constructed, then re-checked against their defining inequalities before they
are reported, so a returned witness is self-validating. Randomized fixtures
are seed-driven and bounded so full structure enumeration and all-pairs
scans stay fast.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .babble import NgramModel, GenerationRequest, babble, sentence_logprob
from .evidence import LabeledString, build_evidence
from .orbits import ParaphraseMap, orbits_from_reference, paraphrase_group, verify_group_axioms
from .semantics import CapacityError, DomainError, Structure, WorldModel
from .text import Sentence, canon

MAX_STATES = 12
MAX_LANGUAGE = 64
IDENTITY_TOLERANCE = 1e-9
MASS_TOLERANCE = 1e-12
KL_EPSILON = 0.01


class WitnessError(RuntimeError):
    """A constructed witness failed its own defining inequalities."""


@dataclass(frozen=True)
class DistributionTable:
    """Explicit probability table over sentence strings."""

    mass: dict[str, float]

    def __post_init__(self):
        if not self.mass:
            raise ValueError("distribution table needs non-empty support")
        if any(p < 0 for p in self.mass.values()):
            raise ValueError("probabilities must be non-negative")
        total = sum(self.mass.values())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @classmethod
    def from_model(cls, model: NgramModel, language) -> "DistributionTable":
        scores = {canon(l): math.exp(sentence_logprob(model, l)) for l in language}
        total = sum(scores.values())
        return cls({text: p / total for text, p in scores.items()})

    def argmax(self) -> str:
        best = max(self.mass.values())
        return min(t for t, p in self.mass.items() if p == best)

    def conditioned(self, allowed) -> "DistributionTable | None":
        """Restrict to `allowed` and renormalize; None when no mass remains."""
        kept = {t: p for t, p in self.mass.items() if t in allowed}
        total = sum(kept.values())
        if total == 0:
            return None
        return DistributionTable({t: p / total for t, p in kept.items()})

    def kl(self, other: "DistributionTable") -> float:
        out = 0.0
        for text, p in self.mass.items():
            if p == 0:
                continue
            q = other.mass.get(text, 0.0)
            if q == 0:
                return math.inf
            out += p * math.log(p / q)
        return out


@dataclass(frozen=True)
class CheckInstance:
    """A finite world, corpus, prompt, and generator, small enough to enumerate."""

    world: WorldModel
    corpus: tuple[str, ...] = ()
    prompt: str = ""
    generator: object = None

    def __post_init__(self):
        if len(self.world.states) > MAX_STATES:
            raise CapacityError(f"|states| = {len(self.world.states)} exceeds {MAX_STATES}")
        if len(self.world.language) > MAX_LANGUAGE:
            raise CapacityError(f"|language| = {len(self.world.language)} exceeds {MAX_LANGUAGE}")


def _generator_argmax(instance: CheckInstance) -> str:
    gen = instance.generator
    if isinstance(gen, DistributionTable):
        return gen.argmax()
    if isinstance(gen, NgramModel):
        return babble(gen, GenerationRequest(prompt=instance.prompt, mode="argmax"))[0]
    raise DomainError("instance has no usable generator")


@dataclass(frozen=True)
class NonfactualityWitness:
    """Structures s, s' disagreeing on the argmax output's referent."""

    output: str
    referent: str
    s_true: Structure
    s_false: Structure

    def validate(self) -> None:
        if self.s_true.value(self.referent) != 1:
            raise WitnessError(f"{self.s_true.name} does not make {self.output!r} true")
        if self.s_false.value(self.referent) != 0:
            raise WitnessError(f"{self.s_false.name} does not make {self.output!r} false")


def check_nonfactuality(instance: CheckInstance) -> NonfactualityWitness:
    """Exhibit two structures between which the generator cannot distinguish.

    The generator's argmax is fixed by corpus and prompt alone, yet one of
    the returned structures makes it true and the other makes it false. When
    the designated structure itself falsifies the output, it is returned as
    the falsifying side.
    """
    output = _generator_argmax(instance)
    referent = instance.world.referent(output)
    v0 = instance.world.v0
    if v0.value(referent) == 1:
        s_true = v0
        s_false = Structure(name="flip0", valuation={**v0.valuation, referent: 0})
    else:
        s_true = Structure(name="flip1", valuation={**v0.valuation, referent: 1})
        s_false = v0
    witness = NonfactualityWitness(output=output, referent=referent, s_true=s_true, s_false=s_false)
    witness.validate()
    return witness


@dataclass(frozen=True)
class CorpusWitness:
    """A novel-referent output plus structures agreeing on the whole corpus."""

    found: bool
    output: str | None = None
    referent: str | None = None
    corpus_referents: tuple[str, ...] = ()
    s_true: Structure | None = None
    s_false: Structure | None = None
    reason: str = ""

    def validate(self) -> None:
        if not self.found:
            return
        if self.referent in self.corpus_referents:
            raise WitnessError("witness output's referent is covered by the corpus")
        for ref in self.corpus_referents:
            if self.s_true.value(ref) != 1 or self.s_false.value(ref) != 1:
                raise WitnessError(f"witness structures disagree with the verified corpus at {ref}")
        if self.s_true.value(self.referent) != 1 or self.s_false.value(self.referent) != 0:
            raise WitnessError("witness structures do not disagree on the output's referent")


def check_verified_corpus_insufficient(instance: CheckInstance) -> CorpusWitness:
    """Even with an all-true corpus, a novel-referent output can be false.

    Finds the generator's best string whose referent no corpus string covers,
    then builds two structures that agree with the corpus everywhere but
    disagree on that referent. Degenerate instances (corpus referents cover
    the language) report found=False rather than failing.
    """
    world = instance.world
    v0 = world.v0
    for text in instance.corpus:
        if v0.value(world.referent(text)) != 1:
            raise DomainError(f"corpus string {text!r} is not true under the designated structure")
    covered = {world.referent(text) for text in instance.corpus}
    novel = [text for text in world.language if world.reference[text] not in covered]
    if not novel:
        return CorpusWitness(found=False, corpus_referents=tuple(sorted(covered)),
                             reason="corpus referents cover every string in the language")
    gen = instance.generator
    if isinstance(gen, DistributionTable):
        top = max(gen.mass.get(t, 0.0) for t in novel)
        best = min(t for t in novel if gen.mass.get(t, 0.0) == top)
    elif isinstance(gen, NgramModel):
        scores = {t: sentence_logprob(gen, t) for t in novel}
        top = max(scores.values())
        best = min(t for t, s in scores.items() if s == top)
    else:
        best = novel[0]
    referent = world.reference[best]
    s_true = Structure(name="agree1", valuation={**v0.valuation, referent: 1})
    s_false = Structure(name="agree0", valuation={**v0.valuation, referent: 0})
    witness = CorpusWitness(
        found=True,
        output=best,
        referent=referent,
        corpus_referents=tuple(sorted(covered)),
        s_true=s_true,
        s_false=s_false,
    )
    witness.validate()
    return witness


@dataclass(frozen=True)
class IdentityReport:
    """Agreement of the filtered, orbit-sum, and state-sum distributions."""

    ok: bool
    degenerate: bool
    max_deviation: float
    worst_string: str | None
    deviation_unnormalized: float
    deviation_conditional: float | None
    notes: tuple[str, ...] = ()


def check_decompositions(instance: CheckInstance, tol: float = IDENTITY_TOLERANCE,
                         state_labels: dict[str, int] | None = None) -> IdentityReport:
    """Cross-check three routes to the evidence-constrained distribution.

    Route A filters the generator through evidence-set membership (the
    artifact's own machinery). Route B sums over orbits, route C over orbits
    and states, both as literal double loops; the three must agree pointwise.
    The unnormalized product form and the renormalized conditional form are
    both reported, since they are distinct readings of the same identity.
    An empty constraint set yields the zero distribution and is flagged
    degenerate instead of being silently compared.
    """
    world = instance.world
    if isinstance(instance.generator, DistributionTable):
        table = instance.generator
    elif isinstance(instance.generator, NgramModel):
        table = DistributionTable.from_model(instance.generator, world.language)
    else:
        raise DomainError("instance has no usable generator")
    if set(table.mass) != set(world.language):
        raise DomainError("generator support must equal the world language")

    labels = dict(state_labels) if state_labels is not None else dict(world.v0.valuation)
    partition = orbits_from_reference(world)
    labeled = [LabeledString(sentence=Sentence.of(t), label=labels[world.reference[t]])
               for t in world.language]
    evidence = build_evidence(labeled, partition, valuation_source="oracle")

    blocks = partition.blocks()
    orbit_referent = {rep: world.reference[rep] for rep in blocks}

    filtered = {t: table.mass[t] * (1 if t in evidence else 0) for t in world.language}
    orbit_sum = {}
    state_sum = {}
    for t in world.language:
        total_b = 0.0
        total_c = 0.0
        for rep, members in blocks.items():
            member_hit = 1 if t in members else 0
            total_b += table.mass[t] * member_hit * labels[orbit_referent[rep]]
            for state in world.states:
                extensional_hit = 1 if orbit_referent[rep] == state else 0
                total_c += table.mass[t] * member_hit * extensional_hit * labels[state]
        orbit_sum[t] = total_b
        state_sum[t] = total_c

    worst: str | None = None
    dev_unnorm = 0.0
    for t in world.language:
        d = max(abs(filtered[t] - orbit_sum[t]), abs(filtered[t] - state_sum[t]))
        if d > dev_unnorm:
            dev_unnorm = d
            worst = t

    mass_z = sum(filtered.values())
    degenerate = mass_z == 0.0
    dev_cond: float | None = None
    notes: list[str] = []
    if degenerate:
        notes.append("constraint set is empty: filtered distribution is identically zero")
    else:
        conditional = table.conditioned(evidence.members)
        for t in world.language:
            direct = conditional.mass.get(t, 0.0)
            d = abs(filtered[t] / mass_z - direct)
            if dev_cond is None or d > dev_cond:
                dev_cond = d
                if d >= dev_unnorm and d > 0:
                    worst = t
    max_dev = max(dev_unnorm, dev_cond or 0.0)
    return IdentityReport(
        ok=max_dev <= tol,
        degenerate=degenerate,
        max_deviation=max_dev,
        worst_string=worst if max_dev > 0 else None,
        deviation_unnormalized=dev_unnorm,
        deviation_conditional=dev_cond,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class PropertyReport:
    """All-pairs scan outcome.

    `structure_family` records whether the world carried the full valuation
    enumeration; synonymy-flavored conclusions over a partial family hold
    only relative to the structures that were given.
    """

    ok: bool
    pairs_checked: int
    violations: tuple[str, ...] = ()
    structure_family: str = "relative to given S"


def check_closure_synonymy(world: WorldModel) -> PropertyReport:
    """All-pairs scan: shared referent plus truth propagates truth."""
    v0 = world.v0
    violations = []
    checked = 0
    for a in world.language:
        for b in world.language:
            checked += 1
            if world.reference[a] == world.reference[b] and v0.value(world.referent(a)) == 1:
                if v0.value(world.referent(b)) != 1:
                    violations.append(f"{a!r} true but same-referent {b!r} not true")
    family = "full" if world.has_full_structure_family() else "relative to given S"
    return PropertyReport(
        ok=not violations,
        pairs_checked=checked,
        violations=tuple(violations),
        structure_family=family,
    )


@dataclass(frozen=True)
class KLGapReport:
    """A pair of models close unconditioned but divergent once constrained."""

    ok: bool
    epsilon: float
    kl_unconstrained: float
    kl_constrained: float
    constraint_set: tuple[str, ...]


def check_kl_gap(epsilon: float = KL_EPSILON) -> KLGapReport:
    """Construct a demonstration that closeness does not survive conditioning.

    Two generators nearly identical in KL put very different mass inside a
    small constraint set; restricted to that set they diverge by orders of
    magnitude more than the unconstrained gap.
    """
    learned = DistributionTable({"claim a holds": 0.998, "claim b holds": 0.001, "claim c holds": 0.001})
    target = DistributionTable({"claim a holds": 0.998, "claim b holds": 0.001998, "claim c holds": 0.000002})
    constraint = ("claim b holds", "claim c holds")
    kl_plain = learned.kl(target)
    kl_cond = learned.conditioned(constraint).kl(target.conditioned(constraint))
    return KLGapReport(
        ok=kl_plain < epsilon < kl_cond,
        epsilon=epsilon,
        kl_unconstrained=kl_plain,
        kl_constrained=kl_cond,
        constraint_set=constraint,
    )


def random_world(seed: int, max_states: int = MAX_STATES, max_language: int = MAX_LANGUAGE,
                 min_states: int = 1, min_language: int = 1) -> WorldModel:
    """A seed-determined world with a random reference map and valuation."""
    rng = random.Random(seed)
    n_states = rng.randint(min_states, max_states)
    n_strings = rng.randint(min_language, max_language)
    states = tuple(f"w{i}" for i in range(n_states))
    language = tuple(f"claim {i} holds" for i in range(n_strings))
    reference = {text: states[rng.randrange(n_states)] for text in language}
    v0 = Structure(name="s0", valuation={s: rng.randint(0, 1) for s in states})
    return WorldModel(states=states, structures=(v0,), reference=reference, language=language)


def random_instance(seed: int, max_states: int = MAX_STATES, max_language: int = MAX_LANGUAGE) -> CheckInstance:
    """A random world plus a random explicit generator over its language."""
    rng = random.Random(seed)
    world = random_world(seed + 1, max_states=max_states, max_language=max_language, min_states=1, min_language=1)
    weights = [rng.random() + 1e-9 for _ in world.language]
    total = sum(weights)
    table = DistributionTable({t: w / total for t, w in zip(world.language, weights)})
    return CheckInstance(world=world, corpus=(), prompt="", generator=table)


def random_verified_instance(seed: int, max_states: int = MAX_STATES,
                             max_language: int = MAX_LANGUAGE) -> CheckInstance:
    """A random instance whose corpus is verified but leaves referents uncovered.

    String 0 is forced onto a true state and the corpus is exactly the
    strings of that state; string 1 is forced onto a different state, so a
    novel-referent output always exists.
    """
    rng = random.Random(seed)
    n_states = rng.randint(2, max(2, max_states))
    n_strings = rng.randint(2, max(2, max_language))
    states = tuple(f"w{i}" for i in range(n_states))
    language = tuple(f"claim {i} holds" for i in range(n_strings))
    reference = {"claim 0 holds": states[0], "claim 1 holds": states[1]}
    for text in language[2:]:
        reference[text] = states[rng.randrange(n_states)]
    valuation = {s: rng.randint(0, 1) for s in states}
    valuation[states[0]] = 1
    v0 = Structure(name="s0", valuation=valuation)
    world = WorldModel(states=states, structures=(v0,), reference=reference, language=language)
    corpus = tuple(t for t in language if reference[t] == states[0])
    weights = [rng.random() + 1e-9 for _ in language]
    total = sum(weights)
    table = DistributionTable({t: w / total for t, w in zip(language, weights)})
    return CheckInstance(world=world, corpus=corpus, prompt="", generator=table)


def random_decomposition_instance(seed: int, n_strings: int = 8) -> CheckInstance:
    """A small instance sized for the decomposition identity check."""
    rng = random.Random(seed)
    n_states = rng.randint(1, max(1, n_strings // 2))
    states = tuple(f"w{i}" for i in range(n_states))
    language = tuple(f"claim {i} holds" for i in range(n_strings))
    reference = {text: states[rng.randrange(n_states)] for text in language}
    v0 = Structure(name="s0", valuation={s: rng.randint(0, 1) for s in states})
    world = WorldModel(states=states, structures=(v0,), reference=reference, language=language)
    weights = [rng.random() + 1e-9 for _ in language]
    total = sum(weights)
    table = DistributionTable({t: w / total for t, w in zip(language, weights)})
    return CheckInstance(world=world, generator=table)


def _four_string_world() -> WorldModel:
    """Two referents, two strings each: the smallest non-trivial group fixture."""
    reference = {
        "the lamp is lit": "lamp-on",
        "the lamp is not off": "lamp-on",
        "the door is open": "door-open",
        "the door is not shut": "door-open",
    }
    v0 = Structure(name="s0", valuation={"lamp-on": 1, "door-open": 0})
    return WorldModel(states=("door-open", "lamp-on"), structures=(v0,), reference=reference)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    details: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "status": "pass" if self.passed else "fail", "details": self.details}


@dataclass(frozen=True)
class SuiteResult:
    results: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [r.to_dict() for r in self.results]}


CHECK_NAMES = (
    "nonfactuality",
    "verified_corpus",
    "closure_synonymy",
    "decompositions",
    "group_axioms",
    "kl_gap",
)


def run_check_suite(
    names=CHECK_NAMES,
    base_seed: int = 0,
    witness_instances: int = 100,
    closure_worlds: int = 1000,
    decomposition_instances: int = 100,
    max_states: int = MAX_STATES,
    max_language: int = MAX_LANGUAGE,
) -> SuiteResult:
    """Run the named checks over seed-derived fixtures and collect results."""
    if max_states > MAX_STATES or max_language > MAX_LANGUAGE:
        raise CapacityError(
            f"requested bounds exceed checker limits ({MAX_STATES} states, {MAX_LANGUAGE} strings)"
        )
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown:
        raise DomainError(f"unknown checks {unknown}; known: {list(CHECK_NAMES)}")
    results = []
    for name in names:
        if name == "nonfactuality":
            failures = []
            sample = None
            for i in range(witness_instances):
                inst = random_instance(base_seed + i, max_states=max_states, max_language=max_language)
                try:
                    witness = check_nonfactuality(inst)
                    if sample is None:
                        sample = {"output": witness.output, "referent": witness.referent,
                                  "s_true": witness.s_true.name, "s_false": witness.s_false.name}
                except (WitnessError, DomainError) as exc:
                    failures.append(f"seed {base_seed + i}: {exc}")
            results.append(CheckResult(name, not failures,
                                       {"instances": witness_instances, "failures": failures,
                                        "sample_witness": sample}))
        elif name == "verified_corpus":
            failures = []
            sample = None
            for i in range(witness_instances):
                inst = random_verified_instance(base_seed + 10_000 + i,
                                                max_states=max_states, max_language=max_language)
                try:
                    witness = check_verified_corpus_insufficient(inst)
                    if not witness.found:
                        failures.append(f"seed {base_seed + 10_000 + i}: unexpectedly degenerate")
                    elif sample is None:
                        sample = {"output": witness.output, "referent": witness.referent,
                                  "corpus_referents": list(witness.corpus_referents)}
                except (WitnessError, DomainError) as exc:
                    failures.append(f"seed {base_seed + 10_000 + i}: {exc}")
            results.append(CheckResult(name, not failures,
                                       {"instances": witness_instances, "failures": failures,
                                        "sample_witness": sample}))
        elif name == "closure_synonymy":
            failures = []
            pairs = 0
            families = set()
            for i in range(closure_worlds):
                world = random_world(base_seed + 20_000 + i, max_states=max_states,
                                     max_language=min(max_language, 24))
                report = check_closure_synonymy(world)
                pairs += report.pairs_checked
                families.add(report.structure_family)
                if not report.ok:
                    failures.append(f"seed {base_seed + 20_000 + i}: {report.violations[:1]}")
            results.append(CheckResult(name, not failures,
                                       {"worlds": closure_worlds, "pairs_checked": pairs,
                                        "structure_family": sorted(families),
                                        "failures": failures}))
        elif name == "decompositions":
            failures = []
            worst = 0.0
            degenerate_flagged = None
            for i in range(decomposition_instances):
                inst = random_decomposition_instance(base_seed + 30_000 + i)
                report = check_decompositions(inst)
                worst = max(worst, report.max_deviation)
                if not report.ok:
                    failures.append(f"seed {base_seed + 30_000 + i}: deviation {report.max_deviation}")
            zero = random_decomposition_instance(base_seed + 30_000)
            all_false = {s: 0 for s in zero.world.states}
            degenerate_report = check_decompositions(zero, state_labels=all_false)
            degenerate_flagged = degenerate_report.degenerate
            if not degenerate_flagged:
                failures.append("empty-constraint instance was not flagged degenerate")
            results.append(CheckResult(name, not failures,
                                       {"instances": decomposition_instances,
                                        "max_deviation": worst,
                                        "degenerate_flagged": degenerate_flagged,
                                        "failures": failures}))
        elif name == "group_axioms":
            world = _four_string_world()
            maps = paraphrase_group(world)
            report = verify_group_axioms(world, maps)
            ok = report.ok and len(maps) == 4
            details = {"maps": len(maps), "failures": list(report.failures)}
            # inject a cross-referent transposition; it must be caught
            bad = dict(maps[0].mapping)
            bad["the lamp is lit"], bad["the door is open"] = bad["the door is open"], bad["the lamp is lit"]
            injected = verify_group_axioms(world, list(maps) + [ParaphraseMap(name="bad", mapping=bad)])
            caught = injected.symmetry and not injected.referent_preserving
            details["injected_violation_caught"] = caught
            if not caught:
                ok = False
            results.append(CheckResult(name, ok, details))
        elif name == "kl_gap":
            report = check_kl_gap()
            results.append(CheckResult(name, report.ok,
                                       {"epsilon": report.epsilon,
                                        "kl_unconstrained": report.kl_unconstrained,
                                        "kl_constrained": report.kl_constrained}))
    return SuiteResult(results=tuple(results))
