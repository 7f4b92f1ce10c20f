"""Acceptance suite: one test per release criterion, at the stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion. Tolerances here are contractual: the exact-equality
assertions are set-theoretic guarantees, not statistical ones, and must not
be relaxed.
"""

import json
import os
import random
import sys
import time
from pathlib import Path

from evclosure.babble import ExternalGenerator, GenerationRequest, babble_external
from evclosure.checker import (
    check_closure_synonymy,
    check_decompositions,
    check_nonfactuality,
    check_verified_corpus_insufficient,
    random_decomposition_instance,
    random_instance,
    random_verified_instance,
    random_world,
)
from evclosure.cli import main as cli_main
from evclosure.evidence import LabeledString, build_evidence
from evclosure.orbits import ParaphraseMap, orbits_from_reference, paraphrase_group, verify_group_axioms
from evclosure.pipeline import PipelineConfig, learn, run_trials, summarize
from evclosure.semantics import Structure, WorldModel, save_world
from evclosure.text import Sentence

from conftest import BIDEN_2020, BIDEN_2016, TRUMP_2016, TRUMP_2020, make_election_world

REPO_ROOT = Path(__file__).resolve().parents[1]


def _criterion(name: str, ok: bool, detail: str = ""):
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


def _grid_rules(tmp_path) -> str:
    rules = tmp_path / "rules.jsonl"
    rules.write_text(
        '{"pattern": "there is a ?o at cell ?x ?y", "replacement": "cell ?x ?y contains a ?o"}\n'
        '{"pattern": "there is a ?o at cell ?x ?y", "replacement": "a ?o sits at cell ?x ?y"}\n',
        encoding="utf-8",
    )
    return str(rules)


GRID_SPEC = {"width": 3, "height": 3, "vocabulary": ["key", "lamp"], "density": 0.5, "seed": 0}


def test_factual_pipeline_guarantee(tmp_path):
    cfg = PipelineConfig(
        mode="multimodal",
        trials=10_000,
        seed=123,
        world_spec=dict(GRID_SPEC),
        rules_path=_grid_rules(tmp_path),
        perception_mode="oracle",
        ngram_order=2,
        ngram_alpha=0.1,
        generation_mode="sample",
    )
    start = time.perf_counter()
    ctx = learn(cfg)
    records = run_trials(cfg, ctx)
    elapsed = time.perf_counter() - start
    report = summarize(records)
    ok = (
        report.trials >= 10_000
        and report.accepted > 0
        and report.accepted_v0_known == report.accepted
        and report.factuality_accepted == 1.0
        and elapsed < 30.0
    )
    _criterion(
        "factual-pipeline-guarantee",
        ok,
        f"(accepted={report.accepted}, factuality={report.factuality_accepted}, {elapsed:.1f}s)",
    )


def test_faithful_but_not_factual_gap(tmp_path):
    cfg = PipelineConfig(
        mode="multimodal",
        trials=10_000,
        seed=123,
        world_spec=dict(GRID_SPEC),
        rules_path=_grid_rules(tmp_path),
        perception_mode="noisy",
        perception_epsilon=0.1,
        perception_seed=1,
        ngram_order=2,
        ngram_alpha=0.1,
        generation_mode="sample",
    )
    ctx = learn(cfg)
    records = run_trials(cfg, ctx)
    report = summarize(records)
    flipped_accepted = [r for r in records if r.accepted and r.truth_v0 == 0]
    ok = (
        report.trials >= 10_000
        and report.accepted > 0
        and report.accepted_v0hat_known == report.accepted
        and report.faithfulness_accepted == 1.0
        and report.factuality_accepted is not None
        and report.factuality_accepted < 1.0
        and len(flipped_accepted) >= 1
    )
    _criterion(
        "faithful-but-not-factual-gap",
        ok,
        f"(faithfulness={report.faithfulness_accepted}, factuality={report.factuality_accepted}, "
        f"flipped_accepted={len(flipped_accepted)})",
    )


def test_hallucination_premise_and_prune(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text(
        json.dumps({"text": BIDEN_2020, "label": 1}) + "\n"
        + json.dumps({"text": TRUMP_2016, "label": 1}) + "\n",
        encoding="utf-8",
    )
    world_path = tmp_path / "world.json"
    save_world(make_election_world(), world_path)
    cfg = PipelineConfig(
        mode="text_to_text",
        trials=1_000,
        seed=0,
        corpus_path=str(corpus),
        truth_world_path=str(world_path),
        ngram_order=2,
        ngram_alpha=0.1,
        generation_mode="sample",
    )
    ctx = learn(cfg)
    records = run_trials(cfg, ctx)
    false_babbled = [r for r in records if r.truth_v0 == 0]
    false_printed = [r for r in records if r.accepted and r.truth_v0 == 0]
    ok = len(false_babbled) >= 1 and len(false_printed) == 0
    sample = false_babbled[0].candidate if false_babbled else None
    assert all(r.candidate in (TRUMP_2020, BIDEN_2016) for r in false_babbled)
    _criterion(
        "hallucination-premise",
        ok,
        f"(false_babbled={len(false_babbled)}, false_printed={len(false_printed)}, e.g. {sample!r})",
    )


def test_model_checker_witness_suite():
    start = time.perf_counter()
    for i in range(100):
        witness = check_nonfactuality(random_instance(i))
        witness.validate()
    for i in range(100):
        witness = check_verified_corpus_insufficient(random_verified_instance(i))
        assert witness.found
        witness.validate()
    violations = 0
    for i in range(1000):
        report = check_closure_synonymy(random_world(i, max_language=24))
        if not report.ok:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10.0
    _criterion("model-checker-suite", ok, f"(100+100 witnesses, 1000 worlds, {elapsed:.1f}s)")


def _exhaustive_summation_oracle(instance) -> tuple[dict, bool]:
    """Independent route: literal sums over orbits and states, then renormalize."""
    world = instance.world
    table = instance.generator
    partition = orbits_from_reference(world)
    labels = world.v0.valuation
    constrained = {}
    for text in world.language:
        total = 0.0
        for rep, members in partition.blocks().items():
            for state in world.states:
                if text in members and world.reference[rep] == state:
                    total += table.mass[text] * labels[state]
        constrained[text] = total
    z = sum(constrained.values())
    if z == 0:
        return {}, True
    return {t: v / z for t, v in constrained.items()}, False


def test_decomposition_identities():
    worst = 0.0
    for i in range(100):
        instance = random_decomposition_instance(i, n_strings=8)
        report = check_decompositions(instance, tol=1e-9)
        assert report.ok, f"seed {i}: deviation {report.max_deviation}"
        oracle, degenerate = _exhaustive_summation_oracle(instance)
        if degenerate:
            assert report.degenerate
            continue
        assert not report.degenerate
        labels = instance.world.v0.valuation
        evidence = build_evidence(
            [
                LabeledString(Sentence.of(t), labels[instance.world.reference[t]])
                for t in instance.world.language
            ],
            orbits_from_reference(instance.world),
        )
        conditional = instance.generator.conditioned(evidence.members)
        for text in instance.world.language:
            got = conditional.mass.get(text, 0.0)
            worst = max(worst, abs(got - oracle[text]))
            assert abs(got - oracle[text]) <= 1e-9
    zero = random_decomposition_instance(0, n_strings=8)
    degenerate_report = check_decompositions(zero, state_labels={s: 0 for s in zero.world.states})
    ok = degenerate_report.degenerate
    _criterion("decomposition-identities", ok, f"(100 instances, max oracle deviation {worst:.2e})")


def test_orbit_engine_against_brute_force():
    for seed in (1, 2, 3):
        rng = random.Random(seed)
        states = tuple(f"w{i}" for i in range(140))
        language = tuple(f"claim {i} holds" for i in range(1000))
        reference = {text: states[rng.randrange(len(states))] for text in language}
        world = WorldModel(
            states=states,
            structures=(Structure("s0", {s: rng.randint(0, 1) for s in states}),),
            reference=reference,
        )
        partition = orbits_from_reference(world)
        groups: dict[str, set] = {}
        for text in world.language:
            groups.setdefault(world.reference[text], set()).add(text)
        assert {frozenset(m) for m in partition.blocks().values()} == {
            frozenset(g) for g in groups.values()
        }

    reference = {
        "the lamp is lit": "lamp-on",
        "the lamp is not off": "lamp-on",
        "the door is open": "door-open",
        "the door is not shut": "door-open",
    }
    world = WorldModel(
        states=("door-open", "lamp-on"),
        structures=(Structure("s0", {"door-open": 1, "lamp-on": 1}),),
        reference=reference,
    )
    maps = paraphrase_group(world)
    report = verify_group_axioms(world, maps)
    bad = dict(maps[0].mapping)
    bad["the lamp is lit"], bad["the door is open"] = bad["the door is open"], bad["the lamp is lit"]
    injected = verify_group_axioms(world, list(maps) + [ParaphraseMap(name="bad", mapping=bad)])
    ok = len(maps) == 4 and report.ok and injected.symmetry and not injected.referent_preserving
    _criterion("orbit-engine", ok, f"(3x1000-string instances, {len(maps)} maps, injection caught)")


def test_manifest_determinism(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "mode": "multimodal",
                "trials": 500,
                "seed": 42,
                "world_spec": GRID_SPEC,
                "rules_path": _grid_rules(tmp_path),
                "perception_mode": "noisy",
                "perception_epsilon": 0.1,
                "perception_seed": 1,
                "generation_mode": "sample",
            }
        ),
        encoding="utf-8",
    )
    first = tmp_path / "first"
    assert cli_main(["run", "--config", str(config), "--out", str(first)]) == 0
    second = tmp_path / "second"
    third = tmp_path / "third"
    assert cli_main(["run", "--manifest", str(first / "manifest.json"), "--out", str(second)]) == 0
    assert cli_main(["run", "--manifest", str(first / "manifest.json"), "--out", str(third)]) == 0
    artifacts = ("report.json", "report.csv", "trials.jsonl", "trials.csv", "evidence.jsonl", "readings.jsonl")
    identical = all((second / a).read_bytes() == (third / a).read_bytes() for a in artifacts)
    identical = identical and all((first / a).read_bytes() == (second / a).read_bytes() for a in artifacts)
    _criterion("manifest-determinism", identical, f"({len(artifacts)} artifacts byte-identical)")


def test_protocol_conformance_with_reference_plugin(tmp_path, monkeypatch):
    fixture_lines = ["the sun is up", "the moon is out", "the tide is high"]
    fixture = tmp_path / "fixture.txt"
    fixture.write_text("\n".join(fixture_lines) + "\n", encoding="utf-8")
    # run the server from the in-repo plugin source so no install is assumed
    plugin_src = str(REPO_ROOT / "plugin" / "src")
    existing = os.environ.get("PYTHONPATH")
    monkeypatch.setenv("PYTHONPATH", plugin_src + (os.pathsep + existing if existing else ""))
    gen = ExternalGenerator.spawn(
        [sys.executable, "-m", "genplugin", "serve", "--adapter", "fixed", "--fixture", str(fixture)],
        deadline=30.0,
    )
    errors = 0
    cycles = 0
    try:
        with gen:
            for i in range(100):
                out = babble_external(gen, GenerationRequest(prompt=f"q {i}", num_candidates=3, seed=i))
                cycles += 1
                if out != fixture_lines:
                    errors += 1
    except Exception as exc:  # any protocol fault fails the criterion
        _criterion("protocol-conformance", False, f"(cycle {cycles}: {exc})")
        return
    _criterion("protocol-conformance", errors == 0 and cycles == 100, f"({cycles} cycles, {errors} mismatches)")
