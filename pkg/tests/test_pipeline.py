import json
import sys
from pathlib import Path

import pytest

from evclosure.pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    TrialRecord,
    config_from_dict,
    learn,
    load_records,
    prune_candidate,
    run,
    run_multimodal,
    run_text_to_text,
    run_trials,
    save_records,
    save_records_csv,
    summarize,
    truth_values,
)
from evclosure.semantics import save_world

from conftest import BIDEN_2020, BIDEN_2016, TRUMP_2016, TRUMP_2020, make_election_world

STUB = str(Path(__file__).parent / "stub_gen.py")


def write_corpus(tmp_path, rows) -> str:
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return str(path)


def election_fixture(tmp_path, **overrides) -> PipelineConfig:
    corpus = write_corpus(
        tmp_path,
        [{"text": BIDEN_2020, "label": 1}, {"text": TRUMP_2016, "label": 1}],
    )
    world_path = tmp_path / "world.json"
    save_world(make_election_world(), world_path)
    base = dict(
        mode="text_to_text",
        trials=50,
        seed=0,
        corpus_path=corpus,
        truth_world_path=str(world_path),
        ngram_order=2,
        ngram_alpha=0.1,
        generation_mode="sample",
    )
    base.update(overrides)
    return PipelineConfig(**base)


def grid_fixture(tmp_path, **overrides) -> PipelineConfig:
    rules = tmp_path / "rules.jsonl"
    rules.write_text(
        '{"pattern": "there is a ?o at cell ?x ?y", "replacement": "cell ?x ?y contains a ?o"}\n',
        encoding="utf-8",
    )
    base = dict(
        mode="multimodal",
        trials=300,
        seed=11,
        world_spec={"width": 3, "height": 3, "vocabulary": ["key", "lamp"], "density": 0.5, "seed": 0},
        rules_path=str(rules),
        ngram_order=2,
        ngram_alpha=0.1,
        generation_mode="sample",
    )
    base.update(overrides)
    return PipelineConfig(**base)


def test_member_candidate_printed_verbatim(tmp_path):
    cfg = election_fixture(tmp_path, generation_mode="argmax", trials=1)
    records = run_text_to_text(cfg)
    assert len(records) == 1
    r = records[0]
    assert r.accepted == 1
    assert r.candidate in (BIDEN_2020, TRUMP_2016)
    assert r.output() == r.candidate
    assert r.matched_evidence == r.candidate


def test_nonmember_candidate_yields_rejection_string(tmp_path):
    cfg = election_fixture(tmp_path)
    records = run_text_to_text(cfg)
    rejected = [r for r in records if not r.accepted]
    assert rejected
    assert all(r.output() == "I don't know." for r in rejected)
    assert all(r.matched_evidence is None for r in rejected)


def test_empty_evidence_rejects_everything(tmp_path):
    corpus = write_corpus(tmp_path, [{"text": BIDEN_2020, "label": 0}, {"text": TRUMP_2016, "label": 0}])
    cfg = election_fixture(tmp_path, corpus_path=corpus, trials=20)
    records = run_text_to_text(cfg)
    assert all(r.accepted == 0 for r in records)
    assert all(r.output() == "I don't know." for r in records)


def test_pruning_never_edits_candidates(tmp_path):
    cfg = election_fixture(tmp_path, trials=100)
    ctx = learn(cfg)
    records = run_trials(cfg, ctx)
    for r in records:
        if r.accepted:
            assert r.candidate in ctx.evidence.members


def test_oracle_multimodal_accepted_implies_true(tmp_path):
    cfg = grid_fixture(tmp_path, perception_mode="oracle")
    records = run_multimodal(cfg)
    accepted = [r for r in records if r.accepted]
    assert accepted
    assert all(r.truth_v0 == 1 for r in accepted)
    assert all(r.truth_v0hat == 1 for r in accepted)


def test_noisy_flip_yields_faithful_but_not_factual(tmp_path):
    cfg = grid_fixture(
        tmp_path,
        trials=2000,
        perception_mode="noisy",
        perception_epsilon=0.1,
        perception_seed=1,
    )
    records = run_multimodal(cfg)
    accepted = [r for r in records if r.accepted]
    assert all(r.truth_v0hat == 1 for r in accepted)
    flipped_accepted = [r for r in accepted if r.truth_v0 == 0]
    assert flipped_accepted, "expected an observed-true but actually-false sentence to be accepted"


def test_candidate_about_unobserved_fact_rejected(tmp_path):
    cfg = grid_fixture(tmp_path, perception_mode="oracle")
    ctx = learn(cfg)
    unobserved = [s for s, bit in ctx.world.facts.items() if bit == 0]
    assert unobserved
    from evclosure.gridworld import TemplateRenderer

    sentence = TemplateRenderer().render(unobserved[0]).text
    assert prune_candidate(ctx, sentence) == (0, None)


def test_faithfulness_by_replay(tmp_path):
    cfg = grid_fixture(tmp_path, trials=500, perception_mode="noisy",
                       perception_epsilon=0.1, perception_seed=1)
    ctx = learn(cfg)
    records = run_trials(cfg, ctx)
    observed = {r.state: r.observed for r in ctx.readings}
    for record in records:
        if not record.accepted:
            continue
        orbit = ctx.partition.orbit_of(record.candidate)
        states = {ctx.reference[m] for m in orbit if m in ctx.reference}
        assert states
        assert all(observed[s] == 1 for s in states)


def test_paraphrase_members_accepted_and_grounded(tmp_path):
    cfg = grid_fixture(tmp_path, perception_mode="oracle")
    ctx = learn(cfg)
    true_state = next(s for s, bit in ctx.world.facts.items() if bit == 1)
    from evclosure.gridworld import TemplateRenderer, parse_state_id

    x, y, obj = parse_state_id(true_state)
    paraphrase = f"cell {x} {y} contains a {obj}"
    accepted, matched = prune_candidate(ctx, paraphrase)
    assert accepted == 1
    assert matched == TemplateRenderer().render(true_state).text
    v0, v0hat = truth_values(ctx, paraphrase)
    assert v0 == 1 and v0hat == 1


def test_determinism_same_config_same_records(tmp_path):
    cfg = grid_fixture(tmp_path, trials=200)
    first = run(cfg)
    second = run(cfg)
    assert first == second


def test_jobs_do_not_change_records(tmp_path):
    cfg = grid_fixture(tmp_path, trials=100)
    assert run(cfg, jobs=1) == run(cfg, jobs=4)


def test_summarize_all_true():
    records = [
        TrialRecord(trial=i, prompt="", candidate="a b", accepted=1,
                    matched_evidence="a b", truth_v0=1, truth_v0hat=1)
        for i in range(4)
    ]
    report = summarize(records)
    assert report.acceptance_rate == 1.0
    assert report.factuality_accepted == 1.0
    assert report.faithfulness_accepted == 1.0


def test_summarize_zero_accepted_rates_undefined():
    records = [
        TrialRecord(trial=0, prompt="", candidate="x", accepted=0,
                    matched_evidence=None, truth_v0=None, truth_v0hat=None)
    ]
    report = summarize(records)
    assert report.accepted == 0
    assert report.factuality_accepted is None
    assert report.faithfulness_accepted is None


def test_summarize_empty_is_error():
    with pytest.raises(ValueError):
        summarize([])


def test_raw_factuality_below_one_on_adversarial_fixture(tmp_path):
    cfg = election_fixture(tmp_path, trials=1000)
    records = run_text_to_text(cfg)
    report = summarize(records)
    assert report.factuality_raw is not None and report.factuality_raw < 1.0
    false_raw = [r for r in records if r.truth_v0 == 0]
    assert false_raw
    assert all(r.candidate in (TRUMP_2020, BIDEN_2016) for r in false_raw)
    # prune blocks every false candidate on the same seeds
    assert all(r.accepted == 0 for r in false_raw)


def test_trial_record_invariant():
    with pytest.raises(ValueError):
        TrialRecord(trial=0, prompt="", candidate="x", accepted=1,
                    matched_evidence=None, truth_v0=None, truth_v0hat=None)
    with pytest.raises(ValueError):
        TrialRecord(trial=0, prompt="", candidate="x", accepted=0,
                    matched_evidence="x", truth_v0=None, truth_v0hat=None)


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="corpus_path"):
        PipelineConfig(mode="text_to_text")
    with pytest.raises(ConfigError, match="world_spec"):
        PipelineConfig(mode="multimodal")
    with pytest.raises(ConfigError, match="mode"):
        PipelineConfig(mode="telepathy", corpus_path="x")
    with pytest.raises(ConfigError, match="generator_address"):
        PipelineConfig(mode="text_to_text", corpus_path="x", generator_kind="external")
    with pytest.raises(ConfigError, match="unknown config fields"):
        config_from_dict({"mode": "text_to_text", "corpus_path": "x", "coprus_path": "y"})
    with pytest.raises(ConfigError, match="mode"):
        config_from_dict({})


def test_learn_failure_carries_stage_label(tmp_path):
    cfg = election_fixture(tmp_path)
    broken = PipelineConfig(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
                               "corpus_path": str(tmp_path / "missing.jsonl")})
    with pytest.raises(StageError) as err:
        learn(broken)
    assert err.value.stage == "learn"
    assert "[learn]" in str(err.value)


def test_intra_orbit_conflict_surfaces_in_learn(tmp_path):
    corpus = write_corpus(tmp_path, [{"text": "a b", "label": 1}, {"text": "c d", "label": 0}])
    pairs = tmp_path / "pairs.jsonl"
    pairs.write_text('{"a": "a b", "b": "c d"}\n', encoding="utf-8")
    cfg = PipelineConfig(mode="text_to_text", corpus_path=corpus, pairs_path=str(pairs))
    with pytest.raises(StageError) as err:
        learn(cfg)
    assert err.value.stage == "learn"


def test_resample_extension_improves_acceptance(tmp_path):
    plain = election_fixture(tmp_path, trials=200, seed=3)
    retry = election_fixture(tmp_path, trials=200, seed=3, resample_attempts=4)
    base_accepted = summarize(run(plain)).accepted
    retry_accepted = summarize(run(retry)).accepted
    assert retry_accepted >= base_accepted


def test_external_generator_drives_pipeline(tmp_path):
    corpus = write_corpus(tmp_path, [{"text": "the sun is up", "label": 1}])
    cfg = PipelineConfig(
        mode="text_to_text",
        trials=3,
        corpus_path=corpus,
        prompt="the sun is up",
        generator_kind="external",
        generator_address=f"cmd:{sys.executable} {STUB} echo",
        generator_deadline=10.0,
    )
    records = run(cfg)
    assert all(r.candidate == "the sun is up" for r in records)
    assert all(r.accepted == 1 for r in records)


def test_external_failure_falls_back_when_configured(tmp_path):
    corpus = write_corpus(tmp_path, [{"text": "the sun is up", "label": 1}])
    cfg = PipelineConfig(
        mode="text_to_text",
        trials=2,
        corpus_path=corpus,
        generator_kind="external",
        generator_address=f"cmd:{sys.executable} {STUB} error",
        generator_deadline=5.0,
        generator_fallback_internal=True,
        generation_mode="argmax",
    )
    records = run(cfg)
    assert [r.candidate for r in records] == ["the sun is up", "the sun is up"]


def test_external_failure_without_fallback_is_babble_stage_error(tmp_path):
    corpus = write_corpus(tmp_path, [{"text": "the sun is up", "label": 1}])
    cfg = PipelineConfig(
        mode="text_to_text",
        trials=1,
        corpus_path=corpus,
        generator_kind="external",
        generator_address=f"cmd:{sys.executable} {STUB} error",
        generator_deadline=5.0,
    )
    with pytest.raises(StageError) as err:
        run(cfg)
    assert err.value.stage == "babble"


def test_records_round_trip(tmp_path):
    cfg = election_fixture(tmp_path, trials=30)
    records = run(cfg)
    path = tmp_path / "trials.jsonl"
    save_records(records, path)
    assert load_records(path) == records


def test_records_csv_format(tmp_path):
    records = [
        TrialRecord(trial=0, prompt="p q", candidate="a b", accepted=1,
                    matched_evidence="a b", truth_v0=1, truth_v0hat=1),
        TrialRecord(trial=1, prompt="p q", candidate="z z", accepted=0,
                    matched_evidence=None, truth_v0=None, truth_v0hat=None),
    ]
    path = tmp_path / "trials.csv"
    save_records_csv(records, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "trial,prompt,candidate,accepted,matched,v0,v0hat"
    assert lines[1] == "0,p q,a b,1,a b,1,1"
    assert lines[2] == "1,p q,z z,0,,,"
