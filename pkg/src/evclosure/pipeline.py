"""End-to-end learn/babble/prune runs over text or grid-world evidence.

A run learns an evidence set once (corpus ingestion or simulated perception,
plus paraphrase closure), then per trial generates one candidate and prunes
it by exact evidence membership. Rejected trials emit the configured
rejection string. Both the ground-truth value and the evidence-side value of
every candidate are recorded when they are determinable, so the gap between
"consistent with what was observed" and "true of the world" is measurable
from the records alone.
"""

from __future__ import annotations

import csv
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import gridworld
from .babble import (
    ExternalGenerator,
    GenerationRequest,
    GeneratorError,
    NgramModel,
    babble as generate_candidates,
    train as train_ngram,
)
from .evidence import EvidenceSet, build_evidence, ingest_corpus
from .orbits import ClosureCaps, OrbitPartition, load_pairs, load_rules, orbits_from_rules
from .semantics import load_world
from .text import canon

REJECTION_OUTPUT = "I don't know."

STAGES = ("learn", "babble", "prune")


class ConfigError(ValueError):
    """The pipeline configuration is missing or misusing a field."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name as its fault domain."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs; mirrors the JSON config file one to one."""

    mode: str
    trials: int = 1
    seed: int = 0
    prompt: str = ""
    rejection_output: str = REJECTION_OUTPUT
    # learn inputs
    corpus_path: str | None = None
    default_label: int = 1
    language_path: str | None = None
    truth_world_path: str | None = None
    world_spec: dict | None = None
    world_spec_path: str | None = None
    perception_mode: str = "oracle"
    perception_epsilon: float = 0.0
    perception_seed: int = 0
    templates: dict = field(default_factory=dict)
    rules_path: str | None = None
    pairs_path: str | None = None
    closure_depth: int = 3
    closure_max_derived: int = 10_000
    # generator
    generator_kind: str = "internal"
    generator_address: str | None = None
    generator_deadline: float | None = None
    generator_fallback_internal: bool = False
    ngram_order: int = 2
    ngram_alpha: float = 0.1
    train_corpus_path: str | None = None
    train_on: str = "all"
    generation_mode: str = "sample"
    max_tokens: int = 32
    top_k: int | None = None
    # non-standard extension: redraw up to N times before giving up on a trial
    resample_attempts: int = 0

    def __post_init__(self):
        if self.mode not in ("text_to_text", "multimodal"):
            raise ConfigError(f"mode must be 'text_to_text' or 'multimodal', got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.mode == "text_to_text" and not self.corpus_path:
            raise ConfigError("text_to_text mode requires 'corpus_path'")
        if self.mode == "multimodal" and not (self.world_spec or self.world_spec_path):
            raise ConfigError("multimodal mode requires 'world_spec' or 'world_spec_path'")
        if self.generator_kind not in ("internal", "external"):
            raise ConfigError(f"generator kind must be 'internal' or 'external', got {self.generator_kind!r}")
        if self.generator_kind == "external" and not self.generator_address:
            raise ConfigError("external generator requires 'generator_address'")
        if self.generation_mode not in ("argmax", "sample"):
            raise ConfigError(f"generation_mode must be 'argmax' or 'sample', got {self.generation_mode!r}")
        if self.train_on not in ("all", "positives"):
            raise ConfigError(f"train_on must be 'all' or 'positives', got {self.train_on!r}")
        if self.resample_attempts < 0:
            raise ConfigError("resample_attempts must be >= 0")


_CONFIG_KEYS = None


def config_from_dict(raw: dict) -> PipelineConfig:
    global _CONFIG_KEYS
    if _CONFIG_KEYS is None:
        _CONFIG_KEYS = set(PipelineConfig.__dataclass_fields__)
    if "mode" not in raw:
        raise ConfigError("config missing required field 'mode'")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return PipelineConfig(**raw)


def load_config(path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(raw)


@dataclass
class LearnedContext:
    """Everything the babble and prune stages consume, built once per run."""

    evidence: EvidenceSet
    partition: OrbitPartition
    model: NgramModel | None
    reference: dict[str, str]
    v0_states: dict[str, int]
    v0hat_states: dict[str, int]
    orbit_labels: dict[str, int]
    world: gridworld.GridWorld | None = None
    readings: list | None = None


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    prompt: str
    candidate: str
    accepted: int
    matched_evidence: str | None
    truth_v0: int | None
    truth_v0hat: int | None

    def __post_init__(self):
        if (self.accepted == 1) != (self.matched_evidence is not None):
            raise ValueError("accepted flag must match presence of matched evidence")

    def output(self, rejection_output: str = REJECTION_OUTPUT) -> str:
        return self.candidate if self.accepted else rejection_output


def _load_language_file(path) -> list[str]:
    return [canon(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _build_partition(cfg: PipelineConfig, language) -> OrbitPartition:
    rules = load_rules(cfg.rules_path) if cfg.rules_path else []
    pairs = load_pairs(cfg.pairs_path) if cfg.pairs_path else []
    caps = ClosureCaps(max_depth=cfg.closure_depth, max_derived=cfg.closure_max_derived)
    return orbits_from_rules(language, rules, pairs, caps)


def _orbit_labels(labeled, partition: OrbitPartition) -> dict[str, int]:
    labels: dict[str, int] = {}
    for item in labeled:
        labels[partition.representative(item.text)] = item.label
    return labels


def _train_model(cfg: PipelineConfig, labeled) -> NgramModel | None:
    needs_model = cfg.generator_kind == "internal" or cfg.generator_fallback_internal
    if not needs_model:
        return None
    if cfg.train_corpus_path:
        texts = [item.text for item in ingest_corpus(cfg.train_corpus_path, cfg.default_label)]
    elif cfg.train_on == "positives":
        texts = [item.text for item in labeled if item.label == 1]
    else:
        texts = [item.text for item in labeled]
    return train_ngram(texts, order=cfg.ngram_order, alpha=cfg.ngram_alpha)


def learn_text(cfg: PipelineConfig) -> LearnedContext:
    labeled = ingest_corpus(cfg.corpus_path, cfg.default_label)
    language = [item.text for item in labeled]
    if cfg.language_path:
        language.extend(_load_language_file(cfg.language_path))
    partition = _build_partition(cfg, language)
    evidence = build_evidence(labeled, partition, valuation_source="estimated:corpus")
    reference: dict[str, str] = {}
    v0_states: dict[str, int] = {}
    if cfg.truth_world_path:
        world = load_world(cfg.truth_world_path)
        reference = dict(world.reference)
        v0_states = dict(world.v0.valuation)
    return LearnedContext(
        evidence=evidence,
        partition=partition,
        model=_train_model(cfg, labeled),
        reference=reference,
        v0_states=v0_states,
        v0hat_states={},
        orbit_labels=_orbit_labels(labeled, partition),
    )


def learn_multimodal(cfg: PipelineConfig) -> LearnedContext:
    if cfg.world_spec is not None:
        world = gridworld.world_from_spec(cfg.world_spec)
    else:
        world = gridworld.load_world_spec(cfg.world_spec_path)
    readings = gridworld.perceive(
        world, mode=cfg.perception_mode, epsilon=cfg.perception_epsilon, seed=cfg.perception_seed
    )
    renderer = gridworld.TemplateRenderer(templates=dict(cfg.templates))
    labeled = gridworld.render_source(readings, renderer)
    reference = gridworld.source_reference(world, renderer)
    language = [item.text for item in labeled]
    if cfg.language_path:
        language.extend(_load_language_file(cfg.language_path))
    partition = _build_partition(cfg, language)
    source = "oracle" if cfg.perception_mode == "oracle" else f"estimated:noisy({cfg.perception_epsilon})"
    evidence = build_evidence(labeled, partition, valuation_source=source)
    return LearnedContext(
        evidence=evidence,
        partition=partition,
        model=_train_model(cfg, labeled),
        reference=reference,
        v0_states=dict(world.facts),
        v0hat_states={r.state: r.observed for r in readings},
        orbit_labels=_orbit_labels(labeled, partition),
        world=world,
        readings=readings,
    )


def learn(cfg: PipelineConfig) -> LearnedContext:
    try:
        if cfg.mode == "text_to_text":
            return learn_text(cfg)
        return learn_multimodal(cfg)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("learn", exc) from exc


def trial_seed(base: int, trial: int, attempt: int = 0) -> int:
    return base + 1_000_003 * trial + 7_919 * attempt


def truth_values(ctx: LearnedContext, candidate: str) -> tuple[int | None, int | None]:
    """Evaluate a candidate under the true and the estimated valuations.

    A candidate's orbit is valued 1 only when every member with a known
    referent maps to a true state, matching the orbit-level reading of a
    valuation. Candidates whose orbit touches no known referent get None.
    """
    orbit = ctx.partition.orbit_of(candidate)
    states = sorted({ctx.reference[m] for m in orbit if m in ctx.reference})
    if not states and candidate in ctx.reference:
        states = [ctx.reference[candidate]]
    v0 = None
    if states and all(s in ctx.v0_states for s in states):
        v0 = min(ctx.v0_states[s] for s in states)
    if ctx.v0hat_states:
        v0hat = None
        if states and all(s in ctx.v0hat_states for s in states):
            v0hat = min(ctx.v0hat_states[s] for s in states)
    else:
        v0hat = ctx.orbit_labels.get(ctx.partition.representative(candidate))
    return v0, v0hat


def prune_candidate(ctx: LearnedContext, candidate: str) -> tuple[int, str | None]:
    """Exact evidence-membership gate; returns (accepted, matched direct source)."""
    if candidate in ctx.evidence:
        return 1, ctx.evidence.direct_source_of(candidate)
    return 0, None


class _Generator:
    """Per-run candidate source: internal model or external channel (+fallback)."""

    def __init__(self, cfg: PipelineConfig, ctx: LearnedContext):
        self.cfg = cfg
        self.ctx = ctx
        self.channel: ExternalGenerator | None = None
        self.lock = threading.Lock()
        self.fell_back = False
        if cfg.generator_kind == "external":
            self.channel = ExternalGenerator.from_address(cfg.generator_address, cfg.generator_deadline)

    def one_candidate(self, seed: int) -> str:
        request = GenerationRequest(
            prompt=self.cfg.prompt,
            num_candidates=1,
            max_tokens=self.cfg.max_tokens,
            mode=self.cfg.generation_mode,
            seed=seed,
            top_k=self.cfg.top_k,
        )
        if self.channel is not None and not self.fell_back:
            try:
                with self.lock:
                    candidates = self.channel.generate(request)
                return candidates[0] if candidates else ""
            except GeneratorError:
                if not (self.cfg.generator_fallback_internal and self.ctx.model is not None):
                    raise
                self.fell_back = True
        return generate_candidates(self.ctx.model, request)[0]

    def close(self):
        if self.channel is not None:
            self.channel.close()


def run_trials(cfg: PipelineConfig, ctx: LearnedContext, jobs: int = 1) -> list[TrialRecord]:
    try:
        generator = _Generator(cfg, ctx)
    except Exception as exc:
        raise StageError("babble", exc) from exc

    def one_trial(index: int) -> TrialRecord:
        try:
            candidate = generator.one_candidate(trial_seed(cfg.seed, index))
            for attempt in range(1, cfg.resample_attempts + 1):
                if candidate in ctx.evidence:
                    break
                candidate = generator.one_candidate(trial_seed(cfg.seed, index, attempt))
        except StageError:
            raise
        except Exception as exc:
            raise StageError("babble", exc) from exc
        try:
            accepted, matched = prune_candidate(ctx, candidate)
            v0, v0hat = truth_values(ctx, candidate)
        except Exception as exc:
            raise StageError("prune", exc) from exc
        return TrialRecord(
            trial=index,
            prompt=canon(cfg.prompt),
            candidate=candidate,
            accepted=accepted,
            matched_evidence=matched,
            truth_v0=v0,
            truth_v0hat=v0hat,
        )

    try:
        if jobs <= 1:
            return [one_trial(i) for i in range(cfg.trials)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one_trial, range(cfg.trials)))
    finally:
        generator.close()


def babble_candidates(cfg: PipelineConfig, ctx: LearnedContext, n: int) -> list[str]:
    """Raw candidates from the configured generator, no pruning."""
    try:
        generator = _Generator(cfg, ctx)
    except Exception as exc:
        raise StageError("babble", exc) from exc
    try:
        return [generator.one_candidate(trial_seed(cfg.seed, i)) for i in range(n)]
    except StageError:
        raise
    except Exception as exc:
        raise StageError("babble", exc) from exc
    finally:
        generator.close()


def run_text_to_text(cfg: PipelineConfig, jobs: int = 1) -> list[TrialRecord]:
    if cfg.mode != "text_to_text":
        raise ConfigError("run_text_to_text requires mode 'text_to_text'")
    return run_trials(cfg, learn(cfg), jobs=jobs)


def run_multimodal(cfg: PipelineConfig, jobs: int = 1) -> list[TrialRecord]:
    if cfg.mode != "multimodal":
        raise ConfigError("run_multimodal requires mode 'multimodal'")
    return run_trials(cfg, learn(cfg), jobs=jobs)


def run(cfg: PipelineConfig, jobs: int = 1) -> list[TrialRecord]:
    return run_trials(cfg, learn(cfg), jobs=jobs)


@dataclass(frozen=True)
class Report:
    """Acceptance and truth rates, raw and post-prune.

    Rates over an empty denominator are None (undefined), never zero. The
    *_known counts are the denominators actually used, so every number here
    can be recomputed from the trial records alone.
    """

    trials: int
    accepted: int
    acceptance_rate: float
    factuality_accepted: float | None
    faithfulness_accepted: float | None
    factuality_raw: float | None
    faithfulness_raw: float | None
    accepted_v0_known: int
    accepted_v0hat_known: int
    raw_v0_known: int
    raw_v0hat_known: int

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate,
            "factuality_accepted": self.factuality_accepted,
            "faithfulness_accepted": self.faithfulness_accepted,
            "factuality_raw": self.factuality_raw,
            "faithfulness_raw": self.faithfulness_raw,
            "accepted_v0_known": self.accepted_v0_known,
            "accepted_v0hat_known": self.accepted_v0hat_known,
            "raw_v0_known": self.raw_v0_known,
            "raw_v0hat_known": self.raw_v0hat_known,
        }


def _rate(records, pick) -> tuple[float | None, int]:
    known = [pick(r) for r in records if pick(r) is not None]
    if not known:
        return None, 0
    return sum(known) / len(known), len(known)


def summarize(records) -> Report:
    records = list(records)
    if not records:
        raise ValueError("cannot summarize zero trial records")
    accepted = [r for r in records if r.accepted]
    fact_acc, n_fa = _rate(accepted, lambda r: r.truth_v0)
    faith_acc, n_ha = _rate(accepted, lambda r: r.truth_v0hat)
    fact_raw, n_fr = _rate(records, lambda r: r.truth_v0)
    faith_raw, n_hr = _rate(records, lambda r: r.truth_v0hat)
    return Report(
        trials=len(records),
        accepted=len(accepted),
        acceptance_rate=len(accepted) / len(records),
        factuality_accepted=fact_acc,
        faithfulness_accepted=faith_acc,
        factuality_raw=fact_raw,
        faithfulness_raw=faith_raw,
        accepted_v0_known=n_fa,
        accepted_v0hat_known=n_ha,
        raw_v0_known=n_fr,
        raw_v0hat_known=n_hr,
    )


def save_records(records, path) -> None:
    lines = [
        json.dumps(
            {
                "accepted": r.accepted,
                "candidate": r.candidate,
                "matched": r.matched_evidence,
                "prompt": r.prompt,
                "trial": r.trial,
                "v0": r.truth_v0,
                "v0hat": r.truth_v0hat,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_records(path) -> list[TrialRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            records.append(
                TrialRecord(
                    trial=int(entry["trial"]),
                    prompt=str(entry["prompt"]),
                    candidate=str(entry["candidate"]),
                    accepted=int(entry["accepted"]),
                    matched_evidence=entry["matched"],
                    truth_v0=entry["v0"],
                    truth_v0hat=entry["v0hat"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad trial record: {exc}") from exc
    return records


def save_records_csv(records, path) -> None:
    """Trial records as CSV: trial, prompt, candidate, accepted, matched, v0, v0hat."""
    def cell(value):
        return "" if value is None else value

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial", "prompt", "candidate", "accepted", "matched", "v0", "v0hat"])
        for r in records:
            writer.writerow(
                [r.trial, r.prompt, r.candidate, r.accepted, cell(r.matched_evidence),
                 cell(r.truth_v0), cell(r.truth_v0hat)]
            )


def save_report(report: Report, json_path, csv_path=None) -> None:
    payload = report.to_dict()
    Path(json_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "value"])
            for key in sorted(payload):
                value = payload[key]
                writer.writerow([key, "" if value is None else value])
