"""Command-line entry point: learn, babble, prune, run, check, report.

Every subcommand is deterministic given its inputs and writes only inside
its output directory. A run emits a manifest recording the resolved config,
input digests, and seeds, and a later run started from that manifest
reproduces the reports and trial records byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from . import checker
from . import pipeline as pl
from .evidence import load_snapshot, save_snapshot
from .gridworld import dump_readings
from .text import canon

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_INPUT_FIELDS = (
    "corpus_path",
    "language_path",
    "rules_path",
    "pairs_path",
    "truth_world_path",
    "world_spec_path",
    "train_corpus_path",
)


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_dict(cfg: pl.PipelineConfig) -> dict:
    out = {}
    for name in sorted(pl.PipelineConfig.__dataclass_fields__):
        out[name] = getattr(cfg, name)
    return out


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_manifest(cfg: pl.PipelineConfig, artifacts: dict[str, str]) -> dict:
    config = _config_dict(cfg)
    inputs = {}
    for name in _INPUT_FIELDS:
        path = config.get(name)
        if path:
            inputs[str(path)] = _sha256_file(path)
    return {
        "artifacts": artifacts,
        "config": config,
        "config_sha256": _config_hash(config),
        "inputs": inputs,
        "seed": cfg.seed,
        "tool_version": __version__,
        "trials": cfg.trials,
    }


def _apply_overrides(raw: dict, args) -> dict:
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.trials is not None:
        raw["trials"] = args.trials
    if args.mode is not None:
        raw["mode"] = args.mode
    if args.generator is not None:
        if args.generator == "internal":
            raw["generator_kind"] = "internal"
        elif args.generator.startswith("external:"):
            raw["generator_kind"] = "external"
            raw["generator_address"] = args.generator[len("external:"):]
        else:
            raise pl.ConfigError(
                f"--generator must be 'internal' or 'external:<address>', got {args.generator!r}"
            )
    return raw


def _load_run_config(args) -> pl.PipelineConfig:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        raw = dict(manifest["config"])
        for path, digest in manifest.get("inputs", {}).items():
            actual = _sha256_file(path)
            if actual != digest:
                raise pl.ConfigError(
                    f"input {path} changed since the manifest was written "
                    f"(expected {digest[:12]}..., found {actual[:12]}...)"
                )
    elif args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise pl.ConfigError("config file must hold a JSON object")
    else:
        raise pl.ConfigError("run requires --config or --manifest")
    return pl.config_from_dict(_apply_overrides(raw, args))


def cmd_run(args) -> int:
    try:
        cfg = _load_run_config(args)
    except (pl.ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        ctx = pl.learn(cfg)
        records = pl.run_trials(cfg, ctx, jobs=args.jobs)
        report = pl.summarize(records)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:
        print(f"error: [run] {exc}", file=sys.stderr)
        return EXIT_FAILURE
    artifacts = {
        "evidence": "evidence.jsonl",
        "report_csv": "report.csv",
        "report_json": "report.json",
        "trials_csv": "trials.csv",
        "trials_jsonl": "trials.jsonl",
    }
    save_snapshot(ctx.evidence, out / artifacts["evidence"])
    pl.save_records(records, out / artifacts["trials_jsonl"])
    pl.save_records_csv(records, out / artifacts["trials_csv"])
    pl.save_report(report, out / artifacts["report_json"], out / artifacts["report_csv"])
    if ctx.readings is not None:
        artifacts["readings"] = "readings.jsonl"
        dump_readings(ctx.readings, out / artifacts["readings"])
    manifest = build_manifest(cfg, artifacts)
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    accepted = sum(r.accepted for r in records)
    print(f"run complete: {len(records)} trials, {accepted} accepted -> {out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    try:
        cfg = pl.load_config(args.config)
    except pl.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        ctx = pl.learn(cfg)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    save_snapshot(ctx.evidence, out / "evidence.jsonl")
    if ctx.readings is not None:
        dump_readings(ctx.readings, out / "readings.jsonl")
    summary = {
        "evidence_members": len(ctx.evidence.members),
        "orbits": len(ctx.partition.blocks()),
        "partition_notes": list(ctx.partition.notes),
        "valuation_source": ctx.evidence.valuation_source,
    }
    (out / "learn.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"learned {summary['evidence_members']} evidence strings in {summary['orbits']} orbits -> {out}")
    return EXIT_OK


def cmd_babble(args) -> int:
    try:
        cfg = pl.load_config(args.config)
    except pl.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        ctx = pl.learn(cfg)
        candidates = pl.babble_candidates(cfg, ctx, args.n)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    (out / "candidates.txt").write_text(
        "\n".join(candidates) + ("\n" if candidates else ""), encoding="utf-8"
    )
    print(f"babbled {len(candidates)} candidates -> {out / 'candidates.txt'}")
    return EXIT_OK


def cmd_prune(args) -> int:
    try:
        evidence = load_snapshot(args.evidence)
    except Exception as exc:
        print(f"error: [prune] cannot load evidence snapshot: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        lines = Path(args.candidates).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"error: [prune] cannot read candidates: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out_lines = []
    for line in lines:
        if not line.strip():
            continue
        candidate = canon(line)
        matched = evidence.direct_source_of(candidate)
        accepted = 1 if candidate in evidence else 0
        out_lines.append(
            json.dumps(
                {
                    "accepted": accepted,
                    "candidate": candidate,
                    "matched": matched if accepted else None,
                    "output": candidate if accepted else args.rejection,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    names = [args.check] if args.check else list(checker.CHECK_NAMES)
    try:
        suite = checker.run_check_suite(
            names=names,
            base_seed=args.seed,
            witness_instances=args.witness_instances,
            closure_worlds=args.closure_worlds,
            decomposition_instances=args.decomposition_instances,
            max_states=args.max_states,
            max_language=args.max_language,
        )
    except (checker.CapacityError, checker.DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    payload = suite.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for result in suite.results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name}")
    if not suite.ok:
        failed = [r.name for r in suite.results if not r.passed]
        print(f"error: checks failed: {failed}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = pl.load_records(args.records)
        report = pl.summarize(records)
    except Exception as exc:
        print(f"error: [report] {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pl.save_report(report, out / "report.json", out / "report.csv")
    print(f"report written -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evclosure",
        description="Evidence-gated text generation over finite interpreted languages.",
    )
    parser.add_argument("--version", action="version", version=f"evclosure {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full learn/babble/prune pipeline")
    p_run.add_argument("--config", help="pipeline config JSON")
    p_run.add_argument("--manifest", help="rerun from a previously written manifest")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--mode", choices=("text_to_text", "multimodal"), default=None)
    p_run.add_argument("--generator", default=None, help="internal or external:<address>")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel trial fan-out")
    p_run.set_defaults(func=cmd_run)

    p_learn = sub.add_parser("learn", help="build and snapshot the evidence set")
    p_learn.add_argument("--config", required=True)
    p_learn.add_argument("--out", required=True)
    p_learn.set_defaults(func=cmd_learn)

    p_babble = sub.add_parser("babble", help="emit raw candidates without pruning")
    p_babble.add_argument("--config", required=True)
    p_babble.add_argument("--out", required=True)
    p_babble.add_argument("--n", type=int, default=10)
    p_babble.set_defaults(func=cmd_babble)

    p_prune = sub.add_parser("prune", help="annotate candidates against an evidence snapshot")
    p_prune.add_argument("--evidence", required=True, help="evidence snapshot JSON lines")
    p_prune.add_argument("--candidates", required=True, help="candidate strings, one per line")
    p_prune.add_argument("--out", default=None, help="output file (default stdout)")
    p_prune.add_argument("--rejection", default=pl.REJECTION_OUTPUT)
    p_prune.set_defaults(func=cmd_prune)

    p_check = sub.add_parser("check", help="run the brute-force identity checks")
    p_check.add_argument("--out", default=None, help="machine-readable results JSON")
    p_check.add_argument("--check", default=None, choices=checker.CHECK_NAMES,
                         help="run a single named check")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--witness-instances", type=int, default=100)
    p_check.add_argument("--closure-worlds", type=int, default=1000)
    p_check.add_argument("--decomposition-instances", type=int, default=100)
    p_check.add_argument("--max-states", type=int, default=checker.MAX_STATES)
    p_check.add_argument("--max-language", type=int, default=checker.MAX_LANGUAGE)
    p_check.set_defaults(func=cmd_check)

    p_report = sub.add_parser("report", help="recompute the report from trial records")
    p_report.add_argument("--records", required=True, help="trial records JSON lines")
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
