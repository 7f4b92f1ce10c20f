"""Evidence-gated text generation over finite interpreted languages.

The package models a finite language whose strings refer to states of a
world, partitions it into shared-referent orbits, builds paraphrase-closed
evidence sets, and runs a learn/babble/prune loop that only prints
candidates the evidence covers. A brute-force checker verifies the
underlying identities on small instances.
"""

__version__ = "0.1.0"

from .text import Sentence, canon, normalize_tokens
from .semantics import (
    Structure,
    WorldModel,
    are_synonymous,
    enumerate_structures,
    evaluate_truth,
)
from .orbits import (
    ClosureCaps,
    OrbitPartition,
    ParaphraseMap,
    ParaphrasePair,
    RewriteRule,
    orbits_from_reference,
    orbits_from_rules,
    paraphrase_group,
    verify_group_axioms,
)
from .evidence import EvidenceSet, LabeledString, build_evidence, contains, ingest_corpus
from .gridworld import GridWorld, TemplateRenderer, generate_world, perceive, render_source
from .babble import (
    ExternalGenerator,
    GenerationRequest,
    NgramModel,
    babble,
    babble_external,
    train,
)
from .pipeline import (
    PipelineConfig,
    Report,
    TrialRecord,
    run,
    run_multimodal,
    run_text_to_text,
    summarize,
)

__all__ = [
    "Sentence",
    "canon",
    "normalize_tokens",
    "Structure",
    "WorldModel",
    "are_synonymous",
    "enumerate_structures",
    "evaluate_truth",
    "ClosureCaps",
    "OrbitPartition",
    "ParaphraseMap",
    "ParaphrasePair",
    "RewriteRule",
    "orbits_from_reference",
    "orbits_from_rules",
    "paraphrase_group",
    "verify_group_axioms",
    "EvidenceSet",
    "LabeledString",
    "build_evidence",
    "contains",
    "ingest_corpus",
    "GridWorld",
    "TemplateRenderer",
    "generate_world",
    "perceive",
    "render_source",
    "ExternalGenerator",
    "GenerationRequest",
    "NgramModel",
    "babble",
    "babble_external",
    "train",
    "PipelineConfig",
    "Report",
    "TrialRecord",
    "run",
    "run_multimodal",
    "run_text_to_text",
    "summarize",
]
