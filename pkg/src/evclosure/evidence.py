"""The evidence set: paraphrase-closed membership over labeled sentences.

Strings labeled true are taken together with every sentence in their orbit,
so membership is closed under the supplied partition. Labels attach to
orbits, not surface strings; a true and a false label inside one orbit is an
incoherent valuation and a hard error. Membership queries are exact
normalized-string equality, never similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .orbits import OrbitPartition
from .text import Sentence, canon


class EvidenceConflictError(ValueError):
    """Contradictory truth labels inside a single orbit."""


class CorpusFormatError(ValueError):
    """A corpus file line could not be parsed or is inconsistent."""


@dataclass(frozen=True)
class LabeledString:
    """A sentence with the 0/1 truth label its orbit is believed to carry."""

    sentence: Sentence
    label: int

    @property
    def text(self) -> str:
        return self.sentence.text


@dataclass(frozen=True)
class EvidenceSet:
    """Paraphrase-closed set of sentences the system has evidence for.

    `provenance` maps each member to either ("direct",) or
    ("paraphrase", direct_member); chains always end at a direct entry.
    `valuation_source` records where the labels came from ("oracle" or
    "estimated:<learner-id>").
    """

    members: frozenset[str]
    provenance: dict[str, tuple]
    valuation_source: str = "oracle"

    def __contains__(self, candidate) -> bool:
        return canon(candidate) in self.members

    def provenance_of(self, candidate) -> tuple | None:
        return self.provenance.get(canon(candidate))

    def direct_source_of(self, candidate) -> str | None:
        """The direct evidence member a candidate's provenance chain ends at."""
        entry = self.provenance_of(candidate)
        if entry is None:
            return None
        if entry[0] == "direct":
            return canon(candidate)
        return entry[1]

    def direct_members(self) -> tuple[str, ...]:
        return tuple(sorted(t for t, entry in self.provenance.items() if entry[0] == "direct"))


def contains(evidence: EvidenceSet, candidate) -> int:
    """Exact membership after normalization; no fuzzy matching."""
    return 1 if candidate in evidence else 0


def build_evidence(labeled, partition: OrbitPartition, valuation_source: str = "oracle") -> EvidenceSet:
    """Close the true-labeled strings under the partition.

    Raises EvidenceConflictError when two labeled strings that share an
    orbit (or normalize to the same sentence) carry different labels.
    """
    label_by_text: dict[str, int] = {}
    for item in labeled:
        text = item.text
        if label_by_text.get(text, item.label) != item.label:
            raise EvidenceConflictError(f"string {text!r} labeled both 0 and 1")
        label_by_text[text] = item.label

    orbit_label: dict[str, tuple[int, str]] = {}
    for text in sorted(label_by_text):
        rep = partition.representative(text)
        label = label_by_text[text]
        seen = orbit_label.get(rep)
        if seen is not None and seen[0] != label:
            raise EvidenceConflictError(
                f"orbit of {seen[1]!r} carries conflicting labels: "
                f"{seen[1]!r} -> {seen[0]}, {text!r} -> {label}"
            )
        if seen is None:
            orbit_label[rep] = (label, text)

    members: set[str] = set()
    provenance: dict[str, tuple] = {}
    direct = sorted(t for t, label in label_by_text.items() if label == 1)
    anchor_by_rep: dict[str, str] = {}
    for text in direct:
        members.add(text)
        provenance[text] = ("direct",)
        rep = partition.representative(text)
        if text < anchor_by_rep.get(rep, text) or rep not in anchor_by_rep:
            anchor_by_rep[rep] = text
    for text in direct:
        for mate in partition.orbit_of(text):
            if mate in members:
                continue
            members.add(mate)
            provenance[mate] = ("paraphrase", anchor_by_rep[partition.representative(mate)])
    return EvidenceSet(members=frozenset(members), provenance=provenance, valuation_source=valuation_source)


def ingest_corpus(path, default_label: int = 1) -> list[LabeledString]:
    """Read a JSON-lines corpus: {"text": ..., "label": 0|1 (optional)}.

    Strings are normalized; duplicates keep the first label, and a duplicate
    with a different label is an error naming the offending line.
    """
    out: list[LabeledString] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(entry, dict) or "text" not in entry:
            raise CorpusFormatError(f"{path}:{lineno}: expected an object with a 'text' field")
        label = entry.get("label", default_label)
        if label not in (0, 1):
            raise CorpusFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        sentence = Sentence.of(str(entry["text"]))
        text = sentence.text
        if text in seen:
            if seen[text] != label:
                raise CorpusFormatError(
                    f"{path}:{lineno}: duplicate of {text!r} with conflicting label {label}"
                )
            continue
        seen[text] = label
        out.append(LabeledString(sentence=sentence, label=int(label)))
    return out


def save_snapshot(evidence: EvidenceSet, path) -> None:
    """Write the evidence set as a sorted, bit-reproducible JSON-lines file."""
    lines = []
    for text in sorted(evidence.members):
        entry = evidence.provenance[text]
        if entry[0] == "direct":
            prov = {"kind": "direct"}
        else:
            prov = {"kind": "paraphrase", "of": entry[1]}
        lines.append(
            json.dumps(
                {"provenance": prov, "source": evidence.valuation_source, "text": text},
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_snapshot(path) -> EvidenceSet:
    """Load a snapshot, validating that provenance chains end at direct entries."""
    members: set[str] = set()
    provenance: dict[str, tuple] = {}
    source = "oracle"
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            text = canon(entry["text"])
            prov = entry["provenance"]
            source = str(entry.get("source", source))
            if prov["kind"] == "direct":
                provenance[text] = ("direct",)
            else:
                provenance[text] = ("paraphrase", canon(prov["of"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusFormatError(f"{path}:{lineno}: bad snapshot line: {exc}") from exc
        members.add(text)
    for text, entry in provenance.items():
        if entry[0] == "paraphrase":
            anchor = provenance.get(entry[1])
            if anchor is None or anchor[0] != "direct":
                raise CorpusFormatError(
                    f"{path}: provenance of {text!r} does not end at a direct entry"
                )
    return EvidenceSet(members=frozenset(members), provenance=provenance, valuation_source=source)
