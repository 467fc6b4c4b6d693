"""Ingestion and statistics for JSONL annotation files.

One record per line: {"dialogue_id", "segment_id", "speaker", "labels"}.
``labels`` is a list of label triples and may only appear on Seeker records;
an utterance with several simultaneous distortions carries several entries,
which is why segment and label counts are reported separately.

The average-labels figure is reported two ways: raw labels per dialogue and
distinct label types per dialogue, since aggregate statistics in the wild use
either convention.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .domain import CognitiveLabels, DistortionType


class Speaker(enum.Enum):
    SEEKER = "Seeker"
    COUNSELOR = "Counselor"


@dataclass(frozen=True)
class AnnotationRecord:
    dialogue_id: str
    segment_id: str
    speaker: Speaker
    labels: Tuple[CognitiveLabels, ...] = ()

    def __post_init__(self):
        if self.speaker is Speaker.COUNSELOR and self.labels:
            raise ValueError("Counselor records must not carry labels")


class ParseError(ValueError):
    """A malformed annotation file; carries per-line diagnostics."""

    def __init__(self, errors: List[str]):
        self.errors = errors
        super().__init__("; ".join(errors[:5]) + ("" if len(errors) <= 5 else " ..."))


def _parse_line(obj: dict) -> AnnotationRecord:
    speaker = Speaker(obj["speaker"])
    raw_labels = obj.get("labels") or []
    labels = tuple(CognitiveLabels.from_dict(x) for x in raw_labels)
    return AnnotationRecord(
        dialogue_id=str(obj["dialogue_id"]),
        segment_id=str(obj["segment_id"]),
        speaker=speaker,
        labels=labels,
    )


def read_records(path: str, lenient: bool = False) -> Tuple[List[AnnotationRecord], List[str]]:
    """Parse a JSONL annotation file.

    Strict mode raises ParseError when any line is malformed; lenient mode
    skips bad lines and returns their diagnostics alongside the records.
    """
    records: List[AnnotationRecord] = []
    errors: List[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(_parse_line(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors and not lenient:
        raise ParseError(errors)
    return records, errors


@dataclass(frozen=True)
class DatasetSummary:
    n_dialogues: int
    n_utterances: int
    n_seeker: int
    n_counselor: int
    n_segments: int
    n_labels: int
    avg_turns: float
    avg_labels_per_dialogue: float
    avg_distinct_types_per_dialogue: float
    type_distribution: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "n_utterances": self.n_utterances,
            "n_seeker": self.n_seeker,
            "n_counselor": self.n_counselor,
            "n_segments": self.n_segments,
            "n_labels": self.n_labels,
            "avg_turns": self.avg_turns,
            "avg_labels_per_dialogue": self.avg_labels_per_dialogue,
            "avg_distinct_types_per_dialogue": self.avg_distinct_types_per_dialogue,
            "type_distribution": dict(self.type_distribution),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSummary":
        return cls(
            n_dialogues=d["n_dialogues"],
            n_utterances=d["n_utterances"],
            n_seeker=d["n_seeker"],
            n_counselor=d["n_counselor"],
            n_segments=d["n_segments"],
            n_labels=d["n_labels"],
            avg_turns=d["avg_turns"],
            avg_labels_per_dialogue=d["avg_labels_per_dialogue"],
            avg_distinct_types_per_dialogue=d["avg_distinct_types_per_dialogue"],
            type_distribution=dict(d["type_distribution"]),
        )


def summarize(records: Sequence[AnnotationRecord]) -> DatasetSummary:
    """Counts, averages, and the distortion-type distribution.

    Order-invariant: every statistic is a pure aggregate. A segment is any
    utterance carrying at least one label.
    """
    dialogues = set()
    per_dialogue_types: Dict[str, set] = {}
    n_seeker = n_counselor = n_segments = n_labels = 0
    type_counts = {d: 0 for d in DistortionType}
    for r in records:
        dialogues.add(r.dialogue_id)
        if r.speaker is Speaker.SEEKER:
            n_seeker += 1
        else:
            n_counselor += 1
        if r.labels:
            n_segments += 1
            n_labels += len(r.labels)
            bucket = per_dialogue_types.setdefault(r.dialogue_id, set())
            for lab in r.labels:
                if lab.distortion is not None:
                    type_counts[lab.distortion] += 1
                    bucket.add(lab.distortion)

    n_dialogues = len(dialogues)
    n_utterances = len(records)
    typed_total = sum(type_counts.values())
    distribution = (
        {d.label: type_counts[d] / typed_total for d in DistortionType if type_counts[d]}
        if typed_total
        else {}
    )
    distinct_total = sum(len(s) for s in per_dialogue_types.values())
    return DatasetSummary(
        n_dialogues=n_dialogues,
        n_utterances=n_utterances,
        n_seeker=n_seeker,
        n_counselor=n_counselor,
        n_segments=n_segments,
        n_labels=n_labels,
        avg_turns=n_utterances / n_dialogues if n_dialogues else 0.0,
        avg_labels_per_dialogue=n_labels / n_dialogues if n_dialogues else 0.0,
        avg_distinct_types_per_dialogue=(
            distinct_total / n_dialogues if n_dialogues else 0.0
        ),
        type_distribution=distribution,
    )
