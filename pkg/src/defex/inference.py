"""Disjoint-encoding extraction.

The target definitions are encoded once into a reusable index; every
candidate mention is then scored against all of them by cosine similarity
in vector space, so a corpus of N candidates and T types costs N + T
encoder calls instead of the N * T a joint scorer needs.  Call counters
make that claim checkable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, EventOntology, PredictionRecord, PredictionSet
from .encoder import CONTEXT, DEFINITION, DualEncoderModel
from .errors import (
    ArgumentError,
    DegenerateVectorError,
    FingerprintError,
    InputNotFoundError,
    ValidationError,
)

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class InferenceConfig:
    threshold: float = 0.7
    batch_size: int = 16

    def __post_init__(self):
        if not (-1.0 < self.threshold < 1.0):
            raise ArgumentError("threshold must lie strictly inside (-1, 1)")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be at least 1")


@dataclass
class CallCounter:
    """Counts individual encoder invocations (one per sequence encoded)."""

    context_encoder_calls: int = 0
    definition_encoder_calls: int = 0

    def record(self, side: str, n: int = 1) -> None:
        if n < 0:
            raise ArgumentError("cannot record a negative call count")
        if side == CONTEXT:
            self.context_encoder_calls += n
        elif side == DEFINITION:
            self.definition_encoder_calls += n
        else:
            raise ArgumentError(f"unknown encoder side {side!r}")

    def as_dict(self) -> dict:
        return {
            "context_encoder_calls": self.context_encoder_calls,
            "definition_encoder_calls": self.definition_encoder_calls,
        }


@dataclass(frozen=True)
class DefinitionIndex:
    """Definition vectors for the T target types, in ontology order, tied to
    the producing model by content fingerprint."""

    ontology: EventOntology
    vectors: np.ndarray  # (T, dim)
    fingerprint: str

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ontology):
            raise ValidationError(
                f"index has {self.vectors.shape[0]} vectors for "
                f"{len(self.ontology)} ontology types"
            )
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateVectorError("definition index contains a zero vector")
        object.__setattr__(self, "_norms", norms)

    def save(self, path) -> None:
        meta = {
            "format_version": INDEX_FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "types": [{"type_name": n, "definition": list(d)} for n, d in self.ontology.types],
        }
        np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)), vectors=self.vectors)

    @classmethod
    def load(cls, path) -> "DefinitionIndex":
        path = Path(path)
        if not path.exists():
            raise InputNotFoundError(f"definition index not found: {path}")
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            if meta.get("format_version") != INDEX_FORMAT_VERSION:
                raise ValidationError("definition index format version mismatch")
            ontology = EventOntology(
                tuple((t["type_name"], tuple(t["definition"])) for t in meta["types"])
            )
            return cls(ontology, archive["vectors"], meta["fingerprint"])


def build_definition_index(model: DualEncoderModel, ontology: EventOntology,
                           counter: CallCounter | None = None) -> DefinitionIndex:
    """Encode every target definition exactly once, in ontology order."""
    if len(ontology) == 0:
        raise ArgumentError("cannot index an empty ontology")
    vectors = np.stack(
        [model.encode_definition(definition, counter=counter).values
         for _, definition in ontology.types]
    )
    return DefinitionIndex(ontology, vectors, model.fingerprint())


def _require_fresh(model: DualEncoderModel, index: DefinitionIndex) -> None:
    if index.fingerprint != model.fingerprint():
        raise FingerprintError(
            "definition index was built by a different model state; rebuild it"
        )


def _scores_against(index: DefinitionIndex, mention: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(mention)
    if norm == 0.0:
        raise DegenerateVectorError("mention pooled to a zero vector")
    return (index.vectors @ mention) / (index._norms * norm)


def score_mention(model: DualEncoderModel, index: DefinitionIndex,
                  sentence: Sequence[str], span: tuple[int, int],
                  counter: CallCounter | None = None) -> list[tuple[str, float]]:
    """Cosine of one candidate mention against every target type, in
    ontology order."""
    _require_fresh(model, index)
    mention = model.mention_vector(sentence, span, counter=counter)
    sims = _scores_against(index, mention.values)
    return [(name, float(s)) for name, s in zip(index.ontology.names, sims)]


def extract(model: DualEncoderModel, index: DefinitionIndex,
            documents: Sequence[Document], config: InferenceConfig,
            counter: CallCounter | None = None) -> tuple[PredictionSet, CallCounter]:
    """Thresholded extraction over all candidate spans.

    Each sentence is contextualized once and shared by its candidates.  A
    candidate is emitted iff its best cosine strictly exceeds the threshold;
    the label is the argmax type (ties to the smallest ontology index).
    """
    _require_fresh(model, index)
    counter = counter if counter is not None else CallCounter()
    names = index.ontology.names
    records = []
    for doc in documents:
        by_sentence: dict[int, list[tuple[int, int]]] = {}
        for sent_idx, start, end in doc.candidates:
            by_sentence.setdefault(sent_idx, []).append((start, end))
        for sent_idx in sorted(by_sentence):
            encoding = model.encode_tokens(CONTEXT, doc.sentences[sent_idx], counter=counter)
            for start, end in by_sentence[sent_idx]:
                pooled = model.pool_mention(encoding, (start, end))
                sims = _scores_against(index, pooled.values)
                best = int(np.argmax(sims))
                score = float(sims[best])
                if score > config.threshold:
                    records.append(
                        PredictionRecord(doc.doc_id, sent_idx, start, end, names[best], score)
                    )
    return PredictionSet(tuple(records)), counter


def threshold_sweep(model: DualEncoderModel, index: DefinitionIndex,
                    documents: Sequence[Document], thresholds: Sequence[float],
                    batch_size: int = 16) -> dict[float, PredictionSet]:
    """Extraction at several thresholds on one fixed model/index."""
    out = {}
    for t in thresholds:
        preds, _ = extract(model, index, documents, InferenceConfig(threshold=t, batch_size=batch_size))
        out[float(t)] = preds
    return out


@dataclass(frozen=True)
class JointSimulation:
    """Arithmetic comparison of joint pair-wise scoring against disjoint
    encoding, under a constant per-call cost."""

    n_candidates: int
    n_types: int
    joint_pair_count: int
    disjoint_call_count: int
    invocation_ratio: float
    joint_seconds: float
    disjoint_seconds: float

    def as_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "n_types": self.n_types,
            "joint_pair_count": self.joint_pair_count,
            "disjoint_call_count": self.disjoint_call_count,
            "invocation_ratio": self.invocation_ratio,
            "joint_seconds": self.joint_seconds,
            "disjoint_seconds": self.disjoint_seconds,
        }


def simulate_joint_baseline(cost_per_call: float, n_candidates: int,
                            n_types: int) -> JointSimulation:
    """Model a joint scorer that must run one forward per (mention, type)
    pair versus the disjoint design's one call per mention plus one per
    type."""
    if n_candidates < 1 or n_types < 1:
        raise ArgumentError("need at least one candidate and one type")
    if cost_per_call < 0:
        raise ArgumentError("cost_per_call must be non-negative")
    joint = n_candidates * n_types
    disjoint = n_candidates + n_types
    return JointSimulation(
        n_candidates=n_candidates,
        n_types=n_types,
        joint_pair_count=joint,
        disjoint_call_count=disjoint,
        invocation_ratio=joint / disjoint,
        joint_seconds=cost_per_call * joint,
        disjoint_seconds=cost_per_call * disjoint,
    )


def counter_report(counter: CallCounter, n_candidates: int, n_types: int) -> dict:
    """Structured summary of one extraction run next to the joint-scoring
    arithmetic."""
    sim = simulate_joint_baseline(0.0, n_candidates, n_types)
    return {
        "n_candidates": n_candidates,
        "n_types": n_types,
        "context_encoder_calls": counter.context_encoder_calls,
        "definition_encoder_calls": counter.definition_encoder_calls,
        "joint_pair_count": sim.joint_pair_count,
        "disjoint_call_count": sim.disjoint_call_count,
        "invocation_ratio": sim.invocation_ratio,
    }
