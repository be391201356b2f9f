"""Data model and ingestion for embedded-sentence corpora, images, and splits.

Embeddings are inputs: this package never runs a language model. The corpus
file format carries one sentence per line with a precomputed dense embedding
(the recommended upstream producer is a BERT-style encoder averaging word
embeddings from the second-to-last layer, but any encoder works). Sentences
from a page's first paragraph use the reserved section name "__summary__".
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ValidationError
from .fileio import iter_jsonl, read_json, write_jsonl

SUMMARY_SECTION = "__summary__"

HOP_TAGS = ("2-hop", "3-hop", "all")


def _freeze(vec: np.ndarray) -> np.ndarray:
    out = np.asarray(vec, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Sentence:
    """One embedded sentence of a class document."""

    sentence_id: str
    class_id: str
    section: str
    position: int
    embedding: np.ndarray
    text: str | None = None


@dataclass
class Document:
    """All sentences of one class, ordered by position."""

    class_id: str
    sentences: list[Sentence]

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class Corpus:
    documents: dict[str, Document]
    dimension: int
    metadata: dict = field(default_factory=dict)

    def classes(self) -> list[str]:
        return sorted(self.documents)

    def sentence_count(self) -> int:
        return sum(len(doc) for doc in self.documents.values())

    def iter_sentences(self) -> Iterator[Sentence]:
        """Deterministic order: classes sorted, sentences by position."""
        for class_id in self.classes():
            yield from self.documents[class_id].sentences

    def sentence_matrix(self) -> tuple[list[str], np.ndarray]:
        """All embeddings stacked in iter_sentences order."""
        ids, rows = [], []
        for sent in self.iter_sentences():
            ids.append(sent.sentence_id)
            rows.append(sent.embedding)
        return ids, np.asarray(rows, dtype=np.float64)

    def sentences_by_id(self) -> dict[str, Sentence]:
        return {s.sentence_id: s for s in self.iter_sentences()}

    def section_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for sent in self.iter_sentences():
            counts[sent.section] = counts.get(sent.section, 0) + 1
        return counts


@dataclass
class ClassSplit:
    seen: set[str]
    unseen: set[str]
    hop_tags: dict[str, str] | None = None

    def __post_init__(self):
        overlap = self.seen & self.unseen
        if overlap:
            raise ValidationError(f"seen/unseen overlap: {sorted(overlap)}")
        if self.hop_tags is not None:
            universe = self.seen | self.unseen
            for class_id, tag in self.hop_tags.items():
                if class_id not in universe:
                    raise ValidationError(f"hop tag for unknown class {class_id!r}")
                if tag not in HOP_TAGS:
                    raise ValidationError(
                        f"bad hop tag {tag!r} for {class_id!r}; expected one of {HOP_TAGS}"
                    )


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    class_id: str
    features: np.ndarray


def ingest_corpus(path: str | os.PathLike) -> Corpus:
    """Load and validate a JSONL sentence corpus.

    Dimension is inferred from the first record; every later record must
    match it. Rejects duplicate sentence ids, duplicate positions within a
    class, and non-finite embedding entries, always naming the line.
    """
    by_class: dict[str, list[Sentence]] = {}
    seen_ids: dict[str, int] = {}
    dimension: int | None = None
    n_records = 0

    for lineno, rec in iter_jsonl(path):
        n_records += 1
        try:
            sentence_id = rec["sentence_id"]
            class_id = rec["class_id"]
            section = rec["section"]
            position = rec["position"]
            embedding = rec["embedding"]
        except KeyError as exc:
            raise ValidationError(f"missing key {exc.args[0]!r} at line {lineno}") from exc
        if not isinstance(sentence_id, str) or not isinstance(class_id, str):
            raise ValidationError(f"sentence_id/class_id must be strings at line {lineno}")
        if not isinstance(position, int) or position < 0:
            raise ValidationError(f"position must be a non-negative integer at line {lineno}")
        if not isinstance(embedding, list) or not embedding:
            raise ValidationError(f"embedding must be a non-empty array at line {lineno}")
        if sentence_id in seen_ids:
            raise ValidationError(
                f"duplicate sentence_id {sentence_id!r} at line {lineno}"
                f" (first seen at line {seen_ids[sentence_id]})"
            )
        seen_ids[sentence_id] = lineno

        vec = np.asarray(embedding, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError(f"embedding must be a flat array at line {lineno}")
        if dimension is None:
            dimension = vec.shape[0]
        elif vec.shape[0] != dimension:
            raise ValidationError(
                f"dimension mismatch at line {lineno}: expected {dimension}, got {vec.shape[0]}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"non-finite embedding value at line {lineno}")

        text = rec.get("text")
        if text is not None and not isinstance(text, str):
            raise ValidationError(f"text must be a string when present at line {lineno}")

        by_class.setdefault(class_id, []).append(
            Sentence(sentence_id, class_id, section, position, _freeze(vec), text)
        )

    if n_records == 0:
        raise ValidationError(f"empty corpus file: {path}")

    documents: dict[str, Document] = {}
    for class_id, sentences in by_class.items():
        positions = [s.position for s in sentences]
        if len(set(positions)) != len(positions):
            dupes = sorted({p for p in positions if positions.count(p) > 1})
            raise ValidationError(
                f"duplicate position(s) {dupes} within class {class_id!r}"
            )
        sentences.sort(key=lambda s: s.position)
        documents[class_id] = Document(class_id, sentences)

    assert dimension is not None
    return Corpus(documents=documents, dimension=dimension)


def export_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    """Write a corpus back to JSONL. ingest(export(c)) reproduces c bit-exactly."""

    def rows():
        for sent in corpus.iter_sentences():
            row = {
                "sentence_id": sent.sentence_id,
                "class_id": sent.class_id,
                "section": sent.section,
                "position": sent.position,
                "embedding": [float(x) for x in sent.embedding],
            }
            if sent.text is not None:
                row["text"] = sent.text
            yield row

    write_jsonl(path, rows())


def ingest_images(path: str | os.PathLike, split: ClassSplit | None = None) -> list[ImageRecord]:
    """Load JSONL image feature records, optionally validating class ids against a split."""
    records: list[ImageRecord] = []
    seen_ids: set[str] = set()
    dim: int | None = None
    known = (split.seen | split.unseen) if split is not None else None

    for lineno, rec in iter_jsonl(path):
        try:
            image_id = rec["image_id"]
            class_id = rec["class_id"]
            features = rec["features"]
        except KeyError as exc:
            raise ValidationError(f"missing key {exc.args[0]!r} at line {lineno}") from exc
        if image_id in seen_ids:
            raise ValidationError(f"duplicate image_id {image_id!r} at line {lineno}")
        seen_ids.add(image_id)
        if known is not None and class_id not in known:
            raise ValidationError(
                f"unknown class {class_id!r} at line {lineno}: not in the supplied split"
            )
        vec = np.asarray(features, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValidationError(f"features must be a non-empty flat array at line {lineno}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ValidationError(
                f"dimension mismatch at line {lineno}: expected {dim}, got {vec.shape[0]}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValidationError(f"non-finite feature value at line {lineno}")
        records.append(ImageRecord(image_id, class_id, _freeze(vec)))

    if not records:
        raise ValidationError(f"empty image file: {path}")
    return records


def export_images(records: list[ImageRecord], path: str | os.PathLike) -> None:
    write_jsonl(
        path,
        (
            {
                "image_id": r.image_id,
                "class_id": r.class_id,
                "features": [float(x) for x in r.features],
            }
            for r in records
        ),
    )


def ingest_split(path: str | os.PathLike) -> ClassSplit:
    """Load a JSON class split: {"seen": [...], "unseen": [...], "hops": {...}}."""
    raw = read_json(path)
    if not isinstance(raw, dict) or "seen" not in raw or "unseen" not in raw:
        raise ValidationError(f"split file {path} must contain 'seen' and 'unseen' arrays")
    seen = set(raw["seen"])
    unseen = set(raw["unseen"])
    if len(seen) != len(raw["seen"]) or len(unseen) != len(raw["unseen"]):
        raise ValidationError("duplicate class ids inside a split list")
    hops = raw.get("hops")
    return ClassSplit(seen=seen, unseen=unseen, hop_tags=dict(hops) if hops else None)


def export_split(split: ClassSplit, path: str | os.PathLike) -> None:
    from .fileio import atomic_write_json

    payload: dict = {"seen": sorted(split.seen), "unseen": sorted(split.unseen)}
    if split.hop_tags is not None:
        payload["hops"] = dict(sorted(split.hop_tags.items()))
    atomic_write_json(Path(path), payload)
