"""Sentence filtering from triage verdicts, with provenance and retention stats.

Modes mirror the experiment grid: keep everything, visual sections, visual
clusters, their union, first paragraph only, or class-name matches. A class
whose filter comes back empty falls back to its summary sentences, then to
the whole document, so every class keeps a non-empty representation source.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from enum import Enum

from .cluster import ClusterModel
from .corpus import SUMMARY_SECTION, Corpus, Document
from .errors import ValidationError
from .fileio import iter_jsonl, write_jsonl
from .triage import TriageLabels, VISUAL


class FilterMode(str, Enum):
    NO = "no"
    VIS_SEC = "vis-sec"
    VIS_CLU = "vis-clu"
    VIS_SEC_CLU = "vis-sec-clu"
    PAR_1ST = "par-1st"
    CLS_NAME = "cls-name"


CLUSTER_MODES = {FilterMode.VIS_CLU, FilterMode.VIS_SEC_CLU}
SECTION_MODES = {FilterMode.VIS_SEC, FilterMode.VIS_SEC_CLU}


@dataclass(frozen=True)
class KeptSentence:
    sentence_id: str
    by_section: bool = False
    by_cluster: bool = False
    fallback: bool = False


@dataclass
class FilteredDocument:
    class_id: str
    kept: list[KeptSentence]
    mode: FilterMode

    def sentence_ids(self) -> list[str]:
        return [k.sentence_id for k in self.kept]


def _select(document: Document, mode: FilterMode, visual_sections: set[str],
            visual_clusters: set[int], assignment: dict[str, int]) -> list[KeptSentence]:
    kept: list[KeptSentence] = []
    for sent in document.sentences:
        by_section = False
        by_cluster = False
        if mode in SECTION_MODES:
            by_section = sent.section == SUMMARY_SECTION or sent.section in visual_sections
        if mode in CLUSTER_MODES:
            by_cluster = assignment.get(sent.sentence_id) in visual_clusters
        if mode == FilterMode.NO:
            kept.append(KeptSentence(sent.sentence_id))
        elif mode == FilterMode.PAR_1ST:
            if sent.section == SUMMARY_SECTION:
                kept.append(KeptSentence(sent.sentence_id, by_section=True))
        elif mode == FilterMode.CLS_NAME:
            if document.class_id.lower() in (sent.text or "").lower():
                kept.append(KeptSentence(sent.sentence_id))
        elif by_section or by_cluster:
            kept.append(KeptSentence(sent.sentence_id, by_section=by_section,
                                     by_cluster=by_cluster))
    return kept


def _fallback(document: Document) -> list[KeptSentence]:
    summary = [s for s in document.sentences if s.section == SUMMARY_SECTION]
    chosen = summary if summary else document.sentences
    return [KeptSentence(s.sentence_id, fallback=True) for s in chosen]


def apply_filter(corpus: Corpus, mode: FilterMode | str,
                 labels: TriageLabels | None = None,
                 cluster_model: ClusterModel | None = None) -> dict[str, FilteredDocument]:
    """Produce the kept-sentence set for every class under one filter mode.

    Section modes always keep "__summary__" sentences. Union mode keeps the
    deduplicated union of section- and cluster-selected sentences, with
    per-sentence provenance flags (a sentence can carry both).
    """
    mode = FilterMode(mode)

    visual_sections: set[str] = set()
    visual_clusters: set[int] = set()
    assignment: dict[str, int] = {}

    if mode in SECTION_MODES or mode in CLUSTER_MODES:
        if labels is None:
            raise ValidationError(f"mode {mode.value} requires triage labels")
    if mode in SECTION_MODES:
        visual_sections = {s for s, v in labels.sections.items() if v == VISUAL}
        if not visual_sections:
            warnings.warn(
                f"no sections labeled visual; {mode.value} will keep only summaries"
                " and fall back heavily",
                stacklevel=2,
            )
    if mode in CLUSTER_MODES:
        if cluster_model is None:
            raise ValidationError(f"mode {mode.value} requires a cluster model")
        if labels.cluster_model_id != cluster_model.model_id:
            raise ValidationError(
                "triage labels are bound to a different cluster model; relabel clusters"
            )
        visual_clusters = {i for i, v in labels.clusters.items() if v == VISUAL}
        assignment = cluster_model.assignment
        if not visual_clusters:
            warnings.warn(
                f"no clusters labeled visual; {mode.value} selects nothing by cluster",
                stacklevel=2,
            )
    if mode == FilterMode.CLS_NAME:
        missing = [
            s.sentence_id for doc in corpus.documents.values()
            for s in doc.sentences if s.text is None
        ]
        if missing:
            raise ValidationError(
                f"cls-name mode needs sentence text; {len(missing)} sentences lack it"
                f" (e.g. {missing[0]!r})"
            )

    result: dict[str, FilteredDocument] = {}
    for class_id in corpus.classes():
        document = corpus.documents[class_id]
        kept = _select(document, mode, visual_sections, visual_clusters, assignment)
        if not kept:
            kept = _fallback(document)
        result[class_id] = FilteredDocument(class_id=class_id, kept=kept, mode=mode)
    return result


def filter_stats(filtered: dict[str, FilteredDocument], corpus: Corpus) -> dict:
    """Per-class and aggregate retention report with provenance breakdown."""
    per_class = {}
    total_kept = 0
    total_sentences = 0
    fallback_classes = []
    for class_id, fdoc in sorted(filtered.items()):
        n_total = len(corpus.documents[class_id])
        n_kept = len(fdoc.kept)
        by_section = sum(1 for k in fdoc.kept if k.by_section)
        by_cluster = sum(1 for k in fdoc.kept if k.by_cluster)
        fallback = sum(1 for k in fdoc.kept if k.fallback)
        if fallback:
            fallback_classes.append(class_id)
        per_class[class_id] = {
            "kept": n_kept,
            "total": n_total,
            "retention": n_kept / n_total,
            "by_section": by_section,
            "by_cluster": by_cluster,
            "fallback": fallback,
        }
        total_kept += n_kept
        total_sentences += n_total
    return {
        "mode": next(iter(filtered.values())).mode.value if filtered else None,
        "classes": len(filtered),
        "kept": total_kept,
        "total": total_sentences,
        "retention": total_kept / total_sentences if total_sentences else 0.0,
        "fallback_classes": fallback_classes,
        "per_class": per_class,
    }


def save_filtered(filtered: dict[str, FilteredDocument], path: str | os.PathLike) -> None:
    def rows():
        for class_id in sorted(filtered):
            fdoc = filtered[class_id]
            for k in fdoc.kept:
                yield {
                    "class_id": class_id,
                    "sentence_id": k.sentence_id,
                    "by_section": k.by_section,
                    "by_cluster": k.by_cluster,
                    "fallback": k.fallback,
                    "mode": fdoc.mode.value,
                }

    write_jsonl(path, rows())


def load_filtered(path: str | os.PathLike, corpus: Corpus) -> dict[str, FilteredDocument]:
    by_id = corpus.sentences_by_id()
    docs: dict[str, FilteredDocument] = {}
    for lineno, rec in iter_jsonl(path):
        try:
            class_id = rec["class_id"]
            sid = rec["sentence_id"]
            mode = FilterMode(rec["mode"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad filtered record at line {lineno}: {exc}") from exc
        if sid not in by_id or by_id[sid].class_id != class_id:
            raise ValidationError(
                f"filtered sentence {sid!r} not found under class {class_id!r}"
                f" (line {lineno})"
            )
        entry = KeptSentence(
            sentence_id=sid,
            by_section=bool(rec.get("by_section", False)),
            by_cluster=bool(rec.get("by_cluster", False)),
            fallback=bool(rec.get("fallback", False)),
        )
        doc = docs.setdefault(class_id, FilteredDocument(class_id, [], mode))
        if doc.mode != mode:
            raise ValidationError(f"mixed modes for class {class_id!r} (line {lineno})")
        doc.kept.append(entry)
    if not docs:
        raise ValidationError(f"empty filtered file: {path}")
    for class_id, doc in docs.items():
        ids = doc.sentence_ids()
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate kept sentences for class {class_id!r}")
    return docs
