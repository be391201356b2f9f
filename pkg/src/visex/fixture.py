"""Synthetic desk-scale fixtures with known ground truth.

Each class gets a latent prototype. Visual sentences are the prototype plus
noise; non-visual sentences come from background topics shared across all
classes, which smears unfiltered class averages together — so filtering to
the visual subset genuinely helps downstream alignment. Image features are
the prototype plus noise, so at zero noise a class's visual-sentence mean
equals its image-feature mean exactly.

The manifest records everything the generator knows (per-sentence visual
flags, the visual section list, prototypes, topics), which lets tests and
the pipeline replay the human triage step mechanically.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cluster import ClusterModel
from .corpus import (HOP_TAGS, SUMMARY_SECTION, ClassSplit, Corpus, Document,
                     ImageRecord, Sentence, export_corpus, export_images,
                     export_split)
from .errors import ValidationError
from .fileio import atomic_write_json, read_json
from .triage import NONVISUAL, VISUAL, TriageLabels

VISUAL_SECTIONS = ("appearance", "description", "morphology", "identification")
NONVISUAL_SECTIONS = ("history", "behavior", "distribution", "taxonomy", "culture")


@dataclass
class FixtureSpec:
    n_classes: int = 20
    seen_fraction: float = 0.75
    sentences_per_class: int = 30
    visual_fraction: float = 0.4
    noise: float = 0.25
    seed: int = 0
    dimension: int = 16
    train_images_per_class: int = 20
    test_images_per_class: int = 10
    n_topics: int = 5
    prototype_scale: float = 3.0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if not 0.0 < self.seen_fraction < 1.0:
            raise ValidationError("seen_fraction must be in (0, 1)")
        n_seen = round(self.n_classes * self.seen_fraction)
        if n_seen < 1 or n_seen >= self.n_classes:
            raise ValidationError(
                f"seen_fraction {self.seen_fraction} leaves no usable split "
                f"for {self.n_classes} classes"
            )
        if self.sentences_per_class < 2:
            raise ValidationError("need at least 2 sentences per class")
        n_vis = round(self.sentences_per_class * self.visual_fraction)
        if n_vis < 1 or n_vis > self.sentences_per_class:
            raise ValidationError(
                f"visual_fraction {self.visual_fraction} yields {n_vis} visual "
                f"sentences of {self.sentences_per_class}"
            )
        if self.noise < 0:
            raise ValidationError("noise must be non-negative")
        if self.dimension < 2:
            raise ValidationError("dimension must be >= 2")
        if self.train_images_per_class < 1 or self.test_images_per_class < 1:
            raise ValidationError("image counts must be >= 1")
        if self.n_topics < 1:
            raise ValidationError("need at least 1 background topic")

    @property
    def n_seen(self) -> int:
        return round(self.n_classes * self.seen_fraction)

    @property
    def n_visual(self) -> int:
        return round(self.sentences_per_class * self.visual_fraction)


@dataclass
class Fixture:
    corpus: Corpus
    train_images: list[ImageRecord]
    test_images: list[ImageRecord]
    split: ClassSplit
    manifest: dict
    paths: dict[str, str]


def _class_name(i: int) -> str:
    return f"class{i:03d}"


def generate_fixture(spec: FixtureSpec,
                     out_dir: str | os.PathLike | None = None) -> Fixture:
    """Build the full synthetic dataset; write files when out_dir is given."""
    rng = np.random.default_rng(spec.seed)
    d = spec.dimension
    classes = [_class_name(i) for i in range(spec.n_classes)]
    seen_classes = classes[:spec.n_seen]
    unseen_classes = classes[spec.n_seen:]

    # Seen prototypes are orthonormal directions (random rotation) when they
    # fit in the embedding space, random units otherwise. Unseen prototypes
    # are mixtures of two seen prototypes (disjoint pairs while they last):
    # a zero-shot class must be expressible through seen semantics, or
    # nothing ties the alignment learned on seen classes to the unseen
    # directions.
    prototypes = {}
    if spec.n_seen <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, spec.n_seen)))
        for i, c in enumerate(seen_classes):
            prototypes[c] = q[:, i] * spec.prototype_scale
    else:
        for c in seen_classes:
            v = rng.standard_normal(d)
            prototypes[c] = v / np.linalg.norm(v) * spec.prototype_scale
    if spec.n_seen >= 2:
        pool: list[int] = []
        for j, c in enumerate(unseen_classes):
            if len(pool) < 2:
                pool = list(rng.permutation(spec.n_seen))
            i1, i2 = pool.pop(), pool.pop()
            v = (0.7 * prototypes[seen_classes[i1]]
                 + 0.3 * prototypes[seen_classes[i2]])
            prototypes[c] = v / np.linalg.norm(v) * spec.prototype_scale
    else:
        for c in unseen_classes:
            v = rng.standard_normal(d)
            prototypes[c] = v / np.linalg.norm(v) * spec.prototype_scale
    topics = rng.standard_normal((spec.n_topics, d))
    topics /= np.linalg.norm(topics, axis=1, keepdims=True)
    topics *= spec.prototype_scale

    visual_flags: dict[str, bool] = {}
    documents: dict[str, Document] = {}
    n_vis = spec.n_visual
    n_nonvis = spec.sentences_per_class - n_vis
    summary_visual = min(2, n_vis)

    for c in classes:
        sentences = []
        sections: list[tuple[str, bool]] = []
        for j in range(n_vis):
            if j < summary_visual:
                sections.append((SUMMARY_SECTION, True))
            else:
                sections.append((VISUAL_SECTIONS[j % len(VISUAL_SECTIONS)], True))
        for j in range(n_nonvis):
            sections.append((NONVISUAL_SECTIONS[j % len(NONVISUAL_SECTIONS)], False))

        # The summary stays at the top of the page; everything else is
        # shuffled so section has no positional correlate.
        body = sections[summary_visual:]
        order = rng.permutation(len(body))
        layout = sections[:summary_visual] + [body[i] for i in order]

        for pos, (section, is_visual) in enumerate(layout):
            sid = f"{c}-s{pos:03d}"
            if is_visual:
                vec = prototypes[c] + spec.noise * rng.standard_normal(d)
                text = f"{c} looks like variant {pos} with distinctive markings"
            else:
                topic = topics[rng.integers(spec.n_topics)]
                vec = topic + spec.noise * rng.standard_normal(d)
                text = f"notes on {section} of {c}, item {pos}"
            visual_flags[sid] = is_visual
            sentences.append(Sentence(sentence_id=sid, class_id=c, section=section,
                                      position=pos, embedding=vec, text=text))
        documents[c] = Document(class_id=c, sentences=sentences)

    corpus = Corpus(documents=documents, dimension=d)

    seen = set(seen_classes)
    unseen = set(unseen_classes)
    hop_tags = {c: HOP_TAGS[min(i * len(HOP_TAGS) // len(unseen_classes),
                                len(HOP_TAGS) - 1)]
                for i, c in enumerate(unseen_classes)}
    split = ClassSplit(seen=seen, unseen=unseen, hop_tags=hop_tags)

    train_images: list[ImageRecord] = []
    test_images: list[ImageRecord] = []
    for c in classes:
        if c in seen:
            for i in range(spec.train_images_per_class):
                vec = prototypes[c] + spec.noise * rng.standard_normal(d)
                train_images.append(ImageRecord(f"{c}-train-{i:03d}", c, vec))
        for i in range(spec.test_images_per_class):
            vec = prototypes[c] + spec.noise * rng.standard_normal(d)
            test_images.append(ImageRecord(f"{c}-test-{i:03d}", c, vec))

    manifest = {
        "spec": asdict(spec),
        "classes": classes,
        "seen": sorted(seen),
        "unseen": sorted(unseen),
        "hop_tags": hop_tags,
        "visual_sections": sorted((SUMMARY_SECTION,) + VISUAL_SECTIONS),
        "nonvisual_sections": sorted(NONVISUAL_SECTIONS),
        "visual_sentences": {sid: visual_flags[sid] for sid in sorted(visual_flags)},
        "prototypes": {c: [float(x) for x in prototypes[c]] for c in classes},
        "topics": [[float(x) for x in t] for t in topics],
        "counts": {
            "sentences": corpus.sentence_count(),
            "train_images": len(train_images),
            "test_images": len(test_images),
        },
    }

    paths: dict[str, str] = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": str(out / "corpus.jsonl"),
            "train_images": str(out / "images_train.jsonl"),
            "test_images": str(out / "images_test.jsonl"),
            "split": str(out / "split.json"),
            "manifest": str(out / "fixture_manifest.json"),
        }
        export_corpus(corpus, paths["corpus"])
        export_images(train_images, paths["train_images"])
        export_images(test_images, paths["test_images"])
        export_split(split, paths["split"])
        atomic_write_json(paths["manifest"], manifest)

    return Fixture(corpus=corpus, train_images=train_images,
                   test_images=test_images, split=split, manifest=manifest,
                   paths=paths)


def load_manifest(path: str | os.PathLike) -> dict:
    return read_json(path)


# ---------------------------------------------------------------------------
# Mechanical triage (replays the human annotator from ground truth)
# ---------------------------------------------------------------------------

def auto_label_sections(corpus: Corpus, manifest: dict) -> dict[str, str]:
    visual = set(manifest["visual_sections"])
    return {name: (VISUAL if name in visual else NONVISUAL)
            for name in corpus.section_counts()}


def auto_label_clusters(model: ClusterModel, corpus: Corpus,
                        manifest: dict) -> dict[int, str]:
    """Majority vote of member sentences' ground-truth visual flags."""
    flags = manifest["visual_sentences"]
    vis = np.zeros(model.n_clusters)
    tot = np.zeros(model.n_clusters)
    for sid, idx in model.assignment.items():
        tot[idx] += 1
        if flags[sid]:
            vis[idx] += 1
    out: dict[int, str] = {}
    for i in range(model.n_clusters):
        if tot[i] == 0:
            out[i] = NONVISUAL
        else:
            out[i] = VISUAL if vis[i] / tot[i] > 0.5 else NONVISUAL
    return out


def make_auto_labels(corpus: Corpus, manifest: dict,
                     model: ClusterModel | None = None) -> TriageLabels:
    """A complete TriageLabels as the ground-truth annotator would produce."""
    labels = TriageLabels(sections=auto_label_sections(corpus, manifest),
                          revision=1)
    if model is not None:
        labels.clusters = auto_label_clusters(model, corpus, manifest)
        labels.cluster_model_id = model.model_id
    return labels


def binary_purity(model: ClusterModel, corpus: Corpus, manifest: dict) -> float:
    """Standard cluster purity against the visual/non-visual ground truth."""
    flags = manifest["visual_sentences"]
    vis = np.zeros(model.n_clusters)
    tot = np.zeros(model.n_clusters)
    for sid, idx in model.assignment.items():
        tot[idx] += 1
        if flags[sid]:
            vis[idx] += 1
    majority = np.maximum(vis, tot - vis)
    return float(majority.sum() / tot.sum())


# ---------------------------------------------------------------------------
# Overlap fixture (two classes sharing most of their sentences)
# ---------------------------------------------------------------------------

def generate_overlap_fixture(n_classes: int = 6, sentences_per_class: int = 20,
                             share_fraction: float = 0.8, noise: float = 0.1,
                             seed: int = 0, dimension: int = 16
                             ) -> tuple[Corpus, tuple[str, str]]:
    """Corpus where the first two classes share `share_fraction` of sentences.

    Shared sentences have identical embeddings under distinct ids, so the two
    class means are nearly parallel while every other pair stays far apart.
    Returns the corpus and the overlapping pair's class ids.
    """
    if n_classes < 3:
        raise ValidationError("need at least 3 classes for an overlap fixture")
    if not 0.0 < share_fraction < 1.0:
        raise ValidationError("share_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    d = dimension
    classes = [_class_name(i) for i in range(n_classes)]
    pair = (classes[0], classes[1])
    n_shared = round(sentences_per_class * share_fraction)
    if n_shared < 1 or n_shared >= sentences_per_class:
        raise ValidationError(f"share_fraction {share_fraction} leaves no "
                              "shared or unique sentences")

    def unit(v):
        return v / np.linalg.norm(v)

    # Mutually orthogonal prototypes keep every non-overlapping pair's cosine
    # pinned near zero, so reweighting the overlapping pair cannot drag other
    # pairs' similarities along with it.
    if n_classes + 1 <= d:
        basis, _ = np.linalg.qr(rng.standard_normal((d, n_classes + 1)))
        shared_proto = basis[:, 0] * 3.0
        protos = {c: basis[:, i + 1] * 1.5 for i, c in enumerate(classes)}
    else:
        shared_proto = unit(rng.standard_normal(d)) * 3.0
        protos = {c: unit(rng.standard_normal(d)) * 1.5 for c in classes}
    shared_vectors = [shared_proto + noise * rng.standard_normal(d)
                      for _ in range(n_shared)]

    documents: dict[str, Document] = {}
    for c in classes:
        sentences = []
        pos = 0
        if c in pair:
            for vec in shared_vectors:
                sentences.append(Sentence(
                    sentence_id=f"{c}-s{pos:03d}", class_id=c,
                    section=SUMMARY_SECTION, position=pos, embedding=vec.copy(),
                    text=f"shared trait {pos}"))
                pos += 1
        while pos < sentences_per_class:
            vec = protos[c] + noise * rng.standard_normal(d)
            sentences.append(Sentence(
                sentence_id=f"{c}-s{pos:03d}", class_id=c,
                section=SUMMARY_SECTION, position=pos, embedding=vec,
                text=f"{c} unique trait {pos}"))
            pos += 1
        documents[c] = Document(class_id=c, sentences=sentences)

    return Corpus(documents=documents, dimension=d), pair
