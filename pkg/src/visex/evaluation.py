"""Accuracy metrics: per-class Top-1, hop-task breakdowns, and generalized U/S/H.

Per-class Top-1 averages accuracy within each test class first, then across
classes — imbalanced classes cannot dominate, which is the reason the metric
exists. Per-sample Top-1 (plain fraction correct) is reported alongside it.
The generalized setting scores every test image against seen and unseen
candidates together and summarizes with the harmonic mean H = 2US/(U+S).
"""

from __future__ import annotations

import os
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .corpus import HOP_TAGS, ClassSplit, ImageRecord
from .errors import ValidationError
from .fileio import atomic_write_json
from .representations import Representation
from .zsl import DeviseModel, predict_batch


@dataclass
class EvalReport:
    split_name: str
    per_class: dict[str, float]
    per_class_top1: float
    per_sample_top1: float
    n_images: int
    gzsl: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "split_name": self.split_name,
            "per_class": {c: self.per_class[c] for c in sorted(self.per_class)},
            "per_class_top1": self.per_class_top1,
            "per_sample_top1": self.per_sample_top1,
            "n_images": self.n_images,
        }
        if self.gzsl is not None:
            out["gzsl"] = {k: self.gzsl[k] for k in ("U", "S", "H")}
        return out


def harmonic_mean(u: float, s: float) -> float:
    """H = 2US/(U+S); zero when both sides are zero."""
    if u < 0 or s < 0:
        raise ValidationError("accuracies must be non-negative")
    if u + s == 0:
        return 0.0
    return 2.0 * u * s / (u + s)


def _tally(predictions: list[str], labels: list[str]) -> tuple[dict[str, float], float]:
    correct: dict[str, int] = defaultdict(int)
    total: dict[str, int] = defaultdict(int)
    for pred, truth in zip(predictions, labels):
        total[truth] += 1
        if pred == truth:
            correct[truth] += 1
    per_class = {c: correct[c] / total[c] for c in total}
    per_sample = sum(correct.values()) / len(labels)
    return per_class, per_sample


def evaluate(model: DeviseModel, images: list[ImageRecord],
             representations: dict[str, Representation],
             candidates: list[str] | set[str], split: ClassSplit,
             split_name: str = "unseen") -> EvalReport:
    """Score test images against a candidate set and tally both Top-1 metrics.

    Candidate classes without any test image are excluded from the per-class
    mean (with a warning); they cannot contribute an accuracy.
    """
    if not images:
        raise ValidationError("empty test set")
    universe = split.seen | split.unseen
    outside = sorted({im.class_id for im in images} - universe)
    if outside:
        raise ValidationError(
            f"test images from class(es) outside the split: {', '.join(outside)}"
        )
    cand = sorted(candidates)
    missing = [c for c in cand if c not in representations]
    if missing:
        raise ValidationError(f"missing representation for label(s): {', '.join(missing)}")

    X = np.stack([im.features for im in images])
    labels = [im.class_id for im in images]
    predictions = predict_batch(model, X, cand, representations)
    per_class, per_sample = _tally(predictions, labels)

    empty = sorted(set(cand) - set(per_class))
    if empty:
        warnings.warn(
            f"{len(empty)} candidate class(es) have no test images and are "
            f"excluded from the per-class mean: {', '.join(empty[:5])}"
            + ("..." if len(empty) > 5 else ""),
            RuntimeWarning, stacklevel=2,
        )
    per_class_top1 = float(np.mean(list(per_class.values())))
    return EvalReport(split_name=split_name, per_class=per_class,
                      per_class_top1=per_class_top1, per_sample_top1=per_sample,
                      n_images=len(images))


def evaluate_gzsl(model: DeviseModel, seen_images: list[ImageRecord],
                  unseen_images: list[ImageRecord],
                  representations: dict[str, Representation],
                  split: ClassSplit) -> EvalReport:
    """Generalized evaluation: all test images vs the union candidate set."""
    if not seen_images or not unseen_images:
        raise ValidationError("empty test set")
    cand = split.seen | split.unseen
    # each side is scored against the union candidates, so the other side's
    # classes never have test images here — that is the definition, not a
    # data problem worth warning about
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*no test images.*",
                                category=RuntimeWarning)
        unseen_report = evaluate(model, unseen_images, representations, cand,
                                 split, split_name="gzsl-unseen")
        seen_report = evaluate(model, seen_images, representations, cand,
                               split, split_name="gzsl-seen")
    u = unseen_report.per_class_top1
    s = seen_report.per_class_top1
    per_class = dict(unseen_report.per_class)
    per_class.update(seen_report.per_class)
    n_total = len(seen_images) + len(unseen_images)
    correct_total = (unseen_report.per_sample_top1 * len(unseen_images)
                     + seen_report.per_sample_top1 * len(seen_images))
    return EvalReport(
        split_name="gzsl",
        per_class=per_class,
        per_class_top1=float(np.mean(list(per_class.values()))),
        per_sample_top1=correct_total / n_total,
        n_images=n_total,
        gzsl={"U": u, "S": s, "H": harmonic_mean(u, s)},
    )


# Task name → hop tags whose classes belong to it (tasks nest outward).
HOP_TASKS = {
    "2-hop": ("2-hop",),
    "3-hop": ("2-hop", "3-hop"),
    "all": HOP_TAGS,
}


def hop_breakdown(model: DeviseModel, images: list[ImageRecord],
                  representations: dict[str, Representation],
                  split: ClassSplit) -> dict[str, EvalReport]:
    """One unseen-class report per hop task, candidates restricted per task.

    A class tagged "2-hop" belongs to every task; "3-hop" to 3-hop and all;
    "all" only to all. Tasks with no classes are omitted.
    """
    if split.hop_tags is None:
        raise ValidationError("split has no hop tags")
    untagged = sorted(split.unseen - set(split.hop_tags))
    if untagged:
        raise ValidationError(f"untagged unseen class(es): {', '.join(untagged)}")

    reports: dict[str, EvalReport] = {}
    for task, tags in HOP_TASKS.items():
        members = {c for c in split.unseen if split.hop_tags[c] in tags}
        if not members:
            continue
        task_images = [im for im in images if im.class_id in members]
        if not task_images:
            warnings.warn(f"hop task {task!r} has classes but no test images",
                          RuntimeWarning, stacklevel=2)
            continue
        reports[task] = evaluate(model, task_images, representations, members,
                                 split, split_name=task)
    return reports


def save_report(report: EvalReport | dict[str, EvalReport],
                path: str | os.PathLike) -> None:
    if isinstance(report, EvalReport):
        payload: dict = report.to_dict()
    else:
        payload = {name: rep.to_dict() for name, rep in report.items()}
    atomic_write_json(path, payload)
