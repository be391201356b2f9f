"""End-to-end orchestration: ingest → cluster → filter → repr → train → eval.

Every run writes its intermediate artifacts plus a manifest that ties each
output file to the sha256 of every input it was derived from and the seeds
in play. The manifest uses canonical JSON (sorted keys, fixed float repr,
no timestamps, basenames instead of absolute paths), so two runs of the
same configuration produce byte-identical manifests — the reproducibility
contract the test suite enforces.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster as cluster_mod
from . import filtering, representations, zsl
from .corpus import Corpus, ingest_corpus, ingest_images, ingest_split
from .errors import PipelineStageError, ValidationError
from .evaluation import EvalReport, evaluate, evaluate_gzsl, hop_breakdown, save_report
from .fileio import atomic_write_text, canonical_json, read_json, sha256_file
from .fixture import load_manifest, make_auto_labels
from .triage import TriageLabels, load_labels, save_labels

logger = logging.getLogger(__name__)

REPR_KINDS = ("average", "weighted", "weighted_direct", "external")


@dataclass
class PipelineConfig:
    corpus_path: str = ""
    train_images_path: str = ""
    test_images_path: str = ""
    split_path: str = ""
    out_dir: str = ""
    labels_path: str | None = None
    auto_label_manifest: str | None = None
    external_repr_path: str | None = None

    mode: str = "no"
    repr_kind: str = "average"

    k: int = 100
    normalize_clusters: bool = False
    cluster_seed: int = 0

    epsilon: float = 0.9
    tau: float = 0.95
    repr_lr: float = 2e-4
    epochs_init: int = 500
    epochs_margin: int = 500
    pair_batch: int = 256
    repr_seed: int = 0
    include_count_factor: bool = True
    weightnet_hidden: list[int] = field(default_factory=lambda: [256, 256])

    margin: float = 0.2
    lr: float = 2e-4
    epochs: int = 100
    batch_size: int = 64
    negatives: int | str = "all"
    train_seed: int = 0
    star: bool = True
    latent: int | None = None
    hidden: int | None = None

    eval_gzsl: bool = False
    eval_hops: bool = False

    def __post_init__(self):
        for name in ("corpus_path", "train_images_path", "test_images_path",
                     "split_path", "out_dir"):
            if not getattr(self, name):
                raise ValidationError(f"config field {name!r} is required")
        try:
            self.mode = str(filtering.FilterMode(self.mode).value)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        if self.repr_kind not in REPR_KINDS:
            raise ValidationError(
                f"unknown repr kind {self.repr_kind!r}; expected one of {REPR_KINDS}"
            )
        if self.repr_kind == "external" and not self.external_repr_path:
            raise ValidationError("repr_kind=external requires external_repr_path")
        if self.k < 1:
            raise ValidationError(f"K must be >= 1, got {self.k}")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "PipelineConfig":
        p = Path(path)
        if p.suffix == ".toml":
            import tomli

            with open(p, "rb") as fh:
                raw = tomli.load(fh)
        else:
            raw = read_json(p)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**raw)

    def to_manifest_dict(self) -> dict:
        """Config echo with paths reduced to basenames (manifest stability).

        The output directory is omitted entirely: two runs of the same
        configuration into different directories must produce byte-identical
        manifests, and every artifact is already recorded by name and hash.
        """
        out = dataclasses.asdict(self)
        del out["out_dir"]
        for name in ("corpus_path", "train_images_path", "test_images_path",
                     "split_path", "labels_path",
                     "auto_label_manifest", "external_repr_path"):
            if out[name]:
                out[name] = Path(out[name]).name
        return out


@dataclass
class PipelineResult:
    manifest: dict
    report: EvalReport
    paths: dict[str, str]


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(name, exc) from exc


def _needs_clusters(mode: str) -> bool:
    return mode in {m.value for m in filtering.CLUSTER_MODES}


def _needs_labels(mode: str) -> bool:
    cluster_or_section = ({m.value for m in filtering.CLUSTER_MODES}
                          | {m.value for m in filtering.SECTION_MODES})
    return mode in cluster_or_section


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"config": config.to_manifest_dict(), "stages": {},
                      "results": {}}
    paths: dict[str, str] = {}

    def record(stage: str, inputs: dict[str, str | os.PathLike],
               outputs: dict[str, str | os.PathLike], **extra) -> None:
        manifest["stages"][stage] = {
            "inputs": {k: sha256_file(v) for k, v in sorted(inputs.items())},
            "outputs": {Path(v).name: sha256_file(v) for v in outputs.values()},
            **extra,
        }
        paths.update({k: str(v) for k, v in outputs.items()})

    with _stage("ingest"):
        corpus = ingest_corpus(config.corpus_path)
        split = ingest_split(config.split_path)
        train_images = ingest_images(config.train_images_path, split=split)
        test_images = ingest_images(config.test_images_path, split=split)
        record("ingest",
               {"corpus": config.corpus_path, "split": config.split_path,
                "train_images": config.train_images_path,
                "test_images": config.test_images_path},
               {})

    cluster_model = None
    if _needs_clusters(config.mode):
        with _stage("cluster"):
            cluster_model = cluster_mod.kmeans_fit(
                corpus, config.k, seed=config.cluster_seed,
                normalize=config.normalize_clusters)
            model_path = out / "cluster_model.json"
            cluster_mod.save_cluster_model(cluster_model, model_path)
            record("cluster", {"corpus": config.corpus_path},
                   {"cluster_model": model_path},
                   seed=config.cluster_seed, k=config.k,
                   objective=cluster_model.objective,
                   model_id=cluster_model.model_id)

    labels: TriageLabels | None = None
    if _needs_labels(config.mode):
        with _stage("labels"):
            if config.labels_path:
                labels = load_labels(config.labels_path)
                label_source = {"labels": config.labels_path}
            elif config.auto_label_manifest:
                truth = load_manifest(config.auto_label_manifest)
                labels = make_auto_labels(corpus, truth, model=cluster_model)
                label_source = {"ground_truth": config.auto_label_manifest}
            else:
                raise ValidationError("triage labels required")
            labels_out = out / "labels.json"
            save_labels(labels, labels_out)
            record("labels", label_source, {"labels": labels_out})

    with _stage("filter"):
        filtered = filtering.apply_filter(corpus, config.mode, labels=labels,
                                          cluster_model=cluster_model)
        filtered_path = out / "filtered.jsonl"
        filtering.save_filtered(filtered, filtered_path)
        stats = filtering.filter_stats(filtered, corpus)
        record("filter", {"corpus": config.corpus_path},
               {"filtered": filtered_path},
               mode=config.mode, kept=stats["kept"], total=stats["total"],
               fallback_classes=stats["fallback_classes"])

    weightnet = None
    with _stage("repr"):
        repr_inputs: dict[str, str | os.PathLike] = {"filtered": filtered_path}
        repr_extra: dict = {"kind": config.repr_kind}
        if config.repr_kind == "external":
            reprs = representations.ingest_external_representations(
                config.external_repr_path)
            repr_inputs["external"] = config.external_repr_path
        elif config.repr_kind == "weighted":
            repr_config = representations.ReprTrainConfig(
                epsilon=config.epsilon, tau=config.tau, lr=config.repr_lr,
                epochs_init=config.epochs_init, epochs_margin=config.epochs_margin,
                pair_batch=config.pair_batch, seed=config.repr_seed,
                include_count_factor=config.include_count_factor)
            weightnet, logs = representations.train_weightnet(
                corpus, filtered, repr_config,
                hidden=tuple(config.weightnet_hidden))
            reprs = representations.build_representations(
                corpus, filtered, "weighted", net=weightnet,
                include_count_factor=config.include_count_factor)
            repr_extra.update(
                seed=config.repr_seed, epsilon=config.epsilon, tau=config.tau,
                phase_epochs=[len(log.losses) for log in logs],
                final_losses=[log.losses[-1] if log.losses else 0.0
                              for log in logs])
        elif config.repr_kind == "weighted_direct":
            # Trained jointly with the ranking loss in the train stage below;
            # start from plain averages so that stage can see the matrices.
            reprs = representations.build_representations(corpus, filtered,
                                                          "average")
            repr_extra.update(seed=config.repr_seed)
        else:
            reprs = representations.build_representations(corpus, filtered,
                                                          "average")
        repr_path = out / "representations.jsonl"
        repr_outputs: dict[str, str | os.PathLike] = {"representations": repr_path}
        if weightnet is not None:
            net_path = out / "weightnet.json"
            representations.save_weightnet(weightnet, net_path)
            repr_outputs["weightnet"] = net_path
        if config.repr_kind != "weighted_direct":
            representations.save_representations(reprs, repr_path)
            record("repr", repr_inputs, repr_outputs, **repr_extra)

    with _stage("train"):
        d_v = train_images[0].features.shape[0]
        train_config = zsl.ZslTrainConfig(
            margin=config.margin, lr=config.lr, epochs=config.epochs,
            batch_size=config.batch_size, negatives=config.negatives,
            seed=config.train_seed, joint=config.repr_kind == "weighted_direct")
        if train_config.joint:
            matrices = representations.class_matrices(corpus, filtered)
            d = corpus.dimension
            joint_net = representations.WeightNet(
                d, hidden=tuple(config.weightnet_hidden),
                rng=np.random.default_rng(config.repr_seed))
            model = zsl.DeviseModel.create(
                d_v, d, star=config.star, margin=config.margin,
                latent=config.latent, hidden=config.hidden,
                rng=np.random.default_rng(config.train_seed))
            seen_matrices = {c: matrices[c] for c in sorted(split.seen)}
            model, log = zsl.train_devise(
                model, train_images, None, split, train_config,
                joint_net=joint_net, class_matrices=seen_matrices,
                include_count_factor=config.include_count_factor)
            weightnet = joint_net
            reprs = representations.build_representations(
                corpus, filtered, "weighted_direct", net=joint_net,
                include_count_factor=config.include_count_factor)
            repr_path = out / "representations.jsonl"
            representations.save_representations(reprs, repr_path)
            net_path = out / "weightnet.json"
            representations.save_weightnet(joint_net, net_path)
            record("repr", {"filtered": filtered_path},
                   {"representations": repr_path, "weightnet": net_path},
                   kind="weighted_direct", seed=config.repr_seed)
        else:
            d = reprs[next(iter(reprs))].dimension
            model = zsl.DeviseModel.create(
                d_v, d, star=config.star, margin=config.margin,
                latent=config.latent, hidden=config.hidden,
                rng=np.random.default_rng(config.train_seed))
            seen_reprs = {c: r for c, r in reprs.items() if c in split.seen}
            model, log = zsl.train_devise(model, train_images, seen_reprs,
                                          split, train_config)
        model_path = out / "model.json"
        zsl.save_model(model, model_path, config=train_config)
        record("train", {"representations": repr_path,
                         "train_images": config.train_images_path},
               {"model": model_path},
               seed=config.train_seed, epochs_run=len(log.epoch_losses),
               final_loss=log.final_loss)

    with _stage("eval"):
        unseen_test = [im for im in test_images if im.class_id in split.unseen]
        report = evaluate(model, unseen_test, reprs, split.unseen, split,
                          split_name="unseen")
        report_path = out / "report.json"
        reports: dict = {"unseen": report}
        manifest["results"]["unseen_per_class_top1"] = report.per_class_top1
        manifest["results"]["unseen_per_sample_top1"] = report.per_sample_top1
        if config.eval_gzsl:
            seen_test = [im for im in test_images if im.class_id in split.seen]
            gz = evaluate_gzsl(model, seen_test, unseen_test, reprs, split)
            reports["gzsl"] = gz
            manifest["results"]["gzsl"] = gz.gzsl
        if config.eval_hops:
            hops = hop_breakdown(model, unseen_test, reprs, split)
            reports.update(hops)
            manifest["results"]["hops"] = {
                name: hops[name].per_class_top1 for name in sorted(hops)}
        save_report(reports, report_path)
        record("eval", {"model": model_path,
                        "test_images": config.test_images_path},
               {"report": report_path})

    manifest_path = out / "manifest.json"
    atomic_write_text(manifest_path, canonical_json(manifest) + "\n")
    paths["manifest"] = str(manifest_path)
    return PipelineResult(manifest=manifest, report=report, paths=paths)


def run_sweep(base: PipelineConfig, param: str, values: list[float]
              ) -> dict[str, dict]:
    """Re-run the pipeline across a parameter grid; one subdirectory each.

    Returns {value: headline results} and writes sweep.json in the base
    out_dir.
    """
    if param not in ("tau", "margin", "lr", "epsilon", "k"):
        raise ValidationError(f"unsupported sweep parameter {param!r}")
    if not values:
        raise ValidationError("empty sweep grid")
    results: dict[str, dict] = {}
    root = Path(base.out_dir)
    for value in values:
        cfg = dataclasses.replace(base)
        setattr(cfg, param, int(value) if param == "k" else value)
        cfg.out_dir = str(root / f"{param}_{value}")
        outcome = run_pipeline(cfg)
        results[str(value)] = outcome.manifest["results"]
    sweep_path = root / "sweep.json"
    atomic_write_text(sweep_path, canonical_json(
        {"param": param, "values": [str(v) for v in values],
         "results": results}) + "\n")
    return results
