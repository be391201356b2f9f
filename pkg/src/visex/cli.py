"""Command-line entry points.

Every subcommand validates inputs, writes machine-readable results to files
(or stdout where a file makes no sense), and logs progress to stderr.
Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__, cluster, filtering, representations, zsl
from .corpus import ingest_corpus, ingest_images, ingest_split
from .errors import PipelineStageError, ValidationError
from .evaluation import evaluate, evaluate_gzsl, hop_breakdown, save_report
from .fileio import atomic_write_json
from .fixture import FixtureSpec, generate_fixture
from .pipeline import PipelineConfig, run_pipeline, run_sweep
from .triage import TriageStore, serve_triage

logger = logging.getLogger("visex")


def _emit(payload: dict, out: str | None) -> None:
    if out:
        atomic_write_json(out, payload)
        logger.info("wrote %s", out)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    corpus = ingest_corpus(args.corpus)
    summary = {
        "classes": len(corpus.classes()),
        "sentences": corpus.sentence_count(),
        "dimension": corpus.dimension,
        "sections": len(corpus.section_counts()),
    }
    split = None
    if args.split:
        split = ingest_split(args.split)
        summary["seen"] = len(split.seen)
        summary["unseen"] = len(split.unseen)
    if args.images:
        images = ingest_images(args.images, split=split)
        summary["images"] = len(images)
        summary["image_dimension"] = int(images[0].features.shape[0])
    _emit(summary, args.out)
    return 0


def cmd_cluster(args) -> int:
    corpus = ingest_corpus(args.corpus)
    model = cluster.kmeans_fit(corpus, args.k, seed=args.seed,
                               max_iter=args.max_iter, normalize=args.normalize)
    cluster.save_cluster_model(model, args.out)
    logger.info("k=%d objective=%.6f iterations=%d model_id=%s",
                model.n_clusters, model.objective, model.iterations_run,
                model.model_id[:12])
    if args.summary:
        summaries = cluster.summarize_clusters(model, corpus,
                                               n_exemplars=args.exemplars)
        payload = {
            "model_id": model.model_id,
            "objective": model.objective,
            "clusters": [
                {
                    "cluster_index": s.cluster_index,
                    "size": s.size,
                    "top_sections": s.top_sections,
                    "exemplars": [
                        {"sentence_id": e.sentence_id, "class_id": e.class_id,
                         "text": e.text, "distance": e.distance}
                        for e in s.exemplars
                    ],
                }
                for s in summaries
            ],
        }
        atomic_write_json(args.summary, payload)
    return 0


def cmd_serve(args) -> int:
    corpus = ingest_corpus(args.corpus)
    model = cluster.load_cluster_model(args.model) if args.model else None
    store = TriageStore(args.labels, corpus, cluster_model=model)
    serve_triage(corpus, model, store, host=args.host, port=args.port,
                 recompute_dir=args.recompute_dir, ui_dir=args.ui)
    return 0


def cmd_filter(args) -> int:
    corpus = ingest_corpus(args.corpus)
    labels = None
    model = None
    mode = filtering.FilterMode(args.mode)
    if args.labels:
        from .triage import load_labels

        labels = load_labels(args.labels)
    if args.model:
        model = cluster.load_cluster_model(args.model)
    filtered = filtering.apply_filter(corpus, mode, labels=labels,
                                      cluster_model=model)
    filtering.save_filtered(filtered, args.out)
    stats = filtering.filter_stats(filtered, corpus)
    logger.info("mode=%s kept %d/%d sentences (%.1f%%), %d fallback class(es)",
                mode.value, stats["kept"], stats["total"],
                100.0 * stats["retention"], len(stats["fallback_classes"]))
    if args.stats:
        atomic_write_json(args.stats, stats)
    return 0


def cmd_repr(args) -> int:
    corpus = ingest_corpus(args.corpus)
    filtered = filtering.load_filtered(args.filtered, corpus)
    if args.kind == "average":
        reprs = representations.build_representations(corpus, filtered, "average")
    elif args.kind == "weighted":
        config = representations.ReprTrainConfig(
            epsilon=args.epsilon, tau=args.tau, lr=args.lr,
            epochs_init=args.epochs_init, epochs_margin=args.epochs_margin,
            pair_batch=args.pair_batch, seed=args.seed,
            include_count_factor=not args.no_count_factor)
        net, logs = representations.train_weightnet(
            corpus, filtered, config, hidden=tuple(args.hidden))
        for log in logs:
            final = log.losses[-1] if log.losses else 0.0
            logger.info("%s phase: %d epoch(s), final loss %.6f%s",
                        log.phase, len(log.losses), final,
                        " (stopped at zero)" if log.stopped_at_zero else "")
        reprs = representations.build_representations(
            corpus, filtered, "weighted", net=net,
            include_count_factor=not args.no_count_factor)
        if args.net_out:
            representations.save_weightnet(net, args.net_out)
    else:
        raise ValidationError(f"unknown kind {args.kind!r}")
    representations.save_representations(reprs, args.out)
    logger.info("wrote %d representations to %s", len(reprs), args.out)
    return 0


def cmd_train(args) -> int:
    reprs = representations.load_representations(args.repr)
    split = ingest_split(args.split)
    images = ingest_images(args.images, split=split)
    d_v = int(images[0].features.shape[0])
    d = reprs[next(iter(reprs))].dimension
    config = zsl.ZslTrainConfig(
        margin=args.margin, lr=args.lr, epochs=args.epochs,
        batch_size=args.batch_size,
        negatives="all" if args.negatives == "all" else int(args.negatives),
        seed=args.seed)
    model = zsl.DeviseModel.create(d_v, d, star=not args.plain,
                                   margin=args.margin, latent=args.latent,
                                   hidden=args.hidden,
                                   rng=np.random.default_rng(args.seed))
    seen_reprs = {c: r for c, r in reprs.items() if c in split.seen}
    model, log = zsl.train_devise(model, images, seen_reprs, split, config)
    zsl.save_model(model, args.out, config=config)
    logger.info("trained %d epoch(s), final loss %.6f; wrote %s",
                len(log.epoch_losses), log.final_loss, args.out)
    return 0


def cmd_eval(args) -> int:
    model = zsl.load_model(args.model)
    reprs = representations.load_representations(args.repr)
    split = ingest_split(args.split)
    images = ingest_images(args.images, split=split)
    unseen_test = [im for im in images if im.class_id in split.unseen]
    reports = {}
    if args.candidates == "unseen":
        reports["unseen"] = evaluate(model, unseen_test, reprs, split.unseen,
                                     split, split_name="unseen")
    else:
        seen_test = [im for im in images if im.class_id in split.seen]
        reports["gzsl"] = evaluate_gzsl(model, seen_test, unseen_test, reprs,
                                        split)
    if args.hops:
        reports.update(hop_breakdown(model, unseen_test, reprs, split))
    save_report(reports, args.out)
    for name, report in reports.items():
        line = (f"{name}: per-class {100 * report.per_class_top1:.2f}% "
                f"per-sample {100 * report.per_sample_top1:.2f}%")
        if report.gzsl:
            line += (f" U={100 * report.gzsl['U']:.2f}"
                     f" S={100 * report.gzsl['S']:.2f}"
                     f" H={100 * report.gzsl['H']:.2f}")
        logger.info("%s", line)
    return 0


def cmd_pipeline(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    result = run_pipeline(config)
    logger.info("pipeline complete: unseen per-class top-1 %.2f%%; manifest %s",
                100 * result.report.per_class_top1, result.paths["manifest"])
    return 0


def cmd_fixture(args) -> int:
    spec = FixtureSpec(
        n_classes=args.classes, seen_fraction=args.seen_fraction,
        sentences_per_class=args.sentences, visual_fraction=args.visual_fraction,
        noise=args.noise, seed=args.seed, dimension=args.dimension,
        train_images_per_class=args.train_images,
        test_images_per_class=args.test_images)
    fixture = generate_fixture(spec, out_dir=args.out)
    logger.info("fixture: %d classes (%d seen), %d sentences, %d/%d images → %s",
                spec.n_classes, spec.n_seen, fixture.corpus.sentence_count(),
                len(fixture.train_images), len(fixture.test_images), args.out)
    return 0


def cmd_sweep(args) -> int:
    config = PipelineConfig.from_file(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    results = run_sweep(config, args.param, args.values)
    for value in results:
        logger.info("%s=%s → unseen per-class top-1 %.2f%%", args.param, value,
                    100 * results[value]["unseen_per_class_top1"])
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visex",
        description="Visual-sentence extraction and zero-shot alignment toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpus/images/split files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--images")
    p.add_argument("--split")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="fit k-means over all sentence embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize embeddings before clustering")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="also write exemplar summaries to this file")
    p.add_argument("--exemplars", type=int, default=5)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("serve", help="run the triage HTTP service")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", help="cluster model JSON (omit for sections only)")
    p.add_argument("--labels", required=True, help="labels JSON (created if absent)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--recompute-dir", help="where POST /recompute writes artifacts")
    p.add_argument("--ui", help="directory of built frontend assets to serve")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("filter", help="apply a sentence filter mode")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", required=True,
                   choices=[m.value for m in filtering.FilterMode])
    p.add_argument("--labels", help="triage labels JSON")
    p.add_argument("--model", help="cluster model JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="also write retention statistics to this file")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("repr", help="build class representations")
    p.add_argument("--corpus", required=True)
    p.add_argument("--filtered", required=True)
    p.add_argument("--kind", default="average", choices=["average", "weighted"])
    p.add_argument("--epsilon", type=float, default=0.9)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--epochs-init", type=int, default=500)
    p.add_argument("--epochs-margin", type=int, default=500)
    p.add_argument("--pair-batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=_int_list, default=[256, 256],
                   help="comma-separated hidden widths of the weight network")
    p.add_argument("--no-count-factor", action="store_true",
                   help="drop the leading 1/m factor from weighted vectors")
    p.add_argument("--out", required=True)
    p.add_argument("--net-out", help="save the trained weight network here")
    p.set_defaults(func=cmd_repr)

    p = sub.add_parser("train", help="train the ranking alignment model")
    p.add_argument("--repr", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--negatives", default="all",
                   help='"all" or a sample count per example')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plain", action="store_true",
                   help="identity f and g instead of two-hidden-layer MLPs")
    p.add_argument("--latent", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--repr", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--candidates", default="unseen", choices=["unseen", "all"])
    p.add_argument("--hops", action="store_true",
                   help="also report per-hop-task accuracies")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run ingest→cluster→filter→repr→train→eval")
    p.add_argument("--config", required=True, help="TOML or JSON config file")
    p.add_argument("--out-dir", help="override the config's output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("fixture", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--seen-fraction", type=float, default=0.75)
    p.add_argument("--sentences", type=int, default=30)
    p.add_argument("--visual-fraction", type=float, default=0.4)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--train-images", type=int, default=20)
    p.add_argument("--test-images", type=int, default=10)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("sweep", help="re-run the pipeline across a parameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True,
                   choices=["tau", "margin", "lr", "epsilon", "k"])
    p.add_argument("--values", type=_float_list, required=True,
                   help="comma-separated grid values")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineStageError as exc:
        logger.error("%s", exc)
        return 1 if isinstance(exc.cause, ValidationError) else 2
    except ValidationError as exc:
        logger.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        logger.error("interrupted")
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps to exit code
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
