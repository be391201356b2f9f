#!/usr/bin/env python3
"""Sweep the pair-similarity threshold of the weighted-representation phase.

Builds a synthetic dataset, writes a pipeline config, and re-runs the full
pipeline once per threshold value, collecting unseen per-class top-1 for
each. All artifacts land under --out-dir; the grid summary is sweep.json.

Example:
    python3 scripts/sweep_similarity_threshold.py --out-dir /tmp/sweep
"""

import argparse
import logging
import sys
import tempfile
from pathlib import Path

from visex.fixture import FixtureSpec, generate_fixture
from visex.pipeline import PipelineConfig, run_sweep

logger = logging.getLogger("sweep_similarity_threshold")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--param", default="tau",
                        choices=["tau", "margin", "lr", "epsilon", "k"])
    parser.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                        default=[0.90, 0.95, 0.99])
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args(argv)

    out_dir = Path(args.out_dir)
    data_dir = out_dir / "data"
    generate_fixture(FixtureSpec(seed=args.seed, test_images_per_class=20),
                     out_dir=data_dir)

    config = PipelineConfig(
        corpus_path=str(data_dir / "corpus.jsonl"),
        train_images_path=str(data_dir / "images_train.jsonl"),
        test_images_path=str(data_dir / "images_test.jsonl"),
        split_path=str(data_dir / "split.json"),
        out_dir=str(out_dir),
        mode="no", repr_kind="weighted", k=16, cluster_seed=3,
        epochs_init=200, epochs_margin=200, repr_seed=5,
        weightnet_hidden=[32, 32],
        epochs=400, lr=3e-3, train_seed=11, star=True, latent=32, hidden=64)

    results = run_sweep(config, args.param, args.values)
    print(f"{args.param:>8} {'top-1':>8}")
    for value, summary in results.items():
        print(f"{value:>8} {100 * summary['unseen_per_class_top1']:>7.2f}%")
    logger.info("artifacts under %s", out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
