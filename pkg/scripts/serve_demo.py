#!/usr/bin/env python3
"""Run the triage service on a freshly generated synthetic dataset.

Handy for exercising the HTTP API or developing the review frontend without
real data: generates a fixture, fits clusters, and serves until interrupted.
Labels persist to <data-dir>/labels.json; recompute artifacts land in
<data-dir>/recompute/.

Example:
    python3 scripts/serve_demo.py --data-dir /tmp/triage-demo --port 8710
"""

import argparse
import logging
import sys
from pathlib import Path

from visex.cluster import kmeans_fit
from visex.corpus import ingest_corpus
from visex.fixture import FixtureSpec, generate_fixture
from visex.triage import TriageStore, serve_triage

logger = logging.getLogger("serve_demo")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", required=True)
    parser.add_argument("--classes", type=int, default=12)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8710)
    parser.add_argument("--ui", help="directory of built frontend assets to serve")
    args = parser.parse_args(argv)

    data_dir = Path(args.data_dir)
    if not (data_dir / "corpus.jsonl").exists():
        generate_fixture(FixtureSpec(n_classes=args.classes, seed=args.seed),
                         out_dir=data_dir)
        logger.info("generated fixture in %s", data_dir)
    corpus = ingest_corpus(data_dir / "corpus.jsonl")
    model = kmeans_fit(corpus, args.k, seed=args.seed)
    store = TriageStore(data_dir / "labels.json", corpus, model)
    logger.info("serving %d sections and %d clusters on %s:%d",
                len(corpus.section_counts()), args.k, args.host, args.port)
    serve_triage(corpus, model, store, host=args.host, port=args.port,
                 recompute_dir=data_dir / "recompute", ui_dir=args.ui)
    return 0


if __name__ == "__main__":
    sys.exit(main())
