"""Human triage: visual/nonvisual verdicts on sections and clusters.

The store keeps one JSON file, rewritten atomically (temp + rename) on every
mutation, with a revision counter that strictly increases. Verdicts are
three-state so coverage of the manual pass stays auditable. The HTTP layer
serves snapshots to the review UI and serializes writes; it is the operator
console for the semi-automatic extraction loop.
"""


import copy
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import ClusterModel, summarize_clusters
from .corpus import Corpus
from .errors import StaleModelError, StaleRevisionError, ValidationError
from .fileio import atomic_write_json, read_json

logger = logging.getLogger(__name__)

VISUAL = "visual"
NONVISUAL = "nonvisual"
UNLABELED = "unlabeled"
VERDICTS = (VISUAL, NONVISUAL, UNLABELED)


@dataclass
class TriageLabels:
    sections: dict[str, str] = field(default_factory=dict)
    clusters: dict[int, str] = field(default_factory=dict)
    cluster_model_id: str | None = None
    revision: int = 0

    def visual_sections(self) -> set[str]:
        return {s for s, v in self.sections.items() if v == VISUAL}

    def visual_clusters(self) -> set[int]:
        return {i for i, v in self.clusters.items() if v == VISUAL}

    def counts(self) -> dict:
        def tally(values):
            out = {v: 0 for v in VERDICTS}
            for v in values:
                out[v] += 1
            return out

        return {"sections": tally(self.sections.values()),
                "clusters": tally(self.clusters.values())}

    def to_payload(self) -> dict:
        return {
            "sections": dict(sorted(self.sections.items())),
            "clusters": {str(i): v for i, v in sorted(self.clusters.items())},
            "cluster_model_id": self.cluster_model_id,
            "revision": self.revision,
        }

    @classmethod
    def from_payload(cls, raw: dict) -> "TriageLabels":
        return cls(
            sections=dict(raw.get("sections", {})),
            clusters={int(k): v for k, v in raw.get("clusters", {}).items()},
            cluster_model_id=raw.get("cluster_model_id"),
            revision=int(raw.get("revision", 0)),
        )


class TriageStore:
    """Durable label storage bound to one corpus and one cluster model.

    Many readers, single-writer mutations under a lock. Loading a file whose
    cluster_model_id differs from the bound model resets all cluster labels
    to unlabeled (indices would be meaningless against the new model).
    """

    def __init__(self, path: str | os.PathLike, corpus: Corpus,
                 cluster_model: ClusterModel | None = None):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._sections = set(corpus.section_counts())
        self._n_clusters = cluster_model.n_clusters if cluster_model else 0
        model_id = cluster_model.model_id if cluster_model else None

        if self.path.exists():
            labels = TriageLabels.from_payload(read_json(self.path))
            invalidated = False
            if labels.cluster_model_id != model_id:
                labels.clusters = {}
                labels.cluster_model_id = model_id
                invalidated = True
                logger.warning("cluster labels invalidated: store was bound to a "
                               "different cluster model")
        else:
            labels = TriageLabels(cluster_model_id=model_id)
            invalidated = True

        # Materialize unlabeled entries so coverage is auditable.
        for name in self._sections:
            labels.sections.setdefault(name, UNLABELED)
        for idx in range(self._n_clusters):
            labels.clusters.setdefault(idx, UNLABELED)
        self._labels = labels
        if invalidated:
            self._labels.revision += 1
            self._persist()

    def _persist(self) -> None:
        atomic_write_json(self.path, self._labels.to_payload())

    def snapshot(self) -> TriageLabels:
        with self._lock:
            return copy.deepcopy(self._labels)

    @property
    def cluster_model_id(self) -> str | None:
        return self._labels.cluster_model_id

    def _check_preconditions(self, verdict: str, expected_revision: int | None,
                             expected_model_id: str | None) -> None:
        if verdict not in VERDICTS:
            raise ValidationError(f"unknown verdict {verdict!r}; expected one of {VERDICTS}")
        if expected_model_id is not None and expected_model_id != self._labels.cluster_model_id:
            raise StaleModelError(expected_model_id, self._labels.cluster_model_id or "")
        if expected_revision is not None and expected_revision != self._labels.revision:
            raise StaleRevisionError(expected_revision, self._labels.revision)

    def label_section(self, section: str, verdict: str,
                      expected_revision: int | None = None,
                      expected_model_id: str | None = None) -> TriageLabels:
        with self._lock:
            if section not in self._sections:
                raise ValidationError(f"unknown section {section!r}")
            self._check_preconditions(verdict, expected_revision, expected_model_id)
            self._labels.sections[section] = verdict
            self._labels.revision += 1
            self._persist()
            return copy.deepcopy(self._labels)

    def label_cluster(self, index: int, verdict: str,
                      expected_revision: int | None = None,
                      expected_model_id: str | None = None) -> TriageLabels:
        with self._lock:
            if not 0 <= index < self._n_clusters:
                raise ValidationError(
                    f"index out of range: {index} (model has {self._n_clusters} clusters)"
                )
            self._check_preconditions(verdict, expected_revision, expected_model_id)
            self._labels.clusters[index] = verdict
            self._labels.revision += 1
            self._persist()
            return copy.deepcopy(self._labels)


def load_labels(path: str | os.PathLike) -> TriageLabels:
    """Read a labels file without binding it to a store (pipeline use)."""
    return TriageLabels.from_payload(read_json(path))


def save_labels(labels: TriageLabels, path: str | os.PathLike) -> None:
    atomic_write_json(path, labels.to_payload())


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------

def create_app(corpus: Corpus, cluster_model: ClusterModel | None,
               store: TriageStore, n_exemplars: int = 5,
               sample_sentences: int = 3, recompute_dir: str | os.PathLike | None = None,
               ui_dir: str | os.PathLike | None = None):
    """Build the FastAPI app exposing the triage API (and the UI, if built)."""
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.responses import FileResponse

    app = FastAPI(title="visex triage")

    section_samples: dict[str, list[str]] = {}
    section_freq = corpus.section_counts()
    for sent in corpus.iter_sentences():
        bucket = section_samples.setdefault(sent.section, [])
        if len(bucket) < sample_sentences and sent.text:
            bucket.append(sent.text)

    summaries = (summarize_clusters(cluster_model, corpus, n_exemplars=max(n_exemplars, 50))
                 if cluster_model else [])

    def summary_json(summary, limit):
        return {
            "cluster_index": summary.cluster_index,
            "size": summary.size,
            "exemplars": [
                {
                    "sentence_id": e.sentence_id,
                    "class_id": e.class_id,
                    "text": e.text,
                    "distance": e.distance,
                }
                for e in summary.exemplars[:limit]
            ],
            "top_sections": summary.top_sections,
        }

    def error_code(exc: Exception) -> int:
        if isinstance(exc, (StaleRevisionError, StaleModelError)):
            return 409
        return 404

    @app.get("/labels")
    def get_labels():
        return store.snapshot().to_payload()

    @app.get("/sections")
    def get_sections():
        labels = store.snapshot()
        return {
            "revision": labels.revision,
            "sections": [
                {
                    "name": name,
                    "frequency": section_freq[name],
                    "sample_sentences": section_samples.get(name, []),
                    "verdict": labels.sections.get(name, UNLABELED),
                }
                for name in sorted(section_freq)
            ],
        }

    @app.post("/sections/{name:path}/label")
    async def post_section(name: str, request: Request):
        body = await request.json()
        try:
            labels = store.label_section(
                name, body.get("verdict", ""),
                expected_revision=body.get("revision"),
                expected_model_id=body.get("cluster_model_id"),
            )
        except (ValidationError, StaleRevisionError, StaleModelError) as exc:
            raise HTTPException(status_code=error_code(exc), detail=str(exc))
        return {"section": name, "verdict": labels.sections[name],
                "revision": labels.revision}

    @app.get("/clusters")
    def get_clusters():
        labels = store.snapshot()
        return {
            "revision": labels.revision,
            "cluster_model_id": labels.cluster_model_id,
            "clusters": [
                dict(summary_json(s, n_exemplars),
                     verdict=labels.clusters.get(s.cluster_index, UNLABELED))
                for s in summaries
            ],
        }

    @app.get("/clusters/{index}")
    def get_cluster(index: int):
        if not 0 <= index < len(summaries):
            raise HTTPException(status_code=404, detail=f"index out of range: {index}")
        labels = store.snapshot()
        return dict(summary_json(summaries[index], None),
                    verdict=labels.clusters.get(index, UNLABELED),
                    revision=labels.revision)

    @app.post("/clusters/{index}/label")
    async def post_cluster(index: int, request: Request):
        body = await request.json()
        try:
            labels = store.label_cluster(
                index, body.get("verdict", ""),
                expected_revision=body.get("revision"),
                expected_model_id=body.get("cluster_model_id"),
            )
        except (ValidationError, StaleRevisionError, StaleModelError) as exc:
            raise HTTPException(status_code=error_code(exc), detail=str(exc))
        return {"cluster_index": index, "verdict": labels.clusters[index],
                "revision": labels.revision}

    @app.post("/recompute")
    def recompute():
        from .filtering import FilterMode, apply_filter, filter_stats, save_filtered
        from .representations import build_representations, save_representations

        labels = store.snapshot()
        if not labels.visual_sections() and not labels.visual_clusters():
            raise HTTPException(status_code=409,
                                detail="no visual labels yet; nothing to recompute")
        modes = [FilterMode.VIS_SEC]
        if cluster_model is not None:
            modes += [FilterMode.VIS_CLU, FilterMode.VIS_SEC_CLU]
        report: dict = {"revision": labels.revision, "modes": {}}
        import warnings as _warnings
        for mode in modes:
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                filtered = apply_filter(corpus, mode, labels=labels,
                                        cluster_model=cluster_model)
            stats = filter_stats(filtered, corpus)
            report["modes"][mode.value] = {
                "kept": stats["kept"],
                "total": stats["total"],
                "retention": stats["retention"],
                "fallback_classes": stats["fallback_classes"],
            }
            if recompute_dir is not None:
                out = Path(recompute_dir)
                out.mkdir(parents=True, exist_ok=True)
                save_filtered(filtered, out / f"filtered_{mode.value}.jsonl")
                reprs = build_representations(corpus, filtered, kind="average")
                save_representations(reprs, out / f"repr_average_{mode.value}.jsonl")
        return report

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        index_html = Path(ui_dir) / "index.html"
        if index_html.exists():
            @app.get("/")
            def index():
                return FileResponse(index_html)

        app.mount("/ui", StaticFiles(directory=str(ui_dir)), name="ui")

    return app


def serve_triage(corpus: Corpus, cluster_model: ClusterModel | None,
                 store: TriageStore, host: str = "127.0.0.1", port: int = 8710,
                 recompute_dir: str | os.PathLike | None = None,
                 ui_dir: str | os.PathLike | None = None) -> None:
    """Run the triage service until interrupted. Raises if the port is taken."""
    import uvicorn

    app = create_app(corpus, cluster_model, store, recompute_dir=recompute_dir,
                     ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
