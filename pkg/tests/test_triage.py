"""Label store semantics (revisions, model binding, persistence) and the
HTTP annotation API."""

import threading

import pytest
from fastapi.testclient import TestClient

from visex.cluster import kmeans_fit
from visex.errors import StaleModelError, StaleRevisionError, ValidationError
from visex.fixture import FixtureSpec, generate_fixture
from visex.triage import (
    NONVISUAL, TriageLabels, TriageStore, UNLABELED, VISUAL, create_app,
    load_labels, save_labels,
)


@pytest.fixture
def fix():
    spec = FixtureSpec(n_classes=6, sentences_per_class=10, seed=0,
                       dimension=8, train_images_per_class=2,
                       test_images_per_class=2)
    return generate_fixture(spec)


@pytest.fixture
def model(fix):
    return kmeans_fit(fix.corpus, k=4, seed=0)


@pytest.fixture
def store(tmp_path, fix, model):
    return TriageStore(tmp_path / "labels.json", fix.corpus, model)


def client(fix, model, store, **kwargs):
    return TestClient(create_app(fix.corpus, model, store, **kwargs))


# ---------------------------------------------------------------------------
# store semantics
# ---------------------------------------------------------------------------

def test_store_starts_unlabeled(fix, store):
    labels = store.snapshot()
    assert set(labels.sections) == set(fix.corpus.section_counts())
    assert all(v == UNLABELED for v in labels.sections.values())
    assert set(labels.clusters) == {0, 1, 2, 3}
    assert all(v == UNLABELED for v in labels.clusters.values())
    assert labels.revision >= 1


def test_label_section_bumps_revision_and_persists(tmp_path, fix, model, store):
    before = store.snapshot().revision
    after = store.label_section("morphology", VISUAL)
    assert after.sections["morphology"] == VISUAL
    assert after.revision == before + 1
    # a fresh store sees the persisted verdict
    again = TriageStore(tmp_path / "labels.json", fix.corpus, model)
    assert again.snapshot().sections["morphology"] == VISUAL


def test_unknown_section_and_cluster_rejected(store):
    with pytest.raises(ValidationError, match="unknown section"):
        store.label_section("not-a-section", VISUAL)
    with pytest.raises(ValidationError):
        store.label_cluster(99, VISUAL)


def test_unknown_verdict_rejected(store):
    with pytest.raises(ValidationError, match="unknown verdict"):
        store.label_section("morphology", "maybe")


def test_stale_revision_rejected(store):
    rev = store.snapshot().revision
    store.label_section("morphology", VISUAL, expected_revision=rev)
    with pytest.raises(StaleRevisionError):
        store.label_section("history", VISUAL, expected_revision=rev)


def test_stale_model_rejected(fix, store):
    good = store.cluster_model_id
    store.label_cluster(0, VISUAL, expected_model_id=good)
    with pytest.raises(StaleModelError):
        store.label_cluster(0, VISUAL, expected_model_id="0" * 64)


def test_verdicts_can_be_revised(store):
    store.label_section("morphology", VISUAL)
    after = store.label_section("morphology", NONVISUAL)
    assert after.sections["morphology"] == NONVISUAL
    back = store.label_section("morphology", UNLABELED)
    assert back.sections["morphology"] == UNLABELED


def test_model_change_invalidates_cluster_labels(tmp_path, fix, model):
    path = tmp_path / "labels.json"
    store = TriageStore(path, fix.corpus, model)
    store.label_cluster(1, VISUAL)
    store.label_section("morphology", VISUAL)
    other = kmeans_fit(fix.corpus, k=5, seed=3)
    rebound = TriageStore(path, fix.corpus, other)
    labels = rebound.snapshot()
    assert all(v == UNLABELED for v in labels.clusters.values())
    assert set(labels.clusters) == set(range(5))
    assert labels.sections["morphology"] == VISUAL  # sections survive
    assert labels.cluster_model_id == other.model_id


def test_snapshot_is_isolated(store):
    snap = store.snapshot()
    snap.sections["morphology"] = VISUAL
    assert store.snapshot().sections["morphology"] == UNLABELED


def test_labels_file_round_trip(tmp_path):
    labels = TriageLabels(sections={"a": VISUAL}, clusters={0: NONVISUAL},
                          cluster_model_id="x" * 64, revision=7)
    path = tmp_path / "labels.json"
    save_labels(labels, path)
    again = load_labels(path)
    assert again.sections == labels.sections
    assert again.clusters == labels.clusters
    assert again.cluster_model_id == labels.cluster_model_id
    assert again.revision == 7


def test_concurrent_labelers_never_lose_writes(store):
    sections = sorted(store.snapshot().sections)
    errors = []

    def work(name):
        try:
            for _ in range(10):
                store.label_section(name, VISUAL)
                store.label_section(name, NONVISUAL)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(s,)) for s in sections[:4]]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    final = store.snapshot()
    # every write bumped the revision exactly once: 4 workers * 20 writes
    assert final.revision == 1 + 80
    assert all(final.sections[s] == NONVISUAL for s in sections[:4])


# ---------------------------------------------------------------------------
# HTTP API
# ---------------------------------------------------------------------------

def test_sections_endpoint_shape(fix, model, store):
    with client(fix, model, store) as c:
        data = c.get("/sections").json()
    assert data["revision"] == store.snapshot().revision
    names = {s["name"] for s in data["sections"]}
    assert names == set(fix.corpus.section_counts())
    for s in data["sections"]:
        assert s["verdict"] == UNLABELED
        assert s["frequency"] > 0
        assert isinstance(s["sample_sentences"], list)


def test_clusters_endpoint_shape(fix, model, store):
    with client(fix, model, store, n_exemplars=2) as c:
        data = c.get("/clusters").json()
    assert data["cluster_model_id"] == model.model_id
    assert len(data["clusters"]) == model.n_clusters
    for summary in data["clusters"]:
        assert len(summary["exemplars"]) <= 2
        assert summary["verdict"] == UNLABELED


def test_cluster_detail_and_404(fix, model, store):
    with client(fix, model, store) as c:
        detail = c.get("/clusters/0").json()
        assert detail["cluster_index"] == 0
        assert len(detail["exemplars"]) == detail["size"]
        assert c.get("/clusters/99").status_code == 404


def test_label_round_trip_over_http(fix, model, store):
    with client(fix, model, store) as c:
        rev = c.get("/labels").json()["revision"]
        resp = c.post("/sections/morphology/label",
                      json={"verdict": "visual", "revision": rev})
        assert resp.status_code == 200
        assert resp.json()["verdict"] == VISUAL
        new_rev = resp.json()["revision"]
        assert new_rev == rev + 1
        resp2 = c.post("/clusters/1/label",
                       json={"verdict": "nonvisual", "revision": new_rev,
                             "cluster_model_id": model.model_id})
        assert resp2.status_code == 200
        labels = c.get("/labels").json()
    assert labels["sections"]["morphology"] == VISUAL
    assert labels["clusters"]["1"] == NONVISUAL


def test_stale_revision_is_409_over_http(fix, model, store):
    with client(fix, model, store) as c:
        rev = c.get("/labels").json()["revision"]
        first = c.post("/sections/morphology/label",
                       json={"verdict": "visual", "revision": rev})
        assert first.status_code == 200
        second = c.post("/sections/history/label",
                        json={"verdict": "visual", "revision": rev})
        assert second.status_code == 409
        assert "revision" in second.json()["detail"]


def test_stale_model_is_409_over_http(fix, model, store):
    with client(fix, model, store) as c:
        resp = c.post("/clusters/0/label",
                      json={"verdict": "visual",
                            "cluster_model_id": "f" * 64})
        assert resp.status_code == 409


def test_unknown_names_are_404_over_http(fix, model, store):
    with client(fix, model, store) as c:
        assert c.post("/sections/mystery/label",
                      json={"verdict": "visual"}).status_code == 404
        assert c.post("/clusters/42/label",
                      json={"verdict": "visual"}).status_code == 404


def test_bad_verdict_is_404_class_error_over_http(fix, model, store):
    with client(fix, model, store) as c:
        resp = c.post("/sections/morphology/label", json={"verdict": "nah"})
        assert resp.status_code == 404
        assert "unknown verdict" in resp.json()["detail"]


def test_recompute_requires_visual_labels(fix, model, store):
    with client(fix, model, store) as c:
        assert c.post("/recompute").status_code == 409


def test_recompute_reports_all_modes(tmp_path, fix, model, store):
    out = tmp_path / "artifacts"
    with client(fix, model, store, recompute_dir=out) as c:
        c.post("/sections/morphology/label", json={"verdict": "visual"})
        c.post("/clusters/0/label", json={"verdict": "visual"})
        report = c.post("/recompute").json()
    assert set(report["modes"]) == {"vis-sec", "vis-clu", "vis-sec-clu"}
    for mode, entry in report["modes"].items():
        assert 0 < entry["kept"] <= entry["total"]
        assert entry["retention"] == pytest.approx(entry["kept"] / entry["total"])
        assert (out / f"filtered_{mode}.jsonl").exists()
        assert (out / f"repr_average_{mode}.jsonl").exists()


def test_app_works_without_cluster_model(tmp_path, fix):
    store = TriageStore(tmp_path / "labels.json", fix.corpus, None)
    with TestClient(create_app(fix.corpus, None, store)) as c:
        data = c.get("/clusters").json()
        assert data["clusters"] == []
        c.post("/sections/morphology/label", json={"verdict": "visual"})
        report = c.post("/recompute").json()
    assert set(report["modes"]) == {"vis-sec"}
