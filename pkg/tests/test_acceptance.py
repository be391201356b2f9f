"""Acceptance gate: one test per release criterion, one pass/fail line each.

Each criterion records a ``[criterion NN] <name>: PASS/FAIL`` line that the
shared test configuration echoes in an "acceptance criteria" section after
the run. Criteria with runtime budgets assert on wall-clock time as well.
"""

import time

import numpy as np
import pytest
from numpy.random import default_rng

from visex.cluster import kmeans_fit, save_cluster_model
from visex.corpus import ClassSplit, ImageRecord
from visex.evaluation import evaluate, harmonic_mean
from visex.filtering import FilterMode, apply_filter, filter_stats
from visex.fixture import (
    FixtureSpec, generate_fixture, generate_overlap_fixture, make_auto_labels,
)
from visex.mlp import numerical_gradient, relative_error
from visex.pipeline import PipelineConfig, run_pipeline
from visex.representations import (
    Representation, ReprTrainConfig, WeightNet, WeightedClassForward,
    _init_loss_and_grads, _margin_loss_and_grads, all_pairs, average_repr,
    build_representations, cosine, train_weightnet, train_weightnet_init,
    train_weightnet_margin, weighted_repr,
)
from visex.triage import (
    NONVISUAL, TriageLabels, TriageStore, VISUAL, create_app, load_labels,
)
from visex.zsl import DeviseModel, ZslTrainConfig, _loss_and_grads, train_devise
from tests.conftest import (
    hinge_clear, make_corpus, record_criterion, sample_ranking_fixture,
    sample_weightnet_fixture,
)


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    line = record_criterion(num, name, ok, detail)
    assert ok, line


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# ---------------------------------------------------------------------------
# 1. Analytic gradients of all three training losses match finite differences
# ---------------------------------------------------------------------------

def _check_ranking_gradients(n: int) -> float:
    worst, checked, seed = 0.0, 0, 0
    while checked < n and seed < 200:
        fx = sample_ranking_fixture(seed)
        seed += 1
        if fx is None:
            continue
        model, X, A, y_idx, neg_mask = fx
        grads = _loss_and_grads(model, X, y_idx, A, neg_mask)
        x0 = model.pack()

        def f(x):
            model.unpack(x)
            return _loss_and_grads(model, X, y_idx, A, neg_mask).loss

        num = numerical_gradient(f, x0)
        model.unpack(x0)
        flat = np.concatenate([g.ravel() for g in grads.flat])
        worst = max(worst, relative_error(flat, num))
        checked += 1
    assert checked == n
    return worst


def _check_init_gradients(n: int) -> float:
    worst, checked, seed = 0.0, 0, 0
    while checked < n and seed < 400:
        fx = sample_weightnet_fixture(seed)
        seed += 1
        if fx is None:
            continue
        net, matrices = fx
        rng = default_rng(seed)
        means = {c: m.mean(axis=0) + 0.8 * rng.standard_normal(m.shape[1])
                 for c, m in matrices.items()}
        cosines = [cosine(WeightedClassForward(net, m, True).vector, means[c])
                   for c, m in matrices.items()]
        if not hinge_clear(cosines, 0.9):
            continue
        loss, grads = _init_loss_and_grads(net, matrices, means, 0.9, True)
        if loss == 0.0:
            continue
        x0 = net.mlp.pack()

        def f(x):
            net.mlp.unpack(x)
            return _init_loss_and_grads(net, matrices, means, 0.9, True,
                                        want_grads=False)[0]

        num = numerical_gradient(f, x0)
        net.mlp.unpack(x0)
        worst = max(worst, relative_error(
            np.concatenate([g.ravel() for g in grads]), num))
        checked += 1
    assert checked == n
    return worst


def _check_margin_gradients(n: int) -> float:
    worst, checked, seed = 0.0, 0, 0
    while checked < n and seed < 600:
        fx = sample_weightnet_fixture(seed, n_classes=3, m=4, dim=5)
        seed += 1
        if fx is None:
            continue
        net, matrices = fx
        base = default_rng(seed).standard_normal(5) * 2.0
        matrices = {c: m + base for c, m in matrices.items()}
        if any(np.linalg.norm(m, axis=1).min() < 1e-6 for m in matrices.values()):
            continue
        pairs = all_pairs(sorted(matrices))
        fwd = {c: WeightedClassForward(net, m, True) for c, m in matrices.items()}
        cosines = [cosine(fwd[a].vector, fwd[b].vector) for a, b in pairs]
        if not hinge_clear(cosines, 0.95) or max(cosines) <= 0.95:
            continue
        loss, grads = _margin_loss_and_grads(net, matrices, pairs, 0.95, True)
        x0 = net.mlp.pack()

        def f(x):
            net.mlp.unpack(x)
            return _margin_loss_and_grads(net, matrices, pairs, 0.95, True,
                                          want_grads=False)[0]

        num = numerical_gradient(f, x0)
        net.mlp.unpack(x0)
        worst = max(worst, relative_error(
            np.concatenate([g.ravel() for g in grads]), num))
        checked += 1
    assert checked == n
    return worst


def test_criterion_01_gradient_checks():
    start = time.monotonic()
    worst_rank = _check_ranking_gradients(20)
    worst_init = _check_init_gradients(20)
    worst_margin = _check_margin_gradients(20)
    elapsed = time.monotonic() - start
    worst = max(worst_rank, worst_init, worst_margin)
    _report(1, "loss gradients match central finite differences",
            worst <= 1e-4 and elapsed < 30.0,
            f"worst rel err {worst:.2e} over 3×20 fixtures in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Softmax weight law: positive, unit-sum; zero net is exactly uniform
# ---------------------------------------------------------------------------

def test_criterion_02_softmax_weight_law():
    worst_sum = 0.0
    for seed in range(1000):
        rng = default_rng(seed)
        m = int(rng.integers(2, 10))
        dim = int(rng.integers(2, 9))
        net = WeightNet(dim, hidden=(5, 4), rng=rng)
        for p in net.mlp.params:
            p += 0.3 * rng.standard_normal(p.shape)
        matrix = rng.standard_normal((m, dim)) * float(rng.uniform(0.5, 3.0))
        lam = WeightedClassForward(net, matrix, True).lam
        assert (lam > 0).all()
        worst_sum = max(worst_sum, abs(float(lam.sum()) - 1.0))
    assert worst_sum <= 1e-9

    rng = default_rng(0)
    net = WeightNet(6, hidden=(4, 4), rng=rng)
    for p in net.mlp.params:
        p[...] = 0.0
    matrix = rng.standard_normal((7, 6))
    fwd = WeightedClassForward(net, matrix, True)
    uniform = np.array_equal(fwd.lam, np.full(7, 1.0 / 7))
    aligned = cosine(fwd.vector, matrix.mean(axis=0)) == pytest.approx(1.0, abs=1e-12)
    _report(2, "softmax weights positive, unit-sum; zero net exactly uniform",
            uniform and aligned,
            f"1000 draws, worst |Σλ−1| = {worst_sum:.2e}")


# ---------------------------------------------------------------------------
# 3. First training phase keeps every class aligned with its plain mean
# ---------------------------------------------------------------------------

def test_criterion_03_alignment_phase_contract():
    start = time.monotonic()
    fx = generate_fixture(FixtureSpec())  # 20 classes
    filt = apply_filter(fx.corpus, FilterMode.NO)
    cfg = ReprTrainConfig(seed=0, epochs_init=300, lr=5e-3)
    net = WeightNet(16, hidden=(32, 32), rng=default_rng(0))
    net, _ = train_weightnet_init(net, fx.corpus, filt, cfg)
    cosines = {c: _cos(weighted_repr(net, doc, fx.corpus).vector,
                       average_repr(doc, fx.corpus).vector)
               for c, doc in filt.items()}
    elapsed = time.monotonic() - start
    _report(3, "post-init cos(weighted, mean) > 0.9 for all 20 classes",
            min(cosines.values()) > 0.9 and elapsed < 120.0,
            f"min cos {min(cosines.values()):.4f} in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. Margin phase separates an over-similar pair without moving the rest
# ---------------------------------------------------------------------------

def test_criterion_04_margin_phase_contract():
    corpus, (c1, c2) = generate_overlap_fixture(
        n_classes=6, sentences_per_class=12, share_fraction=0.8,
        dimension=16, seed=0)
    filt = apply_filter(corpus, FilterMode.NO)
    means = {c: average_repr(doc, corpus).vector for c, doc in filt.items()}
    pre_mean_cos = _cos(means[c1], means[c2])

    cfg = ReprTrainConfig(seed=0, epochs_init=300, epochs_margin=500, lr=5e-3)
    net = WeightNet(16, hidden=(32, 32), rng=default_rng(0))
    net, _ = train_weightnet_init(net, corpus, filt, cfg)
    classes = sorted(filt)

    def pair_cosines():
        vecs = {c: weighted_repr(net, filt[c], corpus).vector for c in classes}
        return {(a, b): _cos(vecs[a], vecs[b]) for a, b in all_pairs(classes)}

    pre = pair_cosines()
    net, _ = train_weightnet_margin(net, corpus, filt, cfg)
    post = pair_cosines()
    key = (min(c1, c2), max(c1, c2))
    drift = max(abs(post[p] - pre[p]) for p in pre if p != key)
    ok = pre_mean_cos >= 0.96 and post[key] < 0.95 and drift <= 0.05
    _report(4, "over-similar pair pushed below 0.95; other pairs move ≤ 0.05",
            ok, f"pair {pre_mean_cos:.4f}→{post[key]:.4f}, "
                f"max drift elsewhere {drift:.4f}")


# ---------------------------------------------------------------------------
# 5. End-to-end synthetic zero-shot run beats the unfiltered baseline
# ---------------------------------------------------------------------------

def test_criterion_05_end_to_end_zero_shot():
    start = time.monotonic()
    fx = generate_fixture(FixtureSpec(seed=42, test_images_per_class=20))
    corpus, split = fx.corpus, fx.split

    km = kmeans_fit(corpus, 16, seed=3)
    labels = make_auto_labels(corpus, fx.manifest, km)
    filt = apply_filter(corpus, FilterMode.VIS_SEC_CLU, labels=labels,
                        cluster_model=km)
    net, _ = train_weightnet(corpus, filt,
                             ReprTrainConfig(seed=5, epochs_init=200,
                                             epochs_margin=200),
                             hidden=(32, 32))
    reprs_filtered = build_representations(corpus, filt, "weighted", net=net)
    reprs_baseline = build_representations(
        corpus, apply_filter(corpus, FilterMode.NO), "average")

    zcfg = ZslTrainConfig(epochs=400, seed=11, lr=3e-3)
    unseen_images = [im for im in fx.test_images if im.class_id in split.unseen]
    accuracy = {}
    for tag, reprs in [("filtered", reprs_filtered), ("baseline", reprs_baseline)]:
        model = DeviseModel.create(16, 16, star=True, hidden=64, latent=32,
                                   rng=default_rng(11))
        seen = {c: r for c, r in reprs.items() if c in split.seen}
        model, _ = train_devise(model, fx.train_images, seen, split, zcfg)
        report = evaluate(model, unseen_images, reprs, split.unseen, split,
                          split_name="unseen")
        accuracy[tag] = report.per_class_top1
    elapsed = time.monotonic() - start
    ok = (accuracy["filtered"] >= 0.90
          and accuracy["filtered"] > accuracy["baseline"]
          and elapsed < 300.0)
    _report(5, "filtered weighted run ≥ 90% unseen top-1 and beats baseline",
            ok, f"filtered {accuracy['filtered']:.2%} vs baseline "
                f"{accuracy['baseline']:.2%} in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 6. Metric arithmetic: per-class vs per-sample example, harmonic mean
# ---------------------------------------------------------------------------

def test_criterion_06_metric_arithmetic():
    classes = ["a", "b"]
    reprs = {c: Representation(c, np.eye(2)[i], "external")
             for i, c in enumerate(classes)}
    model = DeviseModel.create(2, 2, star=False, rng=default_rng(0))
    model.M[...] = np.eye(2)
    e = np.eye(2)
    images = [ImageRecord("img0", "a", e[0]),
              ImageRecord("img1", "b", e[1]), ImageRecord("img2", "b", e[1]),
              ImageRecord("img3", "b", e[0]), ImageRecord("img4", "b", e[0])]
    split = ClassSplit(seen=set(), unseen={"a", "b"})
    report = evaluate(model, images, reprs, classes, split)
    exact = (report.per_class_top1 == 0.75 and report.per_sample_top1 == 0.60)

    h = harmonic_mean(17.10, 74.70)
    formula = 2.0 * 17.10 * 74.70 / (17.10 + 74.70)
    harmonic_ok = abs(h - 27.80) <= 0.05 and abs(h - formula) <= 1e-9
    _report(6, "per-class 75% vs per-sample 60% exact; H(17.10, 74.70) ≈ 27.80",
            exact and harmonic_ok,
            f"per-class {report.per_class_top1:.2%}, per-sample "
            f"{report.per_sample_top1:.2%}, H = {h:.4f}")


# ---------------------------------------------------------------------------
# 7. K-means: objective descent, exact small-case optimum, determinism
# ---------------------------------------------------------------------------

def test_criterion_07_kmeans_contract(tmp_path):
    square = make_corpus({
        "class000": [np.array([0.0, 0.0]), np.array([0.0, 1.0])],
        "class001": [np.array([10.0, 0.0]), np.array([10.0, 1.0])],
    })
    model = kmeans_fit(square, k=2, seed=0)
    centroids = sorted(map(tuple, model.centroids.tolist()))
    exact = centroids == [(0.0, 0.5), (10.0, 0.5)]

    rng = default_rng(7)
    corpus = make_corpus({f"class{c:03d}": [rng.standard_normal(5)
                                            for _ in range(10)]
                          for c in range(4)})
    monotone = True
    for seed in range(4):
        objectives = [kmeans_fit(corpus, k=5, seed=seed, max_iter=m).objective
                      for m in range(1, 9)]
        monotone &= all(b <= a + 1e-12 for a, b in zip(objectives, objectives[1:]))

    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_cluster_model(kmeans_fit(corpus, k=4, seed=9), a)
    save_cluster_model(kmeans_fit(corpus, k=4, seed=9), b)
    identical = a.read_bytes() == b.read_bytes()
    _report(7, "k-means descends, hits exact small-case optimum, reruns identical",
            exact and monotone and identical,
            f"centroids {centroids}, 4 seeds monotone, files byte-equal")


# ---------------------------------------------------------------------------
# 8. Filter algebra: union mode is the union; fallback iff empty selection
# ---------------------------------------------------------------------------

def test_criterion_08_filter_algebra():
    fx = generate_fixture(FixtureSpec())
    km = kmeans_fit(fx.corpus, 16, seed=3)
    labels = make_auto_labels(fx.corpus, fx.manifest, km)
    sec = apply_filter(fx.corpus, FilterMode.VIS_SEC, labels)
    clu = apply_filter(fx.corpus, FilterMode.VIS_CLU, labels, km)
    both = apply_filter(fx.corpus, FilterMode.VIS_SEC_CLU, labels, km)
    union_ok, dedup_ok, fallback_ok = True, True, True
    for class_id in fx.corpus.classes():
        sec_ids = {k.sentence_id for k in sec[class_id].kept if not k.fallback}
        clu_ids = {k.sentence_id for k in clu[class_id].kept if not k.fallback}
        kept = both[class_id].kept
        union_ids = {k.sentence_id for k in kept if not k.fallback}
        union_ok &= union_ids == sec_ids | clu_ids
        ids = both[class_id].sentence_ids()
        dedup_ok &= len(ids) == len(set(ids))
        # fallback must appear exactly when the union selection is empty
        fallback_ok &= any(k.fallback for k in kept) == (not sec_ids | clu_ids)

    # degenerate labels: nothing visual anywhere → every class falls back
    rng = default_rng(0)
    bare = make_corpus({f"class{c:03d}": [rng.standard_normal(4)
                                          for _ in range(3)]
                        for c in range(2)}, section="history")
    bare_km = kmeans_fit(bare, k=2, seed=0)
    nonvis = TriageLabels(sections={"history": NONVISUAL},
                          clusters={0: NONVISUAL, 1: NONVISUAL},
                          cluster_model_id=bare_km.model_id, revision=1)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        empty_union = apply_filter(bare, FilterMode.VIS_SEC_CLU, nonvis, bare_km)
    all_fell_back = all(doc.kept and all(k.fallback for k in doc.kept)
                        for doc in empty_union.values())
    _report(8, "union filter equals union of parts; fallback iff empty",
            union_ok and dedup_ok and fallback_ok and all_fell_back,
            f"{len(fx.corpus.classes())} labeled classes + degenerate case")


# ---------------------------------------------------------------------------
# 9. Same seeds, same bytes: full pipeline manifests are reproducible
# ---------------------------------------------------------------------------

def test_criterion_09_pipeline_determinism(tmp_path):
    spec = FixtureSpec(n_classes=8, sentences_per_class=10, seed=0,
                       dimension=8, train_images_per_class=4,
                       test_images_per_class=3, noise=0.2)
    generate_fixture(spec, out_dir=tmp_path / "data")

    def config(out):
        d = tmp_path / "data"
        return PipelineConfig(
            corpus_path=str(d / "corpus.jsonl"),
            train_images_path=str(d / "images_train.jsonl"),
            test_images_path=str(d / "images_test.jsonl"),
            split_path=str(d / "split.json"), out_dir=str(tmp_path / out),
            mode="no", repr_kind="average", k=4, epochs=30, lr=1e-2,
            batch_size=16, star=False)

    run_pipeline(config("r1"))
    run_pipeline(config("r2"))
    first = (tmp_path / "r1" / "manifest.json").read_bytes()
    second = (tmp_path / "r2" / "manifest.json").read_bytes()
    _report(9, "two same-seed pipeline runs produce byte-identical manifests",
            first == second, f"{len(first)} bytes each")


# ---------------------------------------------------------------------------
# 10. Triage service round-trip (the UI's server-side contract)
# ---------------------------------------------------------------------------

def test_criterion_10_triage_round_trip(tmp_path):
    from fastapi.testclient import TestClient

    fx = generate_fixture(FixtureSpec(n_classes=6, sentences_per_class=10,
                                      seed=0, dimension=8,
                                      train_images_per_class=2,
                                      test_images_per_class=2))
    km = kmeans_fit(fx.corpus, k=4, seed=0)
    labels_path = tmp_path / "labels.json"
    store = TriageStore(labels_path, fx.corpus, km)
    out = tmp_path / "artifacts"
    with TestClient(create_app(fx.corpus, km, store, recompute_dir=out)) as c:
        c.post("/sections/morphology/label", json={"verdict": VISUAL})
        c.post("/clusters/0/label", json={"verdict": VISUAL})
        report = c.post("/recompute").json()
        stale = c.post("/sections/morphology/label",
                       json={"verdict": NONVISUAL, "revision": 1})
    # the verdict survives a full reload from disk
    reloaded = TriageStore(labels_path, fx.corpus, km).snapshot()
    persists = reloaded.sections["morphology"] == VISUAL

    # reported retention matches filter statistics recomputed independently
    saved = load_labels(labels_path)
    retention_ok = True
    for mode, entry in report["modes"].items():
        filtered = apply_filter(fx.corpus, FilterMode(mode), saved, km)
        stats = filter_stats(filtered, fx.corpus)
        retention_ok &= entry["retention"] == pytest.approx(stats["retention"])
        retention_ok &= (out / f"filtered_{mode}.jsonl").exists()

    surfaced = stale.status_code == 409 and "revision" in stale.json()["detail"]
    _report(10, "triage labels persist; recompute matches filter stats; "
                "stale writes surface as conflicts",
            persists and retention_ok and surfaced,
            f"modes checked: {sorted(report['modes'])}")
