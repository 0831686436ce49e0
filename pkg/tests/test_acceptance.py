"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS/FAIL lines as they complete.
"""

import itertools
import json
import time

import numpy as np

from gmembed.cli import main as cli_main
from gmembed.data import (
    Dataset,
    apply_standardizer,
    fit_standardizer,
    save_csv_dataset,
    split,
    synth_blobs,
)
from gmembed.encoder import forward
from gmembed.gaussian_manifold import (
    ClassGaussians,
    estimate_class_means,
    posterior,
    posteriors,
    sgm_loss,
)
from gmembed.clustering import gmm_em, kmeans
from gmembed.metrics import knn_classify, nmi, retrieval_curve
from gmembed.numerics import seeded_rng
from gmembed.subspace import SubspaceConfig, train_subspace
from gmembed.trainer import TrainConfig, train_sgm
from gmembed.triplet import sample_triplets, triplet_loss

from helpers import central_diff, rel_err


def report_line(number, name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}")


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_gradient_fidelity():
    started = time.perf_counter()
    rng = seeded_rng(101)
    worst_sgm = 0.0
    for _ in range(20):
        c = int(rng.integers(2, 5))  # c <= 4
        per = int(rng.integers(2, 7))  # batch <= 24
        d = int(rng.integers(2, 9))  # d <= 8
        Z = rng.normal((per * c, d))
        labels = np.repeat(np.arange(c), per)
        reg = float(rng.uniform()) * 0.05
        priors = np.full(c, 1.0 / c)

        def loss_of(Zp):
            mu = estimate_class_means(Zp, labels, c)
            return sgm_loss(Zp, labels, ClassGaussians(mu, 0.5, priors), reg).loss

        g = ClassGaussians(estimate_class_means(Z, labels, c), 0.5, priors)
        analytic = sgm_loss(Z, labels, g, reg).grad
        worst_sgm = max(worst_sgm, rel_err(analytic, central_diff(loss_of, Z)))

    worst_triplet = 0.0
    done = 0
    while done < 20:
        c = int(rng.integers(2, 5))
        per = int(rng.integers(2, 7))
        d = int(rng.integers(2, 9))
        Z = rng.normal((per * c, d))
        labels = np.repeat(np.arange(c), per)
        triplets = sample_triplets(labels, 10, rng)
        margin = 0.2
        v = [
            float(np.sum((Z[t.anchor] - Z[t.positive]) ** 2))
            - float(np.sum((Z[t.anchor] - Z[t.negative]) ** 2))
            + margin
            for t in triplets
        ]
        if min(abs(x) for x in v) < 1e-3:
            continue
        _, analytic = triplet_loss(Z, triplets, margin)
        numeric = central_diff(lambda Zp: triplet_loss(Zp, triplets, margin)[0], Z)
        worst_triplet = max(worst_triplet, rel_err(analytic, numeric))
        done += 1

    elapsed = time.perf_counter() - started
    ok = worst_sgm < 1e-4 and worst_triplet < 1e-4 and elapsed < 30.0
    report_line(
        1, "gradient fidelity", ok,
        f"max rel err sgm={worst_sgm:.2e}, triplet={worst_triplet:.2e}, {elapsed:.1f}s",
    )
    assert worst_sgm < 1e-4
    assert worst_triplet < 1e-4
    assert elapsed < 30.0


# ---------------------------------------------------------------- criterion 2

def test_criterion_2_posterior_correctness():
    rng = seeded_rng(102)
    g = ClassGaussians(rng.normal((6, 5)) * 2, 0.5, np.full(6, 1.0 / 6))
    Z = rng.normal((10_000, 5)) * 5
    P = posteriors(Z, g)
    norm_err = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    in_range = bool(P.min() >= 0.0 and P.max() <= 1.0)

    sym = posterior([7.0, 0.0], ClassGaussians(
        np.array([[0.0, 1.0], [0.0, -1.0]]), 0.5, np.full(2, 0.5)))
    sym_err = float(np.max(np.abs(sym - 0.5)))

    priors = np.array([0.2, 0.3, 0.5])
    flat = ClassGaussians(np.tile([[1.0, -2.0]], (3, 1)), 0.5, priors)
    prior_err = float(np.max(np.abs(posterior([3.0, 4.0], flat) - priors)))

    ok = norm_err < 1e-9 and in_range and sym_err < 1e-12 and prior_err < 1e-12
    report_line(
        2, "posterior correctness", ok,
        f"norm err {norm_err:.1e} on 1e4 queries, symmetry {sym_err:.1e}, "
        f"prior recovery {prior_err:.1e}",
    )
    assert norm_err < 1e-9 and in_range
    assert sym_err < 1e-12
    assert prior_err < 1e-12


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_em_kmeans_sanity():
    rng = seeded_rng(103)
    violations = 0
    for i in range(100):
        m = int(rng.integers(20, 80))
        d = int(rng.integers(2, 6))
        k = int(rng.integers(1, 5))
        Z = rng.normal((m, d)) * (1.0 + float(rng.uniform()) * 3)
        model = gmm_em(Z, k, seeded_rng(500 + i))
        trace = model.ll_trace
        if not all(b >= a - 1e-9 for a, b in zip(trace, trace[1:])):
            violations += 1

    worst_gap = 0.0
    for i in range(8):
        Z = seeded_rng(600 + i).normal((12, 2))
        result = kmeans(Z, 2, seeded_rng(700 + i), restarts=8)
        best = np.inf
        for bits in itertools.product([0, 1], repeat=11):
            parts = np.array([0, *bits])
            if parts.min() == parts.max():
                continue
            inertia = 0.0
            for j in (0, 1):
                members = Z[parts == j]
                inertia += float(np.sum((members - members.mean(axis=0)) ** 2))
            best = min(best, inertia)
        worst_gap = max(worst_gap, abs(result.inertia - best))

    ok = violations == 0 and worst_gap < 1e-9
    report_line(
        3, "EM/k-means sanity", ok,
        f"LL monotone on 100/100 fits, kmeans vs exhaustive gap {worst_gap:.1e}",
    )
    assert violations == 0
    assert worst_gap < 1e-9


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_end_to_end_quality():
    started = time.perf_counter()
    rng = seeded_rng(1)
    dataset, _ = synth_blobs(8, 200, 32, 5.0, rng=rng.substream(0))
    train_set, test_set = split(dataset, (0.8, 0.2), rng.substream(1))
    mean, scale = fit_standardizer(train_set.X)
    Xtr = apply_standardizer(train_set.X, mean, scale)
    Xte = apply_standardizer(test_set.X, mean, scale)
    work = Dataset(Xtr, train_set.labels, 8)

    config = TrainConfig.with_preset("paper-meth", n_updates=2000, seed=1)
    params, _ = train_sgm(work, config, seeded_rng(1).substream(2))
    Ztr, _ = forward(params, Xtr)
    Zte, _ = forward(params, Xte)

    acc = float((knn_classify(Ztr, work.labels, Zte, 11) == test_set.labels).mean())
    km = kmeans(Zte, 8, seeded_rng(3), restarts=8)
    nmi_value = nmi(km.assignments, test_set.labels)
    recall1 = retrieval_curve(Zte, test_set.labels, (1,)).recall_at_k[1]
    elapsed = time.perf_counter() - started

    ok = acc >= 0.95 and nmi_value >= 0.90 and recall1 >= 0.95 and elapsed < 300
    report_line(
        4, "end-to-end quality", ok,
        f"knn11 acc={acc:.4f} (>=0.95), kmeans nmi={nmi_value:.4f} (>=0.90), "
        f"recall@1={recall1:.4f} (>=0.95), {elapsed:.0f}s (<300s)",
    )
    assert acc >= 0.95
    assert nmi_value >= 0.90
    assert recall1 >= 0.95
    assert elapsed < 300


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_retrieval_curve():
    rng = seeded_rng(105)
    ks = (1, 2, 4, 8, 16, 32)
    monotone = True
    for _ in range(10):
        m = int(rng.integers(40, 200))
        Z = rng.normal((m, 6))
        labels = np.array(rng.integers(0, 4, m))
        curve = retrieval_curve(Z, labels, ks)
        values = [curve.recall_at_k[k] for k in ks]
        monotone &= all(b >= a for a, b in zip(values, values[1:]))

    # brute-force oracle equality at m = 200
    Z = rng.normal((200, 5))
    labels = np.array(rng.integers(0, 3, 200))
    curve = retrieval_curve(Z, labels, ks)
    oracle_gap = 0.0
    for k in ks:
        hits, fractions = [], []
        for q in range(200):
            dists = sorted(
                (float(np.linalg.norm(Z[q] - Z[j])), j) for j in range(200) if j != q
            )
            same = [labels[j] == labels[q] for _, j in dists[:k]]
            hits.append(any(same))
            fractions.append(float(np.mean(same)))
        oracle_gap = max(
            oracle_gap,
            abs(curve.recall_at_k[k] - float(np.mean(hits))),
            abs(curve.acc_at_k[k] - float(np.mean(fractions))),
        )
    ok = monotone and oracle_gap == 0.0
    report_line(
        5, "retrieval curve", ok,
        f"recall@K monotone on 10 runs, oracle gap {oracle_gap:.1e} at m=200",
    )
    assert monotone
    assert oracle_gap == 0.0


# ---------------------------------------------------------------- criterion 6

def test_criterion_6_subspace_recovery():
    rng = seeded_rng(0)
    dataset, truth = synth_blobs(
        4, 150, 16, 5.0, sub_blobs=3, rng=rng.substream(0), sub_separation=2.0
    )
    mean, scale = fit_standardizer(dataset.X)
    work = Dataset(apply_standardizer(dataset.X, mean, scale), dataset.labels, 4)
    config = SubspaceConfig(
        train=TrainConfig(n_updates=500, seed=0),
        max_level=3,
        warm_start=True,
        em_restarts=4,
    )
    _, sublabels, lineage = train_subspace(work, config, seeded_rng(0))
    nmi_value = nmi(sublabels, truth.sub_ids)
    final_level = max(lineage.levels())
    mismatches = int((lineage.collapse(sublabels, final_level) != dataset.labels).sum())
    ok = nmi_value >= 0.85 and mismatches == 0
    report_line(
        6, "subspace recovery", ok,
        f"sub-blob nmi={nmi_value:.4f} (>=0.85), lineage mismatches={mismatches} (=0)",
    )
    assert nmi_value >= 0.85
    assert mismatches == 0


# ---------------------------------------------------------------- criterion 7

def deterministic_payload(path):
    with open(path) as fh:
        payload = json.load(fh)
    payload.pop("timing", None)
    return json.dumps(payload, sort_keys=True)


def test_criterion_7_cli_determinism(tmp_path):
    rng = seeded_rng(7)
    ds, _ = synth_blobs(3, 24, 5, 8.0, rng=rng)
    data = tmp_path / "d.csv"
    save_csv_dataset(ds, data)
    small = [
        "--set", "n_updates=8", "--set", "hidden=8", "--set", "embed_dim=4",
        "--set", "samples_per_class=4", "--set", "triplet_count=8",
        "--set", "eval_ks=1,2", "--set", "max_level=2", "--set", "min_members=4",
        "--set", "n_groups=3", "--set", "top_k=4",
    ]
    mismatch = []
    for run in ("a", "b"):
        base = tmp_path / run
        assert cli_main(["train", "--dataset", str(data), "--out", str(base / "t"),
                         "--seed", "5", *small]) == 0
        assert cli_main(["train", "--dataset", str(data), "--out", str(base / "tt"),
                         "--loss", "triplet", "--seed", "5", *small]) == 0
        ckpt = str(base / "t" / "checkpoint.json")
        assert cli_main(["embed", "--dataset", str(data), "--checkpoint", ckpt,
                         "--out", str(base / "m"), "--seed", "5", *small]) == 0
        assert cli_main(["eval", "--dataset", str(data), "--train-dataset", str(data),
                         "--checkpoint", ckpt, "--out", str(base / "e"),
                         "--seed", "5", *small]) == 0
        assert cli_main(["subspace", "--dataset", str(data), "--out", str(base / "s"),
                         "--seed", "5", *small]) == 0
        assert cli_main(["summarize", "--dataset", str(data), "--checkpoint", ckpt,
                         "--out", str(base / "g"), "--seed", "5", *small]) == 0
        assert cli_main(["retrieve", "--dataset", str(data), "--checkpoint", ckpt,
                         "--out", str(base / "r"), "--query-ids", "0,5", "--seed", "5",
                         *small]) == 0
        assert cli_main(["gradcheck", "--seed", "5", "--out", str(base / "gc")]) == 0

    pairs = [
        ("t/checkpoint.json", "bytes"), ("t/train_report.json", "json"),
        ("tt/checkpoint.json", "bytes"), ("tt/train_report.json", "json"),
        ("m/embeddings.csv", "bytes"),
        ("e/metrics_report.json", "json"),
        ("s/checkpoint.json", "bytes"), ("s/lineage.json", "json"),
        ("s/sublabels.csv", "bytes"), ("s/subspace_report.json", "json"),
        ("g/cluster_report.json", "json"), ("g/assignments.csv", "bytes"),
        ("r/retrieval.json", "json"),
        ("gc/gradcheck_report.json", "json"),
    ]
    for rel, kind in pairs:
        a, b = tmp_path / "a" / rel, tmp_path / "b" / rel
        if kind == "bytes":
            same = a.read_bytes() == b.read_bytes()
        else:
            same = deterministic_payload(a) == deterministic_payload(b)
        if not same:
            mismatch.append(rel)
    ok = not mismatch
    report_line(
        7, "CLI determinism", ok,
        "all 7 commands byte-identical over deterministic sections"
        if ok else f"mismatched: {mismatch}",
    )
    assert not mismatch


# ---------------------------------------------------------------- criterion 8

def test_criterion_8_comparative_pipeline(tmp_path):
    rng = seeded_rng(8)
    dataset, _ = synth_blobs(4, 60, 8, 6.0, rng=rng.substream(0))
    train_set, test_set = split(dataset, (0.75, 0.25), rng.substream(1))
    train_csv, test_csv = tmp_path / "train.csv", tmp_path / "test.csv"
    save_csv_dataset(train_set, train_csv)
    save_csv_dataset(test_set, test_csv)
    small = ["--set", "n_updates=300", "--set", "hidden=16", "--set", "embed_dim=8",
             "--set", "samples_per_class=8", "--set", "triplet_count=32",
             "--set", "eval_ks=1,2,4,8,16,32", "--set", "kmeans_restarts=4"]
    assert cli_main(["train", "--dataset", str(train_csv), "--out", str(tmp_path / "sgm"),
                     "--loss", "sgm", "--seed", "2", *small]) == 0
    assert cli_main(["train", "--dataset", str(train_csv), "--out", str(tmp_path / "tri"),
                     "--loss", "triplet", "--seed", "2", *small]) == 0
    assert cli_main([
        "eval", "--dataset", str(test_csv), "--train-dataset", str(train_csv),
        "--checkpoint", str(tmp_path / "sgm" / "checkpoint.json"),
        "--checkpoint", str(tmp_path / "tri" / "checkpoint.json"),
        "--out", str(tmp_path / "cmp"), "--seed", "2", *small,
    ]) == 0
    with open(tmp_path / "cmp" / "metrics_report.json") as fh:
        report = json.load(fh)
    models = report["models"]
    kinds = sorted(m["loss_kind"] for m in models.values())
    curves_complete = all(
        set(m["recall_at_k"]) == {"1", "2", "4", "8", "16", "32"}
        and set(m["acc_at_k"]) == {"1", "2", "4", "8", "16", "32"}
        for m in models.values()
    )
    ok = kinds == ["sgm", "triplet"] and curves_complete and len(models) == 2
    detail = ", ".join(
        f"{m['loss_kind']}: r@1={m['recall_at_k']['1']:.3f}" for m in models.values()
    )
    report_line(8, "comparative pipeline", ok, f"side-by-side curves emitted ({detail})")
    assert len(models) == 2
    assert kinds == ["sgm", "triplet"]
    assert curves_complete
